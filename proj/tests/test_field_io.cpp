#include <gtest/gtest.h>

#include <filesystem>

#include "lce/field_io.hpp"

using namespace lce;

namespace {

FieldState sample_state(bool plane)
{
  const Grid g = build_grid(1.0, 0.7, 0.3, 4, 3, 3, plane);
  FieldState s = identity_state(g);
  for (std::size_t n = 0; n < g.num_nodes(); ++n) {
    const Vec3 x = g.position(n);
    s.set_phi(n, {x[0] + 0.1 * std::sin(3.0 * x[1]), x[1] / 3.0, plane ? 0.0 : x[2] * 1.1});
    s.set_q(n, uniaxial_q(0.3 + 0.01 * n, {std::cos(0.1 * n), std::sin(0.1 * n), 0.0}));
  }
  return s;
}

}  // namespace

TEST(Csv, IdentityStateRows)
{
  const Grid g = build_grid(1, 1, 1, 2, 2, 2, false);
  const std::string csv = to_csv(identity_state(g));
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "x,y,z,phi1,phi2,phi3,q1,q2,q3,q4,q5");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 8);
  EXPECT_NE(csv.find("\n-1,-1,-1,-1,-1,-1,0,0,0,0,0\n"), std::string::npos);
  EXPECT_NE(csv.find("\n-1,-1,1,-1,-1,1,0,0,0,0,0\n"), std::string::npos);
  const FieldState back = parse_csv(csv);
  for (std::size_t n = 0; n < g.num_nodes(); ++n)
    for (int i = 0; i < 3; ++i) EXPECT_EQ(back.phi(n)[i], g.position(n)[i]);
}

TEST(Csv, RoundTripIsByteIdentical)
{
  for (bool plane : {false, true}) {
    const FieldState s = sample_state(plane);
    const std::string first = to_csv(s);
    const FieldState back = parse_csv(first, 0.3);
    EXPECT_EQ(back.u, s.u);
    EXPECT_EQ(back.grid.plane_strain, plane);
    EXPECT_EQ(to_csv(back), first);
  }
}

TEST(Csv, FileRoundTrip)
{
  const auto path = (std::filesystem::temp_directory_path() / "lce_field_io_test.csv").string();
  const FieldState s = sample_state(false);
  write_csv(s, path);
  const FieldState back = read_csv(path);
  EXPECT_EQ(read_text(path), to_csv(back));
  std::filesystem::remove(path);
}

TEST(Csv, RejectsMalformedInput)
{
  EXPECT_THROW(parse_csv("a,b\n1,2\n"), IoError);
  EXPECT_THROW(parse_csv(std::string(csv_header) + "\n"), IoError);
  EXPECT_THROW(parse_csv(std::string(csv_header) + "\n1,2,3\n"), IoError);
  EXPECT_THROW(read_csv("/nonexistent/dir/file.csv"), IoError);
}

TEST(Vtk, HeaderMatchesTemplate)
{
  const Grid g = build_grid(1, 1, 1, 2, 2, 2, false);
  const std::string vtk = to_vtk(identity_state(g));
  const std::string expected_head =
      "# vtk DataFile Version 3.0\n"
      "lce field\n"
      "ASCII\n"
      "DATASET STRUCTURED_POINTS\n"
      "DIMENSIONS 2 2 2\n"
      "ORIGIN -1 -1 -1\n"
      "SPACING 2 2 2\n"
      "POINT_DATA 8\n"
      "VECTORS phi double\n"
      "-1 -1 -1\n"
      "1 -1 -1\n";
  EXPECT_EQ(vtk.substr(0, expected_head.size()), expected_head);
  for (int m = 1; m <= 5; ++m) {
    EXPECT_NE(vtk.find("SCALARS q" + std::to_string(m) + " double 1\nLOOKUP_TABLE default\n"), std::string::npos);
  }
}

TEST(Vtk, PlaneStrainUsesSingleLayer)
{
  const std::string vtk = to_vtk(sample_state(true));
  EXPECT_NE(vtk.find("DIMENSIONS 4 3 1\n"), std::string::npos);
  EXPECT_NE(vtk.find("POINT_DATA 12\n"), std::string::npos);
}
