#pragma once

/**
 * @file field_io.hpp
 *
 * @brief Snapshot files for FieldState.
 *
 * CSV: header `x,y,z,phi1,phi2,phi3,q1,q2,q3,q4,q5`, one row per node in
 * node order (z fastest), every value printed with %.17g so a read/write
 * cycle reproduces the file byte for byte.
 *
 * VTK: legacy ASCII STRUCTURED_POINTS with points in VTK order (x fastest),
 * a `phi` vector field and scalar fields q1..q5.
 */

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "lce/discretization.hpp"
#include "lce/errors.hpp"

namespace lce {

inline constexpr const char* csv_header = "x,y,z,phi1,phi2,phi3,q1,q2,q3,q4,q5";

namespace detail {

inline void append_number(std::string& out, double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

}  // namespace detail

inline std::string to_csv(const FieldState& s)
{
  std::string out = csv_header;
  out += '\n';
  for (std::size_t n = 0; n < s.grid.num_nodes(); ++n) {
    const Vec3 x = s.grid.position(n);
    for (int i = 0; i < 3; ++i) {
      detail::append_number(out, x[i]);
      out += ',';
    }
    for (int k = 0; k < dofs_per_node; ++k) {
      detail::append_number(out, s.u[n * dofs_per_node + k]);
      out += k + 1 < dofs_per_node ? ',' : '\n';
    }
  }
  return out;
}

inline void write_text(const std::string& path, const std::string& text)
{
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw IoError("write to '" + path + "' failed");
}

inline std::string read_text(const std::string& path)
{
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline void write_csv(const FieldState& s, const std::string& path) { write_text(path, to_csv(s)); }

/// Parses a CSV snapshot and reconstructs its grid from the node
/// coordinates. A single z layer is read as a plane-strain grid with slab
/// half-thickness `plane_c`. Dirichlet masks are not stored and come back
/// clear, apart from the pinned phi3 in plane strain.
inline FieldState parse_csv(const std::string& text, double plane_c = 0.5)
{
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != csv_header) throw IoError("snapshot: missing or unexpected CSV header");
  std::vector<std::array<double, 11>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::array<double, 11> r{};
    const char* p = line.c_str();
    for (int k = 0; k < 11; ++k) {
      char* end = nullptr;
      r[k] = std::strtod(p, &end);
      if (end == p) throw IoError("snapshot: bad number on line " + std::to_string(lineno));
      p = end;
      if (k < 10) {
        if (*p != ',') throw IoError("snapshot: expected 11 columns on line " + std::to_string(lineno));
        ++p;
      }
    }
    if (*p != '\0') throw IoError("snapshot: trailing data on line " + std::to_string(lineno));
    rows.push_back(r);
  }
  if (rows.empty()) throw IoError("snapshot: no data rows");

  std::map<double, int> xs, ys, zs;
  for (const auto& r : rows) {
    xs.emplace(r[0], 0);
    ys.emplace(r[1], 0);
    zs.emplace(r[2], 0);
  }
  const int nx = int(xs.size()), ny = int(ys.size()), nz = int(zs.size());
  if (std::size_t(nx) * ny * nz != rows.size()) throw IoError("snapshot: nodes do not form a tensor-product grid");
  const bool plane = nz == 1;
  const double a = -xs.begin()->first, b = -ys.begin()->first;
  const double c = plane ? plane_c : -zs.begin()->first;
  Grid g;
  try {
    g = build_grid(a, b, c, nx, ny, nz, plane);
  } catch (const PreconditionError& e) {
    throw IoError(std::string("snapshot: ") + e.what());
  }
  FieldState s = identity_state(g);
  for (std::size_t n = 0; n < rows.size(); ++n) {
    const Vec3 x = g.position(n);
    const double tol = 1e-9 * std::max({a, b, c});
    for (int i = 0; i < 3; ++i) {
      if (std::abs(rows[n][i] - x[i]) > tol) {
        throw IoError("snapshot: row " + std::to_string(n + 2) + " is out of node order or off the uniform grid");
      }
    }
    std::copy_n(&rows[n][3], dofs_per_node, &s.u[n * dofs_per_node]);
  }
  return s;
}

inline FieldState read_csv(const std::string& path, double plane_c = 0.5) { return parse_csv(read_text(path), plane_c); }

inline std::string to_vtk(const FieldState& s, const std::string& title = "lce field")
{
  const Grid& g = s.grid;
  std::string out = "# vtk DataFile Version 3.0\n" + title + "\nASCII\nDATASET STRUCTURED_POINTS\n";
  auto line = [&](const char* key, std::initializer_list<double> vals) {
    out += key;
    for (double v : vals) {
      out += ' ';
      detail::append_number(out, v);
    }
    out += '\n';
  };
  out += "DIMENSIONS " + std::to_string(g.nx) + " " + std::to_string(g.ny) + " " + std::to_string(g.nz) + "\n";
  line("ORIGIN", {-g.a, -g.b, g.plane_strain ? 0.0 : -g.c});
  line("SPACING", {g.hx, g.hy, g.plane_strain ? 1.0 : g.hz});
  out += "POINT_DATA " + std::to_string(g.num_nodes()) + "\n";
  auto for_vtk_order = [&](auto&& fn) {
    for (int k = 0; k < g.nz; ++k)
      for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) fn(g.node(i, j, k));
  };
  out += "VECTORS phi double\n";
  for_vtk_order([&](std::size_t n) {
    const Vec3 p = s.phi(n);
    detail::append_number(out, p[0]);
    out += ' ';
    detail::append_number(out, p[1]);
    out += ' ';
    detail::append_number(out, p[2]);
    out += '\n';
  });
  for (int m = 0; m < 5; ++m) {
    out += "SCALARS q" + std::to_string(m + 1) + " double 1\nLOOKUP_TABLE default\n";
    for_vtk_order([&](std::size_t n) {
      detail::append_number(out, s.u[n * dofs_per_node + 3 + m]);
      out += '\n';
    });
  }
  return out;
}

inline void write_vtk(const FieldState& s, const std::string& path) { write_text(path, to_vtk(s)); }

}  // namespace lce
