#pragma once

/**
 * @file injectivity.hpp
 *
 * @brief Numerical audits of injectivity for a discrete deformation.
 *
 * The deformation is the trilinear (bilinear in plane strain) interpolant of
 * the nodal phi values. Image volumes are measured by voxel rasterization:
 * every cell is cut into sub-cells whose images span at most half a voxel
 * along each axis, and every voxel touched by the bounding box of a sub-cell
 * image is marked. A trilinear sub-cell maps into the convex
 * hull of its corner images, so the marked set covers phi(Omega) and the
 * estimate is an outer one. Its excess is confined to a tube of radius
 * 1.5 voxel diagonals around phi(boundary), which gives the reported bound.
 *
 * In plane strain the third coordinate is carried through unchanged
 * (y3 = x3), so rasterization is two-dimensional and areas are multiplied by
 * the slab thickness 2c.
 */

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lce/discretization.hpp"
#include "lce/errors.hpp"

namespace lce {

/// Half-open range of cells [lo, hi) per axis; hi < 0 means "to the end".
struct CellRange {
  std::array<int, 3> lo{0, 0, 0};
  std::array<int, 3> hi{-1, -1, -1};
};

struct ImageOptions {
  int resolution = 0;  ///< voxels per axis; 0 = 4x the number of cells along each axis
  int threads = 1;
  CellRange cells;
};

/// Occupancy grid over the image bounding box. In plane strain n[2] == 1.
struct Raster {
  int dim = 3;
  std::array<int, 3> n{1, 1, 1};
  Vec3 lo{}, v{};
  double thickness = 1.0;  ///< 2c in plane strain, 1 otherwise
  std::vector<std::uint8_t> occupied;

  std::size_t index(int i, int j, int k) const { return (std::size_t(k) * n[1] + j) * n[0] + i; }
  Vec3 center(int i, int j, int k) const
  {
    return {lo[0] + (i + 0.5) * v[0], lo[1] + (j + 0.5) * v[1], dim == 3 ? lo[2] + (k + 0.5) * v[2] : 0.0};
  }
  double voxel_volume() const { return v[0] * v[1] * (dim == 3 ? v[2] : thickness); }
  double diagonal() const
  {
    return std::sqrt(v[0] * v[0] + v[1] * v[1] + (dim == 3 ? v[2] * v[2] : 0.0));
  }
};

struct ImageMeasure {
  double volume = 0.0;
  double bound = 0.0;          ///< volume - bound <= |phi(A)| <= volume
  double boundary_area = 0.0;  ///< area of phi(boundary of A), times 2c in plane strain
  double lipschitz = 0.0;      ///< max over cells of the interpolant's Lipschitz estimate
  std::size_t occupied = 0;
  Raster raster;
};

namespace detail {

/// Interpolant on one cell in local coordinates xi in [0,1]^d.
struct CellMap {
  bool plane = false;
  std::array<Vec3, 8> p{};  ///< corner images, cell_nodes order
  Vec3 x0{};  ///< reference corner (lowest i, j, k)
  Vec3 h{};   ///< cell size; h[2] = 1 in plane strain

  Vec3 at(const Vec3& xi) const
  {
    Vec3 y{};
    int m = 0;
    for (int di = 0; di < 2; ++di)
      for (int dj = 0; dj < 2; ++dj)
        for (int dk = 0; dk < (plane ? 1 : 2); ++dk, ++m) {
          double w = (di ? xi[0] : 1.0 - xi[0]) * (dj ? xi[1] : 1.0 - xi[1]);
          if (!plane) w *= dk ? xi[2] : 1.0 - xi[2];
          y = y + w * p[m];
        }
    if (plane) y[2] = 0.0;
    return y;
  }

  /// Columns are d phi / d xi_j. In plane strain the third column is e3.
  Mat3 jacobian(const Vec3& xi) const
  {
    Mat3 j;
    int m = 0;
    for (int di = 0; di < 2; ++di)
      for (int dj = 0; dj < 2; ++dj)
        for (int dk = 0; dk < (plane ? 1 : 2); ++dk, ++m) {
          const double a = di ? xi[0] : 1.0 - xi[0], da = di ? 1.0 : -1.0;
          const double b = dj ? xi[1] : 1.0 - xi[1], db = dj ? 1.0 : -1.0;
          const double c = plane ? 1.0 : (dk ? xi[2] : 1.0 - xi[2]), dc = dk ? 1.0 : -1.0;
          const int rows = plane ? 2 : 3;
          for (int r = 0; r < rows; ++r) {
            j(r, 0) += da * b * c * p[m][r];
            j(r, 1) += a * db * c * p[m][r];
            if (!plane) j(r, 2) += a * b * dc * p[m][r];
          }
        }
    if (plane) j(2, 2) = 1.0;
    return j;
  }

  /// Physical deformation gradient.
  Mat3 gradient(const Vec3& xi) const
  {
    Mat3 j = jacobian(xi);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) j(r, c) /= h[c];
    return j;
  }

  Vec3 reference(const Vec3& xi) const
  {
    return {x0[0] + xi[0] * h[0], x0[1] + xi[1] * h[1], plane ? 0.0 : x0[2] + xi[2] * h[2]};
  }
};

inline CellMap cell_map(const FieldState& s, std::size_t e)
{
  const Grid& g = s.grid;
  CellMap cm;
  cm.plane = g.plane_strain;
  const auto nodes = g.cell_nodes(e);
  for (int m = 0; m < g.nodes_per_cell(); ++m) cm.p[m] = s.phi(nodes[m]);
  cm.x0 = g.position(nodes[0]);
  cm.h = {g.hx, g.hy, g.plane_strain ? 1.0 : g.hz};
  return cm;
}

struct ResolvedRange {
  std::array<int, 3> lo, hi;
  std::vector<std::size_t> cells;
};

inline ResolvedRange resolve(const Grid& g, const CellRange& r)
{
  const std::array<int, 3> n{g.cells_x(), g.cells_y(), g.cells_z()};
  ResolvedRange out;
  for (int a = 0; a < 3; ++a) {
    out.lo[a] = r.lo[a];
    out.hi[a] = r.hi[a] < 0 ? n[a] : r.hi[a];
    if (out.lo[a] < 0 || out.hi[a] > n[a] || out.lo[a] >= out.hi[a]) {
      throw PreconditionError("cell range is empty or outside the grid");
    }
  }
  for (int i = out.lo[0]; i < out.hi[0]; ++i)
    for (int j = out.lo[1]; j < out.hi[1]; ++j)
      for (int k = out.lo[2]; k < out.hi[2]; ++k) out.cells.push_back(g.cell(i, j, k));
  return out;
}

inline constexpr double gauss2[2] = {0.5 - 0.5 / 1.7320508075688772, 0.5 + 0.5 / 1.7320508075688772};

/// 3-point Gauss-Legendre on [0, 1].
inline constexpr double gauss3_x[3] = {0.5 - 0.3872983346207417, 0.5, 0.5 + 0.3872983346207417};
inline constexpr double gauss3_w[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

/// Area of phi(boundary of the cell range): bilinear faces (3-D) or edges
/// times 2c (plane strain), with 2-point Gauss on each face.
inline double boundary_image_area(const FieldState& s, const ResolvedRange& rr)
{
  const Grid& g = s.grid;
  double area = 0.0;
  for (std::size_t e : rr.cells) {
    const auto ijk = g.cell_ijk(e);
    const CellMap cm = cell_map(s, e);
    const int dims = g.plane_strain ? 2 : 3;
    for (int axis = 0; axis < dims; ++axis)
      for (int side = 0; side < 2; ++side) {
        if (ijk[axis] != (side ? rr.hi[axis] - 1 : rr.lo[axis])) continue;
        if (g.plane_strain) {
          const int t = 1 - axis;
          double len = 0.0;
          for (double u : gauss2) {
            Vec3 xi{};
            xi[axis] = side;
            xi[t] = u;
            const Mat3 j = cm.jacobian(xi);
            len += 0.5 * std::hypot(j(0, t), j(1, t));
          }
          area += len * 2.0 * g.c;
        } else {
          const int t1 = (axis + 1) % 3, t2 = (axis + 2) % 3;
          for (double u : gauss2)
            for (double w : gauss2) {
              Vec3 xi{};
              xi[axis] = side;
              xi[t1] = u;
              xi[t2] = w;
              const Mat3 j = cm.jacobian(xi);
              area += 0.25 * norm(cross(j.column(t1), j.column(t2)));
            }
        }
      }
  }
  return area;
}

}  // namespace detail

/// Outer voxel estimate of |phi(A)| for the cell range A in `o.cells`.
inline ImageMeasure image_measure(const FieldState& s, const ImageOptions& o = {})
{
  const Grid& g = s.grid;
  const detail::ResolvedRange rr = detail::resolve(g, o.cells);
  const int dim = g.plane_strain ? 2 : 3;

  Raster ras;
  ras.dim = dim;
  ras.thickness = g.plane_strain ? 2.0 * g.c : 1.0;
  Vec3 hi{};
  for (int a = 0; a < 3; ++a) {
    ras.lo[a] = std::numeric_limits<double>::infinity();
    hi[a] = -std::numeric_limits<double>::infinity();
  }
  for (std::size_t e : rr.cells) {
    const auto nodes = g.cell_nodes(e);
    for (int m = 0; m < g.nodes_per_cell(); ++m) {
      const Vec3 p = s.phi(nodes[m]);
      for (int a = 0; a < dim; ++a) {
        ras.lo[a] = std::min(ras.lo[a], p[a]);
        hi[a] = std::max(hi[a], p[a]);
      }
    }
  }
  double scale = 0.0;
  for (int a = 0; a < dim; ++a) scale = std::max(scale, hi[a] - ras.lo[a]);
  for (int a = 0; a < dim; ++a) {
    if (!(hi[a] - ras.lo[a] > 1e-12 * scale) || !std::isfinite(hi[a] - ras.lo[a])) {
      throw PreconditionError("image_measure: degenerate bounding box");
    }
  }
  const std::array<int, 3> cells_per_axis{rr.hi[0] - rr.lo[0], rr.hi[1] - rr.lo[1], rr.hi[2] - rr.lo[2]};
  for (int a = 0; a < dim; ++a) {
    ras.n[a] = o.resolution > 0 ? o.resolution : 4 * cells_per_axis[a];
    ras.v[a] = (hi[a] - ras.lo[a]) / ras.n[a];
  }
  if (dim == 2) {
    ras.lo[2] = 0.0;
    ras.v[2] = 0.0;
  }
  const std::size_t nvox = std::size_t(ras.n[0]) * ras.n[1] * ras.n[2];
  auto occ = std::make_unique<std::atomic<std::uint8_t>[]>(nvox);
  for (std::size_t i = 0; i < nvox; ++i) occ[i].store(0, std::memory_order_relaxed);
  const double diag = ras.diagonal();

  std::vector<double> cell_lip(rr.cells.size(), 0.0);
  detail::parallel_chunks(rr.cells.size(), o.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<Vec3> lattice;
    for (std::size_t c = begin; c < end; ++c) {
      const detail::CellMap cm = detail::cell_map(s, rr.cells[c]);
      // ext[i]: sum over reference axes of the largest edge change of phi_i
      Vec3 ext{}, lip{};
      for (int ax = 0; ax < dim; ++ax) {
        Vec3 edge_max{};
        const int npc = cm.plane ? 4 : 8;
        const int stride = cm.plane ? (ax == 0 ? 2 : 1) : (ax == 0 ? 4 : ax == 1 ? 2 : 1);
        for (int q = 0; q < npc; ++q) {
          if (q & stride) continue;
          const Vec3 d = cm.p[q + stride] - cm.p[q];
          for (int i = 0; i < dim; ++i) edge_max[i] = std::max(edge_max[i], std::abs(d[i]));
        }
        for (int i = 0; i < dim; ++i) {
          ext[i] += edge_max[i];
          lip[i] += edge_max[i] / cm.h[ax];
        }
      }
      cell_lip[c] = norm(lip);
      double sub = 1.0;
      for (int a = 0; a < dim; ++a) sub = std::max(sub, std::ceil(2.0 * ext[a] / ras.v[a]));
      if (std::pow(sub, dim) > 2e7) {
        throw PreconditionError("image_measure: a cell needs more than 2e7 sub-cells; lower the raster resolution");
      }
      const int ms = int(sub);
      const int mz = cm.plane ? 0 : ms;
      lattice.resize(std::size_t(ms + 1) * (ms + 1) * (mz + 1));
      auto lat = [&](int i, int j, int k) -> Vec3& { return lattice[(std::size_t(i) * (ms + 1) + j) * (mz + 1) + k]; };
      for (int i = 0; i <= ms; ++i)
        for (int j = 0; j <= ms; ++j)
          for (int k = 0; k <= mz; ++k) lat(i, j, k) = cm.at({double(i) / ms, double(j) / ms, cm.plane ? 0.0 : double(k) / ms});
      for (int i = 0; i < ms; ++i)
        for (int j = 0; j < ms; ++j)
          for (int k = 0; k < std::max(mz, 1); ++k) {
            Vec3 bl = lat(i, j, k), bh = bl;
            for (int di = 0; di < 2; ++di)
              for (int dj = 0; dj < 2; ++dj)
                for (int dk = 0; dk < (cm.plane ? 1 : 2); ++dk) {
                  const Vec3& p = lat(i + di, j + dj, k + dk);
                  for (int a = 0; a < dim; ++a) {
                    bl[a] = std::min(bl[a], p[a]);
                    bh[a] = std::max(bh[a], p[a]);
                  }
                }
            std::array<int, 3> il{0, 0, 0}, ih{0, 0, 0};
            for (int a = 0; a < dim; ++a) {
              il[a] = std::clamp(int(std::floor((bl[a] - ras.lo[a]) / ras.v[a])), 0, ras.n[a] - 1);
              ih[a] = std::clamp(int(std::floor((bh[a] - ras.lo[a]) / ras.v[a])), 0, ras.n[a] - 1);
            }
            for (int vk = il[2]; vk <= ih[2]; ++vk)
              for (int vj = il[1]; vj <= ih[1]; ++vj)
                for (int vi = il[0]; vi <= ih[0]; ++vi) occ[ras.index(vi, vj, vk)].store(1, std::memory_order_relaxed);
          }
    }
  });

  ImageMeasure out;
  ras.occupied.resize(nvox);
  for (std::size_t i = 0; i < nvox; ++i) {
    ras.occupied[i] = occ[i].load(std::memory_order_relaxed);
    out.occupied += ras.occupied[i];
  }
  for (double l : cell_lip) out.lipschitz = std::max(out.lipschitz, l);
  out.volume = double(out.occupied) * ras.voxel_volume();
  out.boundary_area = detail::boundary_image_area(s, rr);
  out.bound = 1.5 * diag * out.boundary_area;
  out.raster = std::move(ras);
  return out;
}

/// Integral of det grad phi over the cells of `range` (2-point Gauss, exact
/// for the interpolant) and the smallest det at the Gauss points.
struct JacobianIntegral {
  double integral = 0.0;
  double min_det = std::numeric_limits<double>::infinity();
};

inline JacobianIntegral jacobian_integral(const FieldState& s, const CellRange& range = {})
{
  const Grid& g = s.grid;
  const detail::ResolvedRange rr = detail::resolve(g, range);
  JacobianIntegral out;
  const double w = g.cell_volume() / (g.plane_strain ? 4.0 : 8.0);
  for (std::size_t e : rr.cells) {
    const detail::CellMap cm = detail::cell_map(s, e);
    for (double u : detail::gauss2)
      for (double v : detail::gauss2)
        for (double z : detail::gauss2) {
          if (g.plane_strain && z != detail::gauss2[0]) continue;
          const double d = det(cm.gradient({u, v, z}));
          out.integral += w * d;
          out.min_det = std::min(out.min_det, d);
        }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multiplicity

struct MultiplicityResult {
  std::vector<int> counts;               ///< N(phi, y) per sample
  std::vector<std::uint8_t> unresolved;  ///< 1 if some cell's inverse solve did not converge

  std::map<int, std::size_t> histogram() const
  {
    std::map<int, std::size_t> h;
    for (int c : counts) ++h[c];
    return h;
  }
  std::size_t num_unresolved() const { return std::size_t(std::count(unresolved.begin(), unresolved.end(), 1)); }
  /// Fraction of samples with N == 1.
  double fraction_single() const
  {
    return counts.empty() ? 0.0 : double(std::count(counts.begin(), counts.end(), 1)) / double(counts.size());
  }
};

inline std::string histogram_csv(const std::map<int, std::size_t>& h)
{
  std::string out = "N,count\n";
  for (const auto& [n, c] : h) out += std::to_string(n) + "," + std::to_string(c) + "\n";
  return out;
}

namespace detail {

enum class InverseOutcome { found, none, unresolved };

/// Looks for x in the xi-box [lo, lo + size]^d with cm(x) = y: Newton from the
/// box center, bisecting the box when Newton lands outside it or stalls.
inline InverseOutcome inverse_in_box(const CellMap& cm, const Vec3& y, const Vec3& lo, double size, int depth,
                                     double tol, Vec3& xi_out)
{
  const int dim = cm.plane ? 2 : 3;
  Vec3 bl{}, bh{};
  for (int a = 0; a < dim; ++a) {
    bl[a] = std::numeric_limits<double>::infinity();
    bh[a] = -std::numeric_limits<double>::infinity();
  }
  for (int di = 0; di < 2; ++di)
    for (int dj = 0; dj < 2; ++dj)
      for (int dk = 0; dk < (cm.plane ? 1 : 2); ++dk) {
        const Vec3 p = cm.at({lo[0] + di * size, lo[1] + dj * size, cm.plane ? 0.0 : lo[2] + dk * size});
        for (int a = 0; a < dim; ++a) {
          bl[a] = std::min(bl[a], p[a]);
          bh[a] = std::max(bh[a], p[a]);
        }
      }
  for (int a = 0; a < dim; ++a)
    if (y[a] < bl[a] - tol || y[a] > bh[a] + tol) return InverseOutcome::none;

  Vec3 xi{lo[0] + 0.5 * size, lo[1] + 0.5 * size, cm.plane ? 0.0 : lo[2] + 0.5 * size};
  bool converged = false;
  for (int it = 0; it < 40; ++it) {
    Vec3 r = cm.at(xi) - y;
    if (cm.plane) r[2] = 0.0;
    if (norm(r) <= tol) {
      converged = true;
      break;
    }
    const Mat3 j = cm.jacobian(xi);
    const double dj = det(j);
    if (!(std::abs(dj) > 1e-300)) break;
    const Vec3 step = inverse(j) * r;
    xi = xi - step;
    if (!(norm(xi) < 1e6)) break;
  }
  const double slack = 1e-10;
  if (converged) {
    bool inside = true;
    for (int a = 0; a < dim; ++a) inside = inside && xi[a] >= -slack && xi[a] <= 1.0 + slack;
    bool in_box = inside;
    for (int a = 0; a < dim; ++a) in_box = in_box && xi[a] >= lo[a] - slack && xi[a] <= lo[a] + size + slack;
    if (in_box) {
      xi_out = xi;
      return InverseOutcome::found;
    }
  }
  if (depth == 0) return converged ? InverseOutcome::none : InverseOutcome::unresolved;
  bool any_unresolved = false;
  const double half = 0.5 * size;
  for (int di = 0; di < 2; ++di)
    for (int dj = 0; dj < 2; ++dj)
      for (int dk = 0; dk < (cm.plane ? 1 : 2); ++dk) {
        const Vec3 sub{lo[0] + di * half, lo[1] + dj * half, cm.plane ? 0.0 : lo[2] + dk * half};
        const InverseOutcome r = inverse_in_box(cm, y, sub, half, depth - 1, tol, xi_out);
        if (r == InverseOutcome::found) return r;
        any_unresolved = any_unresolved || r == InverseOutcome::unresolved;
      }
  return any_unresolved ? InverseOutcome::unresolved : InverseOutcome::none;
}

}  // namespace detail

/// N(phi, y) for each sample: the number of distinct cell preimages, with
/// preimages shared by neighbouring cells counted once.
inline MultiplicityResult multiplicity(const FieldState& s, const std::vector<Vec3>& ys, int threads = 1)
{
  const Grid& g = s.grid;
  std::vector<detail::CellMap> maps(g.num_cells());
  double scale = 0.0;
  for (std::size_t e = 0; e < g.num_cells(); ++e) {
    maps[e] = detail::cell_map(s, e);
    for (int m = 0; m < g.nodes_per_cell(); ++m) scale = std::max(scale, norm(maps[e].p[m]));
  }
  const double tol = 1e-12 * std::max(scale, 1.0);
  const double merge = 1e-8 * std::min(g.hx, g.hy);

  MultiplicityResult out;
  out.counts.assign(ys.size(), 0);
  out.unresolved.assign(ys.size(), 0);
  detail::parallel_chunks(ys.size(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<Vec3> roots;
    for (std::size_t n = begin; n < end; ++n) {
      const Vec3& y = ys[n];
      roots.clear();
      if (g.plane_strain && std::abs(y[2]) > g.c) continue;
      for (std::size_t e = 0; e < maps.size(); ++e) {
        Vec3 xi{};
        const auto r = detail::inverse_in_box(maps[e], y, {}, 1.0, 3, tol, xi);
        if (r == detail::InverseOutcome::unresolved) out.unresolved[n] = 1;
        if (r != detail::InverseOutcome::found) continue;
        const Vec3 x = maps[e].reference(xi);
        bool dup = false;
        for (const Vec3& q : roots) dup = dup || norm(q - x) <= merge;
        if (!dup) roots.push_back(x);
      }
      out.counts[n] = int(roots.size());
    }
  });
  return out;
}

/// phi evaluated at a reference point through the interpolant.
inline Vec3 interpolate_phi(const FieldState& s, const Vec3& x)
{
  const Grid& g = s.grid;
  const double fx = (x[0] + g.a) / g.hx, fy = (x[1] + g.b) / g.hy;
  const int i = std::clamp(int(std::floor(fx)), 0, g.cells_x() - 1);
  const int j = std::clamp(int(std::floor(fy)), 0, g.cells_y() - 1);
  int k = 0;
  double fz = 0.0;
  if (!g.plane_strain) {
    fz = (x[2] + g.c) / g.hz;
    k = std::clamp(int(std::floor(fz)), 0, g.cells_z() - 1);
  }
  const detail::CellMap cm = detail::cell_map(s, g.cell(i, j, k));
  Vec3 y = cm.at({fx - i, fy - j, g.plane_strain ? 0.0 : fz - k});
  if (g.plane_strain) y[2] = x[2];
  return y;
}

/// Images of `count` reference points drawn uniformly from Omega.
inline std::vector<Vec3> sample_image_points(const FieldState& s, std::size_t count, std::uint64_t seed)
{
  const Grid& g = s.grid;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> ys;
  ys.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const Vec3 x{g.a * u(rng), g.b * u(rng), g.c * u(rng)};
    ys.push_back(interpolate_phi(s, x));
  }
  return ys;
}

// ---------------------------------------------------------------------------
// Ciarlet-Necas audit

enum class Verdict { satisfied, violated, inconclusive };

inline const char* to_string(Verdict v)
{
  switch (v) {
    case Verdict::satisfied: return "satisfied";
    case Verdict::violated: return "violated";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

struct CNOptions {
  int resolution = 0;  ///< voxels per axis; 0 = 4x the cells per axis
  std::size_t samples = 1000;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct CNReport {
  double lhs = 0.0;  ///< integral of det grad phi
  double rhs = 0.0;  ///< outer voxel estimate of |phi(Omega)|
  double bound = 0.0;
  double min_det = 0.0;
  bool orientation_ok = true;
  Verdict verdict = Verdict::inconclusive;
  std::array<int, 3> resolution{1, 1, 1};
  std::size_t samples = 0;
  std::size_t unresolved = 0;
  std::map<int, std::size_t> histogram;

  double ratio() const { return lhs / rhs; }

  /// Flat `key = value` text block.
  std::string to_text() const
  {
    std::ostringstream os;
    os.precision(17);
    os << "lhs = " << lhs << "\n"
       << "rhs = " << rhs << "\n"
       << "bound = " << bound << "\n"
       << "ratio = " << ratio() << "\n"
       << "min_det = " << min_det << "\n"
       << "orientation_ok = " << (orientation_ok ? "true" : "false") << "\n"
       << "verdict = " << to_string(verdict) << "\n"
       << "resolution = " << resolution[0] << "x" << resolution[1] << "x" << resolution[2] << "\n"
       << "samples = " << samples << "\n"
       << "unresolved = " << unresolved << "\n";
    for (const auto& [n, c] : histogram) os << "multiplicity." << n << " = " << c << "\n";
    return os.str();
  }
};

/// Verdict from the outer estimate rhs, which satisfies
/// rhs - bound <= |phi(Omega)| <= rhs.
inline Verdict cn_verdict(double lhs, double rhs, double bound)
{
  if (lhs <= rhs * (1.0 + 1e-12)) return Verdict::satisfied;
  if (lhs > rhs + bound) return Verdict::violated;
  return Verdict::inconclusive;
}

inline CNReport ciarlet_necas_check(const FieldState& s, const CNOptions& o = {})
{
  ImageOptions io;
  io.resolution = o.resolution;
  io.threads = o.threads;
  const ImageMeasure im = image_measure(s, io);
  const JacobianIntegral ji = jacobian_integral(s);
  CNReport r;
  r.lhs = ji.integral;
  r.rhs = im.volume;
  r.bound = im.bound;
  r.min_det = ji.min_det;
  r.orientation_ok = ji.min_det > 0.0;
  r.verdict = cn_verdict(r.lhs, r.rhs, r.bound);
  r.resolution = im.raster.n;
  if (o.samples > 0) {
    const MultiplicityResult mr = multiplicity(s, sample_image_points(s, o.samples, o.seed), o.threads);
    r.samples = o.samples;
    r.unresolved = mr.num_unresolved();
    r.histogram = mr.histogram();
  }
  return r;
}

// ---------------------------------------------------------------------------
// Change of variables

struct ChangeOfVariables {
  double image_integral = 0.0;      ///< integral of g over phi(Omega), voxel midpoint rule
  double reference_integral = 0.0;  ///< integral of g(phi) det grad phi, 3-point Gauss
  double discrepancy = 0.0;         ///< relative
  double bound = 0.0;               ///< relative: max|g| * volume bound / |reference_integral|
  bool flagged = false;             ///< discrepancy > 2 * bound
};

inline ChangeOfVariables change_of_variables_check(const FieldState& s, const std::function<double(const Vec3&)>& g,
                                                   const ImageOptions& o = {})
{
  const Grid& gr = s.grid;
  const ImageMeasure im = image_measure(s, o);
  const Raster& ras = im.raster;
  ChangeOfVariables out;

  // y3 through the slab in plane strain: 3-point Gauss on (-c, c)
  for (int k = 0; k < ras.n[2]; ++k)
    for (int j = 0; j < ras.n[1]; ++j)
      for (int i = 0; i < ras.n[0]; ++i) {
        if (!ras.occupied[ras.index(i, j, k)]) continue;
        const Vec3 y = ras.center(i, j, k);
        if (ras.dim == 3) {
          const double v = g(y);
          out.image_integral += v * ras.voxel_volume();
        } else {
          for (int q = 0; q < 3; ++q) {
            const double v = g({y[0], y[1], gr.c * (2.0 * detail::gauss3_x[q] - 1.0)});
            out.image_integral += detail::gauss3_w[q] * v * ras.voxel_volume();
          }
        }
      }

  // |g| on phi(A) is estimated from the reference side (Gauss points and cell
  // corners) so the bound does not depend on the raster resolution.
  double gmax = 0.0;
  const detail::ResolvedRange rr = detail::resolve(gr, o.cells);
  for (std::size_t e : rr.cells) {
    const detail::CellMap cm = detail::cell_map(s, e);
    for (int corner = 0; corner < 8; ++corner) {
      const Vec3 xi{double(corner & 1), double((corner >> 1) & 1), double((corner >> 2) & 1)};
      Vec3 y = cm.at(xi);
      if (gr.plane_strain) y[2] = gr.c * (2.0 * xi[2] - 1.0);
      gmax = std::max(gmax, std::abs(g(y)));
    }
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        for (int c = 0; c < 3; ++c) {
          const Vec3 xi{detail::gauss3_x[a], detail::gauss3_x[b], detail::gauss3_x[c]};
          const double w = detail::gauss3_w[a] * detail::gauss3_w[b] * detail::gauss3_w[c] * gr.cell_volume();
          const double jd = det(cm.gradient(xi));
          Vec3 y = cm.at(xi);
          if (gr.plane_strain) y[2] = gr.c * (2.0 * xi[2] - 1.0);
          const double gv = g(y);
          gmax = std::max(gmax, std::abs(gv));
          out.reference_integral += w * gv * jd;
        }
  }
  const double denom = std::abs(out.reference_integral);
  out.discrepancy = std::abs(out.image_integral - out.reference_integral) / denom;
  out.bound = gmax * im.bound / denom;
  out.flagged = out.discrepancy > 2.0 * out.bound;
  return out;
}

// ---------------------------------------------------------------------------
// Lusin-type bound

struct LusinSample {
  double image_volume = 0.0;  ///< outer estimate of |phi(A)|
  double box_volume = 0.0;    ///< |A|
  double grad_p = 0.0;        ///< integral over A of |grad phi|^p
  double ratio = 0.0;         ///< |phi(A)| / (|A|^(1-3/p) (int_A |grad phi|^p)^(3/p))
};

inline LusinSample lusin_ratio(const FieldState& s, const CellRange& box, double p, const ImageOptions& o = {})
{
  if (!(p > 3.0)) throw PreconditionError("lusin_ratio: needs p > 3");
  const Grid& g = s.grid;
  ImageOptions io = o;
  io.cells = box;
  const detail::ResolvedRange rr = detail::resolve(g, box);
  LusinSample out;
  out.image_volume = image_measure(s, io).volume;
  out.box_volume = double(rr.cells.size()) * g.cell_volume();
  const double w = g.cell_volume() / (g.plane_strain ? 4.0 : 8.0);
  for (std::size_t e : rr.cells) {
    const detail::CellMap cm = detail::cell_map(s, e);
    for (double u : detail::gauss2)
      for (double v : detail::gauss2)
        for (double z : detail::gauss2) {
          if (g.plane_strain && z != detail::gauss2[0]) continue;
          out.grad_p += w * std::pow(frob(cm.gradient({u, v, z})), p);
        }
  }
  out.ratio = out.image_volume / (std::pow(out.box_volume, 1.0 - 3.0 / p) * std::pow(out.grad_p, 3.0 / p));
  return out;
}

}  // namespace lce
