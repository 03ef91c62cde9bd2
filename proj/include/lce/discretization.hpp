#pragma once

/**
 * @file discretization.hpp
 *
 * @brief Structured-grid fields (phi, pulled-back Q) on the box
 * (-a,a) x (-b,b) x (-c,c), midpoint-quadrature assembly of the total energy
 * and its exact discrete gradient, and boundary conditions.
 *
 * Unknowns are nodal: 3 components of phi followed by 5 coefficients of Q,
 * 8 doubles per node. Nodes are numbered (i ny + j) nz + k, z fastest.
 * In plane-strain mode there is a single z layer, phi3 = x3 is imposed and
 * the cell volume carries the slab thickness 2c.
 */

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

#include "lce/energy_model.hpp"
#include "lce/errors.hpp"
#include "lce/tensor_core.hpp"

namespace lce {

inline constexpr int dofs_per_node = 8;

struct Grid {
  double a = 1.0, b = 1.0, c = 1.0;
  int nx = 2, ny = 2, nz = 2;
  bool plane_strain = false;
  double hx = 2.0, hy = 2.0, hz = 2.0;

  std::size_t num_nodes() const { return std::size_t(nx) * ny * nz; }
  int cells_x() const { return nx - 1; }
  int cells_y() const { return ny - 1; }
  int cells_z() const { return plane_strain ? 1 : nz - 1; }
  std::size_t num_cells() const { return std::size_t(cells_x()) * cells_y() * cells_z(); }

  std::size_t node(int i, int j, int k) const { return (std::size_t(i) * ny + j) * nz + k; }
  std::array<int, 3> node_ijk(std::size_t n) const
  {
    const int k = int(n % nz);
    const int j = int((n / nz) % ny);
    const int i = int(n / (std::size_t(nz) * ny));
    return {i, j, k};
  }
  Vec3 position(std::size_t n) const
  {
    const auto [i, j, k] = node_ijk(n);
    return {-a + i * hx, -b + j * hy, plane_strain ? 0.0 : -c + k * hz};
  }

  std::size_t cell(int i, int j, int k) const { return (std::size_t(i) * cells_y() + j) * cells_z() + k; }
  std::array<int, 3> cell_ijk(std::size_t e) const
  {
    const int cz = cells_z(), cy = cells_y();
    return {int(e / (std::size_t(cz) * cy)), int((e / cz) % cy), int(e % cz)};
  }
  Vec3 cell_center(std::size_t e) const
  {
    const auto [i, j, k] = cell_ijk(e);
    return {-a + (i + 0.5) * hx, -b + (j + 0.5) * hy, plane_strain ? 0.0 : -c + (k + 0.5) * hz};
  }
  double cell_volume() const { return hx * hy * (plane_strain ? 2.0 * c : hz); }
  double volume() const { return 8.0 * a * b * c; }

  /// Corner nodes of a cell: 8 in 3-D, 4 in plane strain (di, dj, dk) lexicographic.
  int nodes_per_cell() const { return plane_strain ? 4 : 8; }
  std::array<std::size_t, 8> cell_nodes(std::size_t e) const
  {
    const auto [i, j, k] = cell_ijk(e);
    std::array<std::size_t, 8> out{};
    int m = 0;
    for (int di = 0; di < 2; ++di)
      for (int dj = 0; dj < 2; ++dj)
        for (int dk = 0; dk < (plane_strain ? 1 : 2); ++dk) out[m++] = node(i + di, j + dj, k + dk);
    return out;
  }
  /// Shape-function gradients at the cell center, same order as cell_nodes.
  std::array<Vec3, 8> center_shape_gradients() const
  {
    std::array<Vec3, 8> out{};
    int m = 0;
    if (plane_strain) {
      for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj) out[m++] = {(2 * di - 1) / (2.0 * hx), (2 * dj - 1) / (2.0 * hy), 0.0};
    } else {
      for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj)
          for (int dk = 0; dk < 2; ++dk)
            out[m++] = {(2 * di - 1) / (4.0 * hx), (2 * dj - 1) / (4.0 * hy), (2 * dk - 1) / (4.0 * hz)};
    }
    return out;
  }
};

inline Grid build_grid(double a, double b, double c, int nx, int ny, int nz, bool plane_strain)
{
  if (!(a > 0.0) || !(b > 0.0) || !(c > 0.0)) throw PreconditionError("build_grid: extents must be positive");
  if (nx < 2 || ny < 2) throw PreconditionError("build_grid: need at least 2 nodes along x and y");
  if (!plane_strain && nz < 2) throw PreconditionError("build_grid: need at least 2 nodes along z");
  Grid g;
  g.a = a;
  g.b = b;
  g.c = c;
  g.nx = nx;
  g.ny = ny;
  g.nz = plane_strain ? 1 : nz;
  g.plane_strain = plane_strain;
  g.hx = 2.0 * a / (nx - 1);
  g.hy = 2.0 * b / (ny - 1);
  g.hz = plane_strain ? 2.0 * c : 2.0 * c / (nz - 1);
  return g;
}

// ---------------------------------------------------------------------------
// Fields

/// Nodal unknowns plus a per-dof Dirichlet mask (1 = held fixed).
struct FieldState {
  Grid grid;
  std::vector<double> u;
  std::vector<std::uint8_t> fixed;

  FieldState() = default;
  explicit FieldState(const Grid& g) : grid(g), u(g.num_nodes() * dofs_per_node, 0.0), fixed(u.size(), 0) {}

  Vec3 phi(std::size_t n) const
  {
    const double* p = &u[n * dofs_per_node];
    return {p[0], p[1], p[2]};
  }
  QTensor q(std::size_t n) const
  {
    QTensor out;
    std::copy_n(&u[n * dofs_per_node + 3], 5, out.c.begin());
    return out;
  }
  void set_phi(std::size_t n, const Vec3& v) { std::copy_n(v.begin(), 3, &u[n * dofs_per_node]); }
  void set_q(std::size_t n, const QTensor& q) { std::copy_n(q.c.begin(), 5, &u[n * dofs_per_node + 3]); }
};

/// phi = id, Q = 0; in plane strain phi3 is pinned.
inline FieldState identity_state(const Grid& g)
{
  FieldState s(g);
  for (std::size_t n = 0; n < g.num_nodes(); ++n) {
    s.set_phi(n, g.position(n));
    if (g.plane_strain) s.fixed[n * dofs_per_node + 2] = 1;
  }
  return s;
}

/// phi(x) = A x + t and Q constant.
inline FieldState affine_state(const Grid& g, const Mat3& a, const Vec3& t, const QTensor& q)
{
  FieldState s = identity_state(g);
  for (std::size_t n = 0; n < g.num_nodes(); ++n) {
    Vec3 y = a * g.position(n) + t;
    if (g.plane_strain) y[2] = 0.0;
    s.set_phi(n, y);
    s.set_q(n, q);
  }
  return s;
}

/// Cell-center gradients of a nodal field with ncomp components per node
/// (stride = distance between consecutive nodes in `nodal`). Returns
/// num_cells x ncomp x 3 values; z-derivatives are zero in plane strain.
inline std::vector<double> fd_gradient(const Grid& g, const std::vector<double>& nodal, int ncomp, int stride = -1,
                                       int offset = 0)
{
  if (stride < 0) stride = ncomp;
  if (nodal.size() != g.num_nodes() * std::size_t(stride) || offset + ncomp > stride) {
    throw PreconditionError("fd_gradient: field size does not match the grid");
  }
  const auto dn = g.center_shape_gradients();
  const int npc = g.nodes_per_cell();
  std::vector<double> out(g.num_cells() * ncomp * 3, 0.0);
  for (std::size_t e = 0; e < g.num_cells(); ++e) {
    const auto nodes = g.cell_nodes(e);
    double* o = &out[e * ncomp * 3];
    for (int m = 0; m < npc; ++m) {
      const double* v = &nodal[nodes[m] * stride + offset];
      for (int c = 0; c < ncomp; ++c)
        for (int d = 0; d < 3; ++d) o[3 * c + d] += v[c] * dn[m][d];
    }
  }
  return out;
}

/// Deformation gradient at the center of cell e.
inline Mat3 deformation_gradient(const FieldState& s, std::size_t e, const std::array<Vec3, 8>& dn)
{
  const Grid& g = s.grid;
  const auto nodes = g.cell_nodes(e);
  Mat3 f;
  for (int m = 0; m < g.nodes_per_cell(); ++m) {
    const double* p = &s.u[nodes[m] * dofs_per_node];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) f(i, j) += p[i] * dn[m][j];
  }
  if (g.plane_strain) {
    f(2, 0) = f(2, 1) = f(0, 2) = f(1, 2) = 0.0;
    f(2, 2) = 1.0;
  }
  return f;
}

inline Mat3 deformation_gradient(const FieldState& s, std::size_t e)
{
  return deformation_gradient(s, e, s.grid.center_shape_gradients());
}

/// Cell-center value of Q (average of the corner nodes).
inline QTensor cell_q(const FieldState& s, std::size_t e)
{
  const auto nodes = s.grid.cell_nodes(e);
  const int npc = s.grid.nodes_per_cell();
  QTensor q;
  for (int m = 0; m < npc; ++m)
    for (int n = 0; n < 5; ++n) q.c[n] += s.u[nodes[m] * dofs_per_node + 3 + n];
  return (1.0 / npc) * q;
}

// ---------------------------------------------------------------------------
// Boundary conditions

namespace face {
inline constexpr unsigned x_lo = 1, x_hi = 2, y_lo = 4, y_hi = 8, z_lo = 16, z_hi = 32;
inline constexpr unsigned all = 63;
}  // namespace face

/// Faces of the box the node lies on; z faces are absent in plane strain.
inline unsigned node_faces(const Grid& g, std::size_t n)
{
  const auto [i, j, k] = g.node_ijk(n);
  unsigned f = 0;
  if (i == 0) f |= face::x_lo;
  if (i == g.nx - 1) f |= face::x_hi;
  if (j == 0) f |= face::y_lo;
  if (j == g.ny - 1) f |= face::y_hi;
  if (!g.plane_strain) {
    if (k == 0) f |= face::z_lo;
    if (k == g.nz - 1) f |= face::z_hi;
  }
  return f;
}

enum class BoundaryKind {
  dirichlet_full,     ///< phi = phi0 on the whole boundary
  partial_average,    ///< phi free, mean of phi over a subregion D fixed at 0
  dirichlet_partial,  ///< selected components of phi pinned on selected faces
};

struct BoundarySpec {
  BoundaryKind kind = BoundaryKind::dirichlet_full;
  std::function<Vec3(const Vec3&)> phi0;  ///< empty means identity
  unsigned phi_faces = face::all;         ///< used by dirichlet_partial
  unsigned phi_axes = 7;                  ///< bit i pins component i (dirichlet_partial)
  std::function<QTensor(const Vec3&)> q0;
  unsigned q_faces = 0;        ///< faces on which Q = q0(x)
  unsigned surface_faces = 0;  ///< faces carrying the anchoring energy
  /// Region D for partial_average as (xlo, xhi, ylo, yhi, zlo, zhi); a cell
  /// belongs to D when its center does. Empty means the whole box.
  std::optional<std::array<double, 6>> region;
};

namespace detail {

inline bool in_region(const BoundarySpec& bc, const Vec3& x)
{
  if (!bc.region) return true;
  const auto& r = *bc.region;
  return x[0] >= r[0] && x[0] <= r[1] && x[1] >= r[2] && x[1] <= r[3] && x[2] >= r[4] && x[2] <= r[5];
}

/// Quadrature weights of each node in the mean over D (sum to |D|).
inline std::vector<double> region_node_weights(const Grid& g, const BoundarySpec& bc)
{
  std::vector<double> w(g.num_nodes(), 0.0);
  const double wc = g.cell_volume() / g.nodes_per_cell();
  for (std::size_t e = 0; e < g.num_cells(); ++e) {
    if (!in_region(bc, g.cell_center(e))) continue;
    const auto nodes = g.cell_nodes(e);
    for (int m = 0; m < g.nodes_per_cell(); ++m) w[nodes[m]] += wc;
  }
  return w;
}

}  // namespace detail

/// Quadrature mean of phi over the region D of bc (whole box if unset).
inline Vec3 phi_mean(const FieldState& s, const BoundarySpec& bc)
{
  const auto w = detail::region_node_weights(s.grid, bc);
  Vec3 m{0, 0, 0};
  double total = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) {
    if (w[n] == 0.0) continue;
    m = m + w[n] * s.phi(n);
    total += w[n];
  }
  if (!(total > 0.0)) throw PreconditionError("phi_mean: averaging region contains no cells");
  return (1.0 / total) * m;
}

/// Writes boundary data and Dirichlet masks; for partial_average subtracts
/// the mean of phi over D from the in-plane (free) components.
inline FieldState apply_boundary(FieldState s, const BoundarySpec& bc)
{
  const Grid& g = s.grid;
  if (s.u.size() != g.num_nodes() * dofs_per_node || s.fixed.size() != s.u.size()) {
    throw PreconditionError("apply_boundary: state does not match its grid");
  }
  if (bc.q_faces != 0 && !bc.q0) throw PreconditionError("apply_boundary: Q faces given without Q data");
  const int phi_dims = g.plane_strain ? 2 : 3;
  for (std::size_t n = 0; n < g.num_nodes(); ++n) {
    const unsigned f = node_faces(g, n);
    const Vec3 x = g.position(n);
    if (g.plane_strain) {
      s.u[n * dofs_per_node + 2] = 0.0;
      s.fixed[n * dofs_per_node + 2] = 1;
    }
    unsigned axes = 0;
    if (bc.kind == BoundaryKind::dirichlet_full && f != 0) axes = 7;
    if (bc.kind == BoundaryKind::dirichlet_partial && (f & bc.phi_faces) != 0) axes = bc.phi_axes;
    if (axes != 0) {
      const Vec3 y = bc.phi0 ? bc.phi0(x) : x;
      for (int i = 0; i < phi_dims; ++i)
        if (axes & (1u << i)) {
          s.u[n * dofs_per_node + i] = y[i];
          s.fixed[n * dofs_per_node + i] = 1;
        }
    }
    if ((f & bc.q_faces) != 0) {
      s.set_q(n, bc.q0(x));
      for (int k = 3; k < dofs_per_node; ++k) s.fixed[n * dofs_per_node + k] = 1;
    }
  }
  if (bc.kind == BoundaryKind::partial_average) {
    const Vec3 m = phi_mean(s, bc);
    for (std::size_t n = 0; n < g.num_nodes(); ++n)
      for (int i = 0; i < phi_dims; ++i) s.u[n * dofs_per_node + i] -= m[i];
  }
  return s;
}

/// Removes from a search direction the part that would move the mean of phi
/// over D (partial_average only); otherwise zeroes fixed entries.
inline void project_direction(const FieldState& s, const BoundarySpec& bc, std::vector<double>& d)
{
  for (std::size_t k = 0; k < d.size(); ++k)
    if (s.fixed[k]) d[k] = 0.0;
  if (bc.kind != BoundaryKind::partial_average) return;
  const auto w = detail::region_node_weights(s.grid, bc);
  double total = 0.0;
  Vec3 m{0, 0, 0};
  for (std::size_t n = 0; n < w.size(); ++n) {
    total += w[n];
    for (int i = 0; i < 3; ++i) m[i] += w[n] * d[n * dofs_per_node + i];
  }
  for (std::size_t n = 0; n < w.size(); ++n)
    for (int i = 0; i < 3; ++i)
      if (!s.fixed[n * dofs_per_node + i]) d[n * dofs_per_node + i] -= m[i] / total;
}

// ---------------------------------------------------------------------------
// Assembly

struct TermMask {
  bool elastic = true;
  bool ldg = true;
  bool bulk = true;
  bool surface = true;
};

struct AssemblyOptions {
  TermMask terms{};
  int threads = 1;
  bool gradient = true;
};

struct Assembly {
  EnergyBreakdown energy;
  std::vector<double> gradient;  ///< empty when not requested
};

namespace detail {

/// Runs fn(begin, end) over contiguous chunks of [0, n).
template <class Fn>
void parallel_chunks(std::size_t n, int threads, Fn&& fn)
{
  const std::size_t t = std::max<std::size_t>(1, std::min<std::size_t>(std::size_t(std::max(1, threads)), n));
  if (t == 1) {
    fn(std::size_t(0), n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(t);
  for (std::size_t w = 0; w < t; ++w) {
    pool.emplace_back([&, w] {
      try {
        fn(n * w / t, n * (w + 1) / t);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Per-cell result: 4 energy terms and dE/du for the corner nodes.
struct CellResult {
  double elastic = 0.0, ldg = 0.0, bulk = 0.0;
  std::array<double, 8 * dofs_per_node> g{};
};

}  // namespace detail

/// Checks det F >= delta0 at every cell center and lambda_min(Q) > -1/3 at
/// every node; throws InfeasibleError at the first violation.
inline void require_assemblable(const FieldState& s, const EnergyParams& e)
{
  const Grid& g = s.grid;
  const auto dn = g.center_shape_gradients();
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const double d = det(deformation_gradient(s, c, dn));
    if (!(d >= e.delta0)) {
      std::ostringstream os;
      os << "infeasible state: det F = " << d << " < delta0 = " << e.delta0 << " at cell " << c;
      throw InfeasibleError(os.str(), InfeasibleError::Kind::jacobian, c, d);
    }
  }
  for (std::size_t n = 0; n < g.num_nodes(); ++n) {
    const double l = eigenvalues(s.q(n))[0];
    if (!(l > -1.0 / 3.0)) {
      std::ostringstream os;
      os << "infeasible state: lambda_min(Q) = " << l << " <= -1/3 at node " << n;
      throw InfeasibleError(os.str(), InfeasibleError::Kind::order_tensor, n, l);
    }
  }
}

/// Total discrete energy and its gradient with respect to all nodal unknowns
/// (entries of fixed dofs are zero).
///
/// Every volume term is evaluated at cell centers with one-point quadrature;
/// the LdG and bulk terms are in pulled-back form, multiplied by det F. The
/// anchoring term uses face-midpoint quadrature on bc.surface_faces. The
/// result does not depend on opts.threads.
inline Assembly assemble(const FieldState& s, const EnergyParams& params, const BoundarySpec& bc,
                         const AssemblyOptions& opts = {})
{
  const EnergyParams e = prepared(params);
  require_assemblable(s, e);
  const Grid& g = s.grid;
  const std::size_t ncells = g.num_cells();
  const int npc = g.nodes_per_cell();
  const double vol = g.cell_volume();
  const auto dn = g.center_shape_gradients();
  const bool want_grad = opts.gradient;
  const TermMask tm = opts.terms;

  std::array<Mat3, 5> basis;
  for (int n = 0; n < 5; ++n) basis[n] = QTensor::basis(n);

  std::vector<detail::CellResult> cells(ncells);
  detail::parallel_chunks(ncells, opts.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      detail::CellResult& out = cells[c];
      const auto nodes = g.cell_nodes(c);
      const Mat3 f = deformation_gradient(s, c, dn);
      const QTensor qc = cell_q(s, c);
      const Mat3 qm = qc.matrix();

      Mat3 d_f;      // dE/dF
      Mat3 d_qm;     // dE/dQ (matrix form) at the cell center
      Tensor3 d_a{};  // dE/d(grad Q)_ijm

      if (tm.elastic) {
        const StepTensor l = step_tensor(qc, e.a0);
        const ElasticEval ev = elastic_density(f, l, e);
        out.elastic = ev.value * vol;
        d_f += ev.d_f;
        d_qm += e.a0 * ev.d_l;
      }
      if (tm.ldg) {
        Tensor3 a{};
        for (int m = 0; m < npc; ++m) {
          const QTensor qn = s.q(nodes[m]);
          const Mat3 mq = qn.matrix();
          for (int ij = 0; ij < 9; ++ij)
            for (int d = 0; d < 3; ++d) a[3 * ij + d] += mq.a[ij] * dn[m][d];
        }
        const PullbackEval pv = pullback_density(a, f, qm, e);
        out.ldg = pv.value * vol;
        d_f += pv.d_f;
        d_qm += pv.d_q;
        d_a = pv.d_a;
      }
      if (tm.bulk) {
        const double t = det(f);
        const BulkEval bv = bulk_density(qc, e);
        out.bulk = t * bv.value * vol;
        d_f += bv.value * cofactor(f);
        d_qm += t * bv.d_q;
      }
      if (!want_grad) continue;

      // dE/d(node q coefficients): center-value part shared equally, gradient part through dN
      const QTensor gq_center = (vol / npc) * coeff_gradient(d_qm);
      std::array<std::array<double, 5>, 3> gq_grad{};  // [d][n] = sum_ij d_a[ij d] E_n,ij
      if (tm.ldg) {
        for (int d = 0; d < 3; ++d)
          for (int n = 0; n < 5; ++n) {
            double v = 0.0;
            for (int ij = 0; ij < 9; ++ij) v += d_a[3 * ij + d] * basis[n].a[ij];
            gq_grad[d][n] = vol * v;
          }
      }
      for (int m = 0; m < npc; ++m) {
        double* gl = &out.g[m * dofs_per_node];
        for (int i = 0; i < 3; ++i) {
          double v = 0.0;
          for (int j = 0; j < 3; ++j) v += d_f(i, j) * dn[m][j];
          gl[i] = vol * v;
        }
        for (int n = 0; n < 5; ++n) {
          double v = gq_center.c[n];
          for (int d = 0; d < 3; ++d) v += gq_grad[d][n] * dn[m][d];
          gl[3 + n] = v;
        }
        if (g.plane_strain) gl[2] = 0.0;
      }
    }
  });

  Assembly out;
  if (want_grad) out.gradient.assign(s.u.size(), 0.0);
  double elastic = 0.0, ldg = 0.0, bulk = 0.0;
  for (std::size_t c = 0; c < ncells; ++c) {
    elastic += cells[c].elastic;
    ldg += cells[c].ldg;
    bulk += cells[c].bulk;
    if (!want_grad) continue;
    const auto nodes = g.cell_nodes(c);
    for (int m = 0; m < npc; ++m)
      for (int k = 0; k < dofs_per_node; ++k) out.gradient[nodes[m] * dofs_per_node + k] += cells[c].g[m * dofs_per_node + k];
  }

  double surface = 0.0;
  if (tm.surface && bc.surface_faces != 0) {
    // faces as (axis, side); each face cell is a patch of nodes on that face
    const double t = g.plane_strain ? 2.0 * g.c : 0.0;
    for (int axis = 0; axis < 3; ++axis) {
      if (g.plane_strain && axis == 2) continue;
      for (int side = 0; side < 2; ++side) {
        if (!(bc.surface_faces & (1u << (2 * axis + side)))) continue;
        const int n_axis[3] = {g.nx, g.ny, g.nz};
        const double h[3] = {g.hx, g.hy, g.hz};
        const int u_ax = axis == 0 ? 1 : 0;
        const int v_ax = axis == 2 ? 1 : 2;
        const bool flat = g.plane_strain;  // patch is an edge segment
        const int nu = n_axis[u_ax] - 1;
        const int nv = flat ? 1 : n_axis[v_ax] - 1;
        const double area = flat ? h[u_ax] * t : h[u_ax] * h[v_ax];
        const int fixed_index = side == 0 ? 0 : n_axis[axis] - 1;
        for (int pu = 0; pu < nu; ++pu)
          for (int pv = 0; pv < nv; ++pv) {
            std::array<std::size_t, 4> pn{};
            int np = 0;
            for (int du = 0; du < 2; ++du)
              for (int dv = 0; dv < (flat ? 1 : 2); ++dv) {
                int ijk[3];
                ijk[axis] = fixed_index;
                ijk[u_ax] = pu + du;
                ijk[v_ax] = flat ? 0 : pv + dv;
                pn[np++] = g.node(ijk[0], ijk[1], ijk[2]);
              }
            QTensor qf;
            for (int m = 0; m < np; ++m) qf += s.q(pn[m]);
            qf = (1.0 / np) * qf;
            const QTensor diff = qf - e.q0_surface;
            surface += area * diff.norm() * diff.norm();
            if (want_grad) {
              for (int m = 0; m < np; ++m)
                for (int n = 0; n < 5; ++n)
                  out.gradient[pn[m] * dofs_per_node + 3 + n] += e.sigma * area * 2.0 * diff.c[n] / np;
            }
          }
      }
    }
  }

  if (want_grad) {
    for (std::size_t k = 0; k < out.gradient.size(); ++k)
      if (s.fixed[k]) out.gradient[k] = 0.0;
  }
  out.energy = make_breakdown(elastic, ldg, bulk, surface, e.sigma);
  return out;
}

inline EnergyBreakdown energy(const FieldState& s, const EnergyParams& params, const BoundarySpec& bc,
                              AssemblyOptions opts = {})
{
  opts.gradient = false;
  return assemble(s, params, bc, opts).energy;
}

}  // namespace lce
