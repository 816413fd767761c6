#include "wbary/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "wbary/errors.hpp"

namespace wbary {

void MeshSpec::validate() const {
  if (dim < 1 || dim > 3) throw std::invalid_argument("mesh: dim must be 1, 2 or 3");
  if (static_cast<int>(n_cells.size()) != dim) throw std::invalid_argument("mesh: n_cells needs one entry per dimension");
  if (static_cast<int>(lengths.size()) != dim) throw std::invalid_argument("mesh: lengths needs one entry per dimension");
  for (int c : n_cells) {
    if (c < 1) throw std::invalid_argument("mesh: cell counts must be >= 1");
  }
  for (double l : lengths) {
    if (!(l > 0.0) || !std::isfinite(l)) throw std::invalid_argument("mesh: lengths must be > 0");
  }
  if (n_t < 1) throw std::invalid_argument("mesh: n_t must be >= 1");
  if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("mesh: T must be > 0");
  if (k < 1) throw std::invalid_argument("mesh: k must be >= 1");
}

namespace {

constexpr std::size_t kMaxIndex = static_cast<std::size_t>(std::numeric_limits<int>::max());

std::size_t checked_mul(std::size_t a, std::size_t b) {
  if (a != 0 && b > kMaxIndex / a) throw ResourceLimitError("mesh: index space exceeds 2^31 entries");
  return a * b;
}

}  // namespace

AxisLattice build_axis(int cells, double length, int k) {
  if (cells < 1 || k < 1 || !(length > 0.0)) throw std::invalid_argument("build_axis: invalid axis");
  checked_mul(static_cast<std::size_t>(cells), static_cast<std::size_t>(k) + 1);

  AxisLattice ax;
  ax.cells = cells;
  ax.k = k;
  ax.length = length;
  const double h = length / cells;

  const Rule1D gl = gauss_legendre_rule(k);
  const std::vector<double> lob = gauss_lobatto_nodes(k);
  const NodalBasis1D basis(lob);

  const int nq = cells * k;
  const int nn = cells * k + 1;
  ax.quad_points.resize(nq);
  ax.quad_weights.resize(nq);
  ax.nodes.resize(nn);
  for (int c = 0; c < cells; ++c) {
    for (int q = 0; q < k; ++q) {
      ax.quad_points[c * k + q] = (c + gl.points[q]) * h;
      ax.quad_weights[c * k + q] = gl.weights[q] * h;
    }
    for (int j = 0; j <= k; ++j) ax.nodes[c * k + j] = (c + lob[j]) * h;
  }
  ax.nodes.back() = length;

  std::vector<double> interp(static_cast<std::size_t>(nq) * nn, 0.0);
  std::vector<double> deriv(interp.size(), 0.0);
  for (int c = 0; c < cells; ++c) {
    for (int q = 0; q < k; ++q) {
      const int r = c * k + q;
      for (int j = 0; j <= k; ++j) {
        interp[static_cast<std::size_t>(r) * nn + c * k + j] = basis.eval(j, gl.points[q]);
        deriv[static_cast<std::size_t>(r) * nn + c * k + j] = basis.deriv(j, gl.points[q]) / h;
      }
    }
  }
  ax.interp = AxisOperator::from_dense(nq, nn, interp);
  ax.deriv = AxisOperator::from_dense(nq, nn, deriv);
  ax.interp_t = ax.interp.transposed();
  ax.deriv_t = ax.deriv.transposed();

  // (k+1)-point rule integrates products of degree-k polynomials exactly.
  const Rule1D exact = gauss_legendre_rule(k + 1);
  std::vector<double> mass(static_cast<std::size_t>(nn) * nn, 0.0);
  std::vector<double> stiff(mass.size(), 0.0);
  for (int c = 0; c < cells; ++c) {
    for (int q = 0; q < exact.size(); ++q) {
      const double xq = exact.points[q];
      const double w = exact.weights[q];
      for (int i = 0; i <= k; ++i) {
        const double vi = basis.eval(i, xq);
        const double di = basis.deriv(i, xq);
        for (int j = 0; j <= k; ++j) {
          const std::size_t idx = static_cast<std::size_t>(c * k + i) * nn + c * k + j;
          mass[idx] += w * h * vi * basis.eval(j, xq);
          stiff[idx] += w / h * di * basis.deriv(j, xq);
        }
      }
    }
  }
  ax.mass = AxisOperator::from_dense(nn, nn, mass);
  ax.stiffness = AxisOperator::from_dense(nn, nn, stiff);
  return ax;
}

AxisOperator AxisLattice::point_evaluation(double x) const {
  const double h = cell_width();
  int c = static_cast<int>(std::floor(x / h));
  c = std::clamp(c, 0, cells - 1);
  const double xi = x / h - c;
  const NodalBasis1D basis(gauss_lobatto_nodes(k));
  std::vector<double> row(n_nodes(), 0.0);
  for (int j = 0; j <= k; ++j) row[c * k + j] = basis.eval(j, xi);
  return AxisOperator::from_dense(1, n_nodes(), row);
}

AxisOperator AxisLattice::dg_point_evaluation(double x) const {
  const double h = cell_width();
  const Rule1D gl = gauss_legendre_rule(k);
  const NodalBasis1D basis(gl.points);
  std::vector<double> row(n_quad(), 0.0);
  const double s = x / h;
  const double nearest = std::round(s);
  std::vector<int> owners;
  if (std::abs(s - nearest) < 1e-12) {
    const int b = static_cast<int>(nearest);
    if (b - 1 >= 0 && b - 1 < cells) owners.push_back(b - 1);
    if (b >= 0 && b < cells) owners.push_back(b);
  } else {
    owners.push_back(std::clamp(static_cast<int>(std::floor(s)), 0, cells - 1));
  }
  if (owners.empty()) owners.push_back(std::clamp(static_cast<int>(std::floor(s)), 0, cells - 1));
  for (int c : owners) {
    const double xi = s - c;
    for (int q = 0; q < k; ++q) row[c * k + q] += basis.eval(q, xi) / static_cast<double>(owners.size());
  }
  return AxisOperator::from_dense(1, n_quad(), row);
}

SpaceTimeMesh::SpaceTimeMesh(MeshSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  time_ = build_axis(spec_.n_t, spec_.T, spec_.k);
  n_space_pts_ = 1;
  n_space_nodes_ = 1;
  for (int a = 0; a < spec_.dim; ++a) {
    space_.push_back(build_axis(spec_.n_cells[a], spec_.lengths[a], spec_.k));
    n_space_pts_ = checked_mul(n_space_pts_, static_cast<std::size_t>(space_.back().n_quad()));
    n_space_nodes_ = checked_mul(n_space_nodes_, static_cast<std::size_t>(space_.back().n_nodes()));
  }
  checked_mul(n_space_pts_, static_cast<std::size_t>(time_.n_quad()));
  checked_mul(n_space_nodes_, static_cast<std::size_t>(time_.n_nodes()));

  spatial_weights_.assign(n_space_pts_, 1.0);
  for (std::size_t is = 0; is < n_space_pts_; ++is) {
    std::size_t rem = is;
    double w = 1.0;
    for (int a = spec_.dim - 1; a >= 0; --a) {
      const std::size_t n = static_cast<std::size_t>(space_[a].n_quad());
      w *= space_[a].quad_weights[rem % n];
      rem /= n;
    }
    spatial_weights_[is] = w;
  }
}

Shape SpaceTimeMesh::dg_shape() const {
  Shape s{n_time_pts()};
  for (const auto& ax : space_) s.push_back(static_cast<std::size_t>(ax.n_quad()));
  return s;
}

Shape SpaceTimeMesh::cg_shape() const {
  Shape s{static_cast<std::size_t>(time_.n_nodes())};
  for (const auto& ax : space_) s.push_back(static_cast<std::size_t>(ax.n_nodes()));
  return s;
}

Shape SpaceTimeMesh::space_quad_shape() const {
  Shape s;
  for (const auto& ax : space_) s.push_back(static_cast<std::size_t>(ax.n_quad()));
  return s;
}

Shape SpaceTimeMesh::space_node_shape() const {
  Shape s;
  for (const auto& ax : space_) s.push_back(static_cast<std::size_t>(ax.n_nodes()));
  return s;
}

std::array<double, 3> SpaceTimeMesh::spatial_point(std::size_t is) const {
  std::array<double, 3> x{0.0, 0.0, 0.0};
  std::size_t rem = is;
  for (int a = spec_.dim - 1; a >= 0; --a) {
    const std::size_t n = static_cast<std::size_t>(space_[a].n_quad());
    x[a] = space_[a].quad_points[rem % n];
    rem /= n;
  }
  return x;
}

double SpaceTimeMesh::domain_volume() const {
  double v = 1.0;
  for (double l : spec_.lengths) v *= l;
  return v;
}

std::vector<std::size_t> SpaceTimeMesh::element_nodes(int time_cell, std::span<const int> space_cell) const {
  if (static_cast<int>(space_cell.size()) != spec_.dim) throw ShapeError("element_nodes: wrong cell index rank");
  const int k = spec_.k;
  const Shape cg = cg_shape();
  const std::size_t per_elem = static_cast<std::size_t>(std::pow(k + 1, spec_.dim + 1));
  std::vector<std::size_t> out;
  out.reserve(per_elem);
  std::vector<int> local(spec_.dim + 1, 0);
  for (std::size_t e = 0; e < per_elem; ++e) {
    std::size_t rem = e;
    for (int a = spec_.dim; a >= 0; --a) {
      local[a] = static_cast<int>(rem % (k + 1));
      rem /= (k + 1);
    }
    std::size_t flat = static_cast<std::size_t>(time_cell * k + local[0]);
    for (int a = 0; a < spec_.dim; ++a) {
      flat = flat * cg[a + 1] + static_cast<std::size_t>(space_cell[a] * k + local[a + 1]);
    }
    out.push_back(flat);
  }
  return out;
}

SpaceTimeMesh build_mesh(const MeshSpec& spec) { return SpaceTimeMesh(spec); }

std::pair<std::size_t, std::size_t> dg_point_count(const SpaceTimeMesh& mesh) {
  return {mesh.n_time_pts(), mesh.n_space_pts()};
}

std::size_t cg_dof_count(const SpaceTimeMesh& mesh) { return mesh.cg_dof_count(); }

std::vector<double> spatial_quad_coords(const SpaceTimeMesh& mesh) {
  const int d = mesh.dim();
  std::vector<double> out(mesh.n_space_pts() * d);
  for (std::size_t is = 0; is < mesh.n_space_pts(); ++is) {
    const auto x = mesh.spatial_point(is);
    for (int a = 0; a < d; ++a) out[is * d + a] = x[a];
  }
  return out;
}

std::vector<double> temporal_quad_coords(const SpaceTimeMesh& mesh) {
  const auto t = mesh.temporal_points();
  return {t.begin(), t.end()};
}

}  // namespace wbary
