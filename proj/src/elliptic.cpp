#include "wbary/elliptic.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wbary/errors.hpp"

namespace wbary {

namespace {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

MatrixRM to_matrix(const AxisOperator& op) {
  const auto d = op.to_dense();
  return Eigen::Map<const MatrixRM>(d.data(), op.rows, op.cols);
}

AxisOperator from_matrix(const MatrixRM& m) {
  return AxisOperator::from_dense(static_cast<int>(m.rows()), static_cast<int>(m.cols()),
                                  std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
}

// Outer product of per-axis vectors, laid out like a C-order tensor.
std::vector<double> kron(const std::vector<std::vector<double>>& factors) {
  std::vector<double> out{1.0};
  for (const auto& f : factors) {
    std::vector<double> next;
    next.reserve(out.size() * f.size());
    for (double a : out) {
      for (double b : f) next.push_back(a * b);
    }
    out = std::move(next);
  }
  return out;
}

std::vector<double> kron_sum(const std::vector<std::vector<double>>& factors) {
  std::vector<double> out{0.0};
  for (const auto& f : factors) {
    std::vector<double> next;
    next.reserve(out.size() * f.size());
    for (double a : out) {
      for (double b : f) next.push_back(a + b);
    }
    out = std::move(next);
  }
  return out;
}

void add_into(std::vector<double>& acc, const std::vector<double>& v) {
  for (std::size_t q = 0; q < acc.size(); ++q) acc[q] += v[q];
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t q = 0; q < a.size(); ++q) s += a[q] * b[q];
  return s;
}

}  // namespace

EllipticOperator::EllipticOperator(const SpaceTimeMesh& mesh, double c, bool terminal_term)
    : mesh_(&mesh), c_(c), terminal_(terminal_term) {
  if (!(c >= 0.0) || !std::isfinite(c)) throw std::invalid_argument("elliptic operator: mass coefficient must be >= 0");
  const auto& ta = mesh.time_axis();
  const int nt = ta.n_nodes();
  MatrixRM kt = to_matrix(ta.stiffness);
  MatrixRM mt = to_matrix(ta.mass);
  MatrixRM kt_end = kt;
  if (terminal_) kt_end(nt - 1, nt - 1) += 1.0;
  time_main_ = from_matrix(kt_end + c_ * mt);

  // Jacobi diagonal.
  std::vector<std::vector<double>> first{time_main_.diagonal()};
  for (int a = 0; a < mesh.dim(); ++a) first.push_back(mesh.space_axis(a).mass.diagonal());
  diagonal_ = kron(first);
  for (int a = 0; a < mesh.dim(); ++a) {
    std::vector<std::vector<double>> f{ta.mass.diagonal()};
    for (int b = 0; b < mesh.dim(); ++b) {
      f.push_back(b == a ? mesh.space_axis(b).stiffness.diagonal() : mesh.space_axis(b).mass.diagonal());
    }
    add_into(diagonal_, kron(f));
  }

  // Fast diagonalization: K V = M V diag(lambda), V^T M V = I on every axis.
  std::vector<std::vector<double>> eigenvalues;
  auto decompose = [&](const MatrixRM& k, const MatrixRM& m) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(k, m);
    if (es.info() != Eigen::Success) throw NumericalError("elliptic operator: eigendecomposition failed");
    const MatrixRM v = es.eigenvectors();
    eig_vectors_.push_back(from_matrix(v));
    eig_vectors_t_.push_back(from_matrix(v.transpose()));
    const auto& ev = es.eigenvalues();
    eigenvalues.emplace_back(ev.data(), ev.data() + ev.size());
  };
  decompose(kt_end, mt);
  for (double& mu : eigenvalues.back()) mu += c_;
  for (int a = 0; a < mesh.dim(); ++a) {
    decompose(to_matrix(mesh.space_axis(a).stiffness), to_matrix(mesh.space_axis(a).mass));
  }
  const auto lam = kron_sum(eigenvalues);
  double scale = 0.0;
  for (double v : lam) scale = std::max(scale, std::abs(v));
  inv_eigenvalues_.resize(lam.size());
  for (std::size_t q = 0; q < lam.size(); ++q) {
    // Zero modes (no mass or terminal term) are projected out.
    inv_eigenvalues_[q] = std::abs(lam[q]) > 1e-11 * scale ? 1.0 / lam[q] : 0.0;
  }
}

std::vector<double> EllipticOperator::apply(std::span<const double> u) const {
  if (u.size() != size()) throw ShapeError("elliptic operator: vector size mismatch");
  const auto& mesh = *mesh_;
  const Shape shape = mesh.cg_shape();
  std::vector<const AxisOperator*> ops{&time_main_};
  for (int a = 0; a < mesh.dim(); ++a) ops.push_back(&mesh.space_axis(a).mass);
  auto out = apply_tensor_product(ops, u, shape).data;
  for (int a = 0; a < mesh.dim(); ++a) {
    ops[0] = &mesh.time_axis().mass;
    for (int b = 0; b < mesh.dim(); ++b) {
      ops[b + 1] = b == a ? &mesh.space_axis(b).stiffness : &mesh.space_axis(b).mass;
    }
    add_into(out, apply_tensor_product(ops, u, shape).data);
  }
  return out;
}

CGField EllipticOperator::apply(const CGField& u) const {
  CGField out;
  out.coefficients = apply(std::span<const double>(u.coefficients));
  return out;
}

std::vector<double> EllipticOperator::apply_mass(std::span<const double> u) const {
  if (u.size() != size()) throw ShapeError("elliptic operator: vector size mismatch");
  std::vector<const AxisOperator*> ops{&mesh_->time_axis().mass};
  for (int a = 0; a < mesh_->dim(); ++a) ops.push_back(&mesh_->space_axis(a).mass);
  return apply_tensor_product(ops, u, mesh_->cg_shape()).data;
}

std::vector<double> EllipticOperator::apply_terminal_mass(std::span<const double> u) const {
  if (u.size() != size()) throw ShapeError("elliptic operator: vector size mismatch");
  const std::size_t nsn = mesh_->n_space_nodes();
  const std::size_t last = u.size() - nsn;
  std::vector<const AxisOperator*> ops;
  for (int a = 0; a < mesh_->dim(); ++a) ops.push_back(&mesh_->space_axis(a).mass);
  const auto r = apply_tensor_product(ops, u.subspan(last, nsn), mesh_->space_node_shape()).data;
  std::vector<double> out(u.size(), 0.0);
  std::copy(r.begin(), r.end(), out.begin() + static_cast<std::ptrdiff_t>(last));
  return out;
}

std::vector<double> EllipticOperator::precondition(std::span<const double> r, Preconditioner kind) const {
  if (r.size() != size()) throw ShapeError("elliptic operator: vector size mismatch");
  if (kind == Preconditioner::jacobi) {
    std::vector<double> z(r.size());
    for (std::size_t q = 0; q < z.size(); ++q) z[q] = r[q] / diagonal_[q];
    return z;
  }
  std::vector<const AxisOperator*> ops;
  for (const auto& op : eig_vectors_t_) ops.push_back(&op);
  auto z = apply_tensor_product(ops, r, mesh_->cg_shape()).data;
  for (std::size_t q = 0; q < z.size(); ++q) z[q] *= inv_eigenvalues_[q];
  for (std::size_t a = 0; a < ops.size(); ++a) ops[a] = &eig_vectors_[a];
  return apply_tensor_product(ops, z, mesh_->cg_shape()).data;
}

EllipticOperator assemble_operator(const SpaceTimeMesh& mesh, const ReactionMatrix& gamma, bool terminal_term) {
  if (gamma.species() < 1) throw std::invalid_argument("assemble_operator: empty reaction matrix");
  const double c = gamma.gram(0, 0);
  for (int i = 1; i < gamma.species(); ++i) {
    if (gamma.gram(i, i) != c) {
      throw std::invalid_argument("assemble_operator: diag(Gamma Gamma^T) must be equal for all species");
    }
  }
  return EllipticOperator(mesh, c, terminal_term);
}

CGField assemble_rhs(const EllipticOperator& op, int species, const StepOneInputs& in) {
  const auto& mesh = op.mesh();
  if (in.primal == nullptr || in.gamma == nullptr) throw std::invalid_argument("assemble_rhs: missing inputs");
  const auto& u = *in.primal;
  const auto& g = *in.gamma;
  const int n = g.species();
  if (species < 0 || species >= n) throw std::invalid_argument("assemble_rhs: species index out of range");
  if (static_cast<int>(u.rho.size()) != n || static_cast<int>(u.m.size()) != n ||
      static_cast<int>(u.s.size()) != g.reactions() || static_cast<int>(in.initial.size()) != n) {
    throw ShapeError("assemble_rhs: inconsistent state");
  }
  const bool geodesic = !in.terminal_targets.empty();
  if (geodesic && static_cast<int>(in.terminal_targets.size()) != n) throw ShapeError("assemble_rhs: target count");
  if (!geodesic && in.varrho == nullptr) throw std::invalid_argument("assemble_rhs: missing terminal density");
  if (!in.deltas.empty() && static_cast<int>(in.deltas.size()) != n) throw ShapeError("assemble_rhs: delta count");
  const double sig = in.sigma_phi;

  // Species-i source (Gamma s)_i.
  DGField src = DGField::zeros(mesh);
  bool has_src = false;
  for (int p = 0; p < g.reactions(); ++p) {
    const double gip = g(species, p);
    if (gip == 0.0) continue;
    if (u.s[p].size() != src.size()) throw ShapeError("assemble_rhs: source size");
    has_src = true;
    for (std::size_t q = 0; q < src.size(); ++q) src.values[q] += gip * u.s[p].values[q];
  }
  CGField rhs = integrate_against_basis(mesh, has_src ? &src : nullptr, &u.rho[species], u.m[species]);
  for (auto& v : rhs.coefficients) v *= -sig;

  const TerminalField& target = geodesic ? in.terminal_targets[species] : *in.varrho;
  const auto t_end = integrate_trace_against_basis(mesh, target, TimeEnd::terminal);
  const auto t_start = integrate_trace_against_basis(mesh, in.initial[species], TimeEnd::initial);
  for (std::size_t j = 0; j < rhs.size(); ++j) {
    rhs.coefficients[j] += sig * (t_end.coefficients[j] - t_start.coefficients[j]);
  }

  if (in.deltas.empty()) return rhs;
  std::vector<double> coupled(rhs.size(), 0.0);
  std::vector<double> others(rhs.size(), 0.0);
  bool any_coupled = false, any_other = false;
  for (int j = 0; j < n; ++j) {
    if (j == species) continue;
    const auto& dj = in.deltas[j].coefficients;
    if (dj.size() != rhs.size()) throw ShapeError("assemble_rhs: delta size");
    const double gij = g.gram(species, j);
    if (gij != 0.0) {
      any_coupled = true;
      for (std::size_t q = 0; q < dj.size(); ++q) coupled[q] += gij * dj[q];
    }
    any_other = true;
    for (std::size_t q = 0; q < dj.size(); ++q) others[q] += dj[q];
  }
  if (any_coupled) {
    const auto mc = op.apply_mass(coupled);
    for (std::size_t q = 0; q < rhs.size(); ++q) rhs.coefficients[q] -= mc[q];
  }
  if (any_other && op.has_terminal_term()) {
    const auto eo = op.apply_terminal_mass(others);
    for (std::size_t q = 0; q < rhs.size(); ++q) rhs.coefficients[q] -= eo[q];
  }
  return rhs;
}

PcgResult pcg_solve(const EllipticOperator& op, const CGField& rhs, const PcgOptions& options) {
  const std::size_t n = op.size();
  if (rhs.size() != n) throw ShapeError("pcg_solve: right-hand side size mismatch");
  PcgResult res;
  res.x = CGField(n);
  const double bnorm = std::sqrt(dot(rhs.coefficients, rhs.coefficients));
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }
  std::vector<double> r = rhs.coefficients;
  std::vector<double> z = op.precondition(r, options.preconditioner);
  std::vector<double> p = z;
  double rz = dot(r, z);
  auto& x = res.x.coefficients;
  double rnorm = bnorm;
  for (int it = 1; it <= options.max_iter; ++it) {
    const auto ap = op.apply(p);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) {
      if (!std::isfinite(pap)) throw NumericalError("pcg_solve: non-finite curvature");
      break;
    }
    const double alpha = rz / pap;
    for (std::size_t q = 0; q < n; ++q) {
      x[q] += alpha * p[q];
      r[q] -= alpha * ap[q];
    }
    res.iterations = it;
    if (options.on_iterate) options.on_iterate(it, x);
    rnorm = std::sqrt(dot(r, r));
    if (!std::isfinite(rnorm)) throw NumericalError("pcg_solve: non-finite residual");
    if (rnorm <= options.tol * bnorm) break;
    z = op.precondition(r, options.preconditioner);
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t q = 0; q < n; ++q) p[q] = z[q] + beta * p[q];
  }
  res.relative_residual = rnorm / bnorm;
  res.converged = res.relative_residual <= options.tol;
  return res;
}

std::vector<double> dense_matrix(const EllipticOperator& op) {
  const std::size_t n = op.size();
  if (n > 2000) throw ResourceLimitError("dense_matrix: more than 2000 unknowns");
  std::vector<double> a(n * n);
  std::vector<double> e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    const auto col = op.apply(e);
    for (std::size_t i = 0; i < n; ++i) a[i * n + j] = col[i];
    e[j] = 0.0;
  }
  return a;
}

CGField dense_solve_oracle(const EllipticOperator& op, const CGField& rhs) {
  const std::size_t n = op.size();
  if (rhs.size() != n) throw ShapeError("dense_solve_oracle: right-hand side size mismatch");
  const auto a = dense_matrix(op);
  const Eigen::Map<const MatrixRM> mat(a.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Eigen::FullPivLU<Eigen::MatrixXd> lu(mat);
  if (!lu.isInvertible()) throw NumericalError("dense_solve_oracle: singular operator");
  const Eigen::Map<const Eigen::VectorXd> b(rhs.coefficients.data(), static_cast<Eigen::Index>(n));
  const Eigen::VectorXd x = lu.solve(b);
  CGField out(n);
  std::copy(x.data(), x.data() + n, out.coefficients.begin());
  return out;
}

}  // namespace wbary
