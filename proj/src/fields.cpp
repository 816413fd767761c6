#include "wbary/fields.hpp"

#include <cmath>

#include "wbary/errors.hpp"

namespace wbary {

namespace {

void check_cg(const SpaceTimeMesh& mesh, const CGField& phi) {
  if (phi.size() != mesh.cg_dof_count()) throw ShapeError("continuous field does not match the mesh");
}

void check_dg(const SpaceTimeMesh& mesh, const DGField& f) {
  if (f.n_time != mesh.n_time_pts() || f.n_space != mesh.n_space_pts() || f.size() != mesh.dg_size()) {
    throw ShapeError("discontinuous field does not match the mesh");
  }
}

void check_terminal(const SpaceTimeMesh& mesh, const TerminalField& f) {
  if (f.size() != mesh.n_space_pts()) throw ShapeError("terminal field does not match the mesh");
}

// Applies `time_op` on the time axis and, on space axis a, `deriv_axis == a`
// ? deriv : interp.
DGField evaluate(const SpaceTimeMesh& mesh, const CGField& phi, const AxisOperator& time_op, int deriv_axis) {
  std::vector<const AxisOperator*> ops{&time_op};
  for (int a = 0; a < mesh.dim(); ++a) {
    ops.push_back(a == deriv_axis ? &mesh.space_axis(a).deriv : &mesh.space_axis(a).interp);
  }
  auto r = apply_tensor_product(ops, phi.coefficients, mesh.cg_shape());
  DGField out(mesh.n_time_pts(), mesh.n_space_pts());
  out.values = std::move(r.data);
  return out;
}

std::vector<double> weighted(const SpaceTimeMesh& mesh, const DGField& f) {
  std::vector<double> w(f.values);
  const auto theta = mesh.temporal_weights();
  const auto lambda = mesh.spatial_weights();
  const std::size_t ns = mesh.n_space_pts();
  for (std::size_t it = 0; it < mesh.n_time_pts(); ++it) {
    double* row = w.data() + it * ns;
    for (std::size_t is = 0; is < ns; ++is) row[is] *= theta[it] * lambda[is];
  }
  return w;
}

}  // namespace

DGField eval_value(const SpaceTimeMesh& mesh, const CGField& phi) {
  check_cg(mesh, phi);
  return evaluate(mesh, phi, mesh.time_axis().interp, -1);
}

SpaceTimeDerivatives eval_D(const SpaceTimeMesh& mesh, const CGField& phi) {
  check_cg(mesh, phi);
  SpaceTimeDerivatives d;
  d.dt = evaluate(mesh, phi, mesh.time_axis().deriv, -1);
  for (int a = 0; a < mesh.dim(); ++a) d.grad.push_back(evaluate(mesh, phi, mesh.time_axis().interp, a));
  return d;
}

std::vector<DGField> apply_gamma_T(std::span<const DGField> values, const ReactionMatrix& gamma) {
  if (static_cast<int>(values.size()) != gamma.species()) throw ShapeError("apply_gamma_T: species count mismatch");
  std::vector<DGField> out;
  for (int p = 0; p < gamma.reactions(); ++p) {
    DGField r(values.empty() ? 0 : values[0].n_time, values.empty() ? 0 : values[0].n_space);
    for (int i = 0; i < gamma.species(); ++i) {
      const double g = gamma(i, p);
      if (g == 0.0) continue;
      if (values[i].size() != r.size()) throw ShapeError("apply_gamma_T: field size mismatch");
      for (std::size_t q = 0; q < r.size(); ++q) r.values[q] += g * values[i].values[q];
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<DGField> apply_gamma_T(const SpaceTimeMesh& mesh, std::span<const CGField> phis,
                                   const ReactionMatrix& gamma) {
  if (static_cast<int>(phis.size()) != gamma.species()) throw ShapeError("apply_gamma_T: species count mismatch");
  std::vector<DGField> values;
  values.reserve(phis.size());
  for (const auto& phi : phis) values.push_back(eval_value(mesh, phi));
  return apply_gamma_T(values, gamma);
}

std::vector<DGField> apply_gamma(const SpaceTimeMesh& mesh, std::span<const DGField> sources,
                                 const ReactionMatrix& gamma) {
  if (static_cast<int>(sources.size()) != gamma.reactions()) throw ShapeError("apply_gamma: reaction count mismatch");
  std::vector<DGField> out;
  for (int i = 0; i < gamma.species(); ++i) {
    DGField r = DGField::zeros(mesh);
    for (int p = 0; p < gamma.reactions(); ++p) {
      const double g = gamma(i, p);
      if (g == 0.0) continue;
      check_dg(mesh, sources[p]);
      for (std::size_t q = 0; q < r.size(); ++q) r.values[q] += g * sources[p].values[q];
    }
    out.push_back(std::move(r));
  }
  return out;
}

double inner_dg(const SpaceTimeMesh& mesh, const DGField& a, const DGField& b) {
  check_dg(mesh, a);
  check_dg(mesh, b);
  const auto theta = mesh.temporal_weights();
  const auto lambda = mesh.spatial_weights();
  const std::size_t ns = mesh.n_space_pts();
  double total = 0.0;
  for (std::size_t it = 0; it < mesh.n_time_pts(); ++it) {
    double slice = 0.0;
    for (std::size_t is = 0; is < ns; ++is) slice += lambda[is] * a(it, is) * b(it, is);
    total += theta[it] * slice;
  }
  return total;
}

TerminalField trace_at_time(const SpaceTimeMesh& mesh, const CGField& phi, TimeEnd which) {
  check_cg(mesh, phi);
  const std::size_t nsn = mesh.n_space_nodes();
  const std::size_t t_index = which == TimeEnd::initial ? 0 : static_cast<std::size_t>(mesh.time_axis().n_nodes() - 1);
  std::span<const double> slice(phi.coefficients.data() + t_index * nsn, nsn);
  std::vector<const AxisOperator*> ops;
  for (int a = 0; a < mesh.dim(); ++a) ops.push_back(&mesh.space_axis(a).interp);
  auto r = apply_tensor_product(ops, slice, mesh.space_node_shape());
  TerminalField out;
  out.values = std::move(r.data);
  return out;
}

double spatial_inner(const SpaceTimeMesh& mesh, const TerminalField& a, const TerminalField& b) {
  check_terminal(mesh, a);
  check_terminal(mesh, b);
  const auto lambda = mesh.spatial_weights();
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += lambda[j] * a.values[j] * b.values[j];
  return s;
}

double terminal_inner(const SpaceTimeMesh& mesh, const TerminalField& a, std::span<const CGField> phis) {
  TerminalField sum = TerminalField::zeros(mesh);
  for (const auto& phi : phis) {
    const auto tr = trace_at_time(mesh, phi, TimeEnd::terminal);
    for (std::size_t j = 0; j < sum.size(); ++j) sum.values[j] += tr.values[j];
  }
  return spatial_inner(mesh, a, sum);
}

double initial_inner(const SpaceTimeMesh& mesh, const TerminalField& a, const CGField& phi) {
  return spatial_inner(mesh, a, trace_at_time(mesh, phi, TimeEnd::initial));
}

double l1_norm_spatial(const SpaceTimeMesh& mesh, const TerminalField& a) {
  check_terminal(mesh, a);
  const auto lambda = mesh.spatial_weights();
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += lambda[j] * std::abs(a.values[j]);
  return s;
}

CGField integrate_against_basis(const SpaceTimeMesh& mesh, const DGField* value, const DGField* dt,
                                std::span<const DGField> grad) {
  if (!grad.empty() && static_cast<int>(grad.size()) != mesh.dim()) {
    throw ShapeError("integrate_against_basis: gradient needs one component per dimension");
  }
  const Shape shape = mesh.dg_shape();
  CGField out = CGField::zeros(mesh);
  auto scatter = [&](const DGField& f, const AxisOperator& time_op, int deriv_axis) {
    check_dg(mesh, f);
    const auto w = weighted(mesh, f);
    std::vector<const AxisOperator*> ops{&time_op};
    for (int a = 0; a < mesh.dim(); ++a) {
      ops.push_back(a == deriv_axis ? &mesh.space_axis(a).deriv_t : &mesh.space_axis(a).interp_t);
    }
    const auto r = apply_tensor_product(ops, w, shape);
    for (std::size_t j = 0; j < out.size(); ++j) out.coefficients[j] += r.data[j];
  };
  if (value != nullptr) scatter(*value, mesh.time_axis().interp_t, -1);
  if (dt != nullptr) scatter(*dt, mesh.time_axis().deriv_t, -1);
  for (int a = 0; a < static_cast<int>(grad.size()); ++a) scatter(grad[a], mesh.time_axis().interp_t, a);
  return out;
}

CGField integrate_trace_against_basis(const SpaceTimeMesh& mesh, const TerminalField& a, TimeEnd which) {
  check_terminal(mesh, a);
  std::vector<double> w(a.values);
  const auto lambda = mesh.spatial_weights();
  for (std::size_t j = 0; j < w.size(); ++j) w[j] *= lambda[j];
  std::vector<const AxisOperator*> ops;
  for (int d = 0; d < mesh.dim(); ++d) ops.push_back(&mesh.space_axis(d).interp_t);
  const auto r = apply_tensor_product(ops, w, mesh.space_quad_shape());
  CGField out = CGField::zeros(mesh);
  const std::size_t nsn = mesh.n_space_nodes();
  const std::size_t t_index = which == TimeEnd::initial ? 0 : static_cast<std::size_t>(mesh.time_axis().n_nodes() - 1);
  for (std::size_t j = 0; j < nsn; ++j) out.coefficients[t_index * nsn + j] = r.data[j];
  return out;
}

}  // namespace wbary
