#include "wbary/pdhg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wbary/errors.hpp"

namespace wbary {

namespace {

EllipticOperator make_operator(const SpaceTimeMesh& mesh, const ModelParams& params, const PDHGConfig& config) {
  params.validate(config.mode == RunMode::barycenter);
  if (!(config.tol > 0.0)) throw std::invalid_argument("tol must be > 0");
  if (config.max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
  if (config.diagnostics_every < 1) throw std::invalid_argument("diagnostics_every must be >= 1");
  return assemble_operator(mesh, params.gamma, config.mode == RunMode::barycenter);
}

std::vector<TerminalField> clipped(std::vector<TerminalField> fields, const SpaceTimeMesh& mesh,
                                   const ModelParams& params, const char* what) {
  for (auto& f : fields) {
    if (f.size() != mesh.n_space_pts()) throw ShapeError(std::string(what) + ": density does not match the mesh");
    for (double& v : f.values) {
      if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite density value");
      v = std::clamp(v, params.rho_min, params.rho_max);
    }
  }
  return fields;
}

double spatial_integral(const SpaceTimeMesh& mesh, std::span<const double> slice) {
  const auto lambda = mesh.spatial_weights();
  double s = 0.0;
  for (std::size_t j = 0; j < slice.size(); ++j) s += lambda[j] * slice[j];
  return s;
}

}  // namespace

Solver::Solver(const SpaceTimeMesh& mesh, ModelParams params, PDHGConfig config, std::vector<TerminalField> rho0,
               std::vector<TerminalField> rho1)
    : mesh_(&mesh), params_(std::move(params)), config_(std::move(config)), op_(make_operator(mesh, params_, config_)) {
  if (static_cast<int>(rho0.size()) != params_.n_species) throw ShapeError("one initial density per species required");
  rho0_ = clipped(std::move(rho0), mesh, params_, "initial");
  if (config_.mode == RunMode::geodesic) {
    if (static_cast<int>(rho1.size()) != params_.n_species) {
      throw std::invalid_argument("geodesic mode needs one terminal density per species");
    }
    rho1_ = clipped(std::move(rho1), mesh, params_, "terminal");
  } else if (!rho1.empty()) {
    throw std::invalid_argument("terminal densities are only used in geodesic mode");
  }
}

SolverState Solver::initialize() const {
  const auto& mesh = *mesh_;
  const int n = params_.n_species;
  SolverState s;
  s.u = PrimalFields::zeros(mesh, n, params_.n_reactions());
  const std::size_t ns = mesh.n_space_pts();
  for (int i = 0; i < n; ++i) {
    for (std::size_t it = 0; it < mesh.n_time_pts(); ++it) {
      std::copy(rho0_[i].values.begin(), rho0_[i].values.end(), s.u.rho[i].values.begin() + it * ns);
    }
  }
  s.phi.assign(n, CGField::zeros(mesh));
  s.phi_prev = s.phi;
  s.phi_tilde = s.phi;
  s.delta = s.phi;
  if (config_.mode == RunMode::barycenter) {
    s.varrho = TerminalField::zeros(mesh);
    for (const auto& r : rho0_) {
      for (std::size_t j = 0; j < ns; ++j) s.varrho.values[j] += r.values[j] / n;
    }
  }
  return s;
}

StepOneInputs Solver::step_one_inputs(const SolverState& state, double sigma) const {
  StepOneInputs in;
  in.primal = &state.u;
  in.gamma = &params_.gamma;
  in.initial = rho0_;
  in.deltas = state.delta;
  in.sigma_phi = sigma;
  if (config_.mode == RunMode::geodesic) {
    in.terminal_targets = rho1_;
  } else {
    in.varrho = &state.varrho;
  }
  return in;
}

void Solver::step_phi(SolverState& state) const {
  const int n = params_.n_species;
  state.phi_prev = state.phi;
  state.last_linear_iterations = 0;
  for (int i = 0; i < n; ++i) {
    // state.delta holds this iteration's increments for j < i and the
    // previous iteration's for j > i.
    const auto rhs = assemble_rhs(op_, i, step_one_inputs(state, params_.sigma_phi));
    auto res = pcg_solve(op_, rhs, config_.linear);
    state.last_linear_iterations += res.iterations;
    if (!res.converged) state.linear_failure = true;
    state.delta[i] = std::move(res.x);
    auto& phi = state.phi[i].coefficients;
    const auto& d = state.delta[i].coefficients;
    for (std::size_t q = 0; q < phi.size(); ++q) phi[q] += d[q];
  }
  for (int i = 0; i < n; ++i) {
    auto& tilde = state.phi_tilde[i].coefficients;
    const auto& now = state.phi[i].coefficients;
    const auto& before = state.phi_prev[i].coefficients;
    for (std::size_t q = 0; q < tilde.size(); ++q) tilde[q] = 2.0 * now[q] - before[q];
  }
}

double Solver::step_primal(SolverState& state) const {
  const auto& mesh = *mesh_;
  const int n = params_.n_species;
  const int r = params_.n_reactions();
  const int d = mesh.dim();
  double err = 0.0;

  if (config_.mode == RunMode::barycenter) {
    TerminalField next = state.varrho;
    for (const auto& phi : state.phi_tilde) {
      const auto tr = trace_at_time(mesh, phi, TimeEnd::terminal);
      for (std::size_t j = 0; j < next.size(); ++j) next.values[j] -= params_.sigma_u * tr.values[j];
    }
    if (config_.clamp_varrho) {
      for (double& v : next.values) v = std::max(v, 0.0);
    }
    TerminalField change(next.size());
    for (std::size_t j = 0; j < next.size(); ++j) change.values[j] = next.values[j] - state.varrho.values[j];
    err = l1_norm_spatial(mesh, change);
    state.varrho = std::move(next);
  }

  const PrimalFields bar = compute_ubar(state.u, state.phi_tilde, mesh, params_);
  PointBars pb(n, r, d);
  std::vector<double> start(n);
  const auto theta = mesh.temporal_weights();
  const auto lambda = mesh.spatial_weights();
  const std::size_t ns = mesh.n_space_pts();
  double rho_change = 0.0;
  for (std::size_t q = 0; q < mesh.dg_size(); ++q) {
    for (int i = 0; i < n; ++i) {
      pb.rho_bar[i] = bar.rho[i].values[q];
      pb.rho_prev[i] = state.u.rho[i].values[q];
      start[i] = pb.rho_prev[i];
      for (int a = 0; a < d; ++a) pb.m_bar[static_cast<std::size_t>(i) * d + a] = bar.m[i][a].values[q];
    }
    for (int p = 0; p < r; ++p) pb.s_bar[p] = bar.s[p].values[q];
    const auto rho = prox_density_sweep(start, pb, params_);
    const auto fs = recover_flux_source(rho, pb, params_);
    const double w = theta[q / ns] * lambda[q % ns];
    for (int i = 0; i < n; ++i) {
      if (!(rho[i] >= params_.rho_min && rho[i] <= params_.rho_max)) {
        throw NumericalError("density left [rho_min, rho_max] after the prox step");
      }
      rho_change += w * std::abs(rho[i] - state.u.rho[i].values[q]);
      state.u.rho[i].values[q] = rho[i];
      for (int a = 0; a < d; ++a) state.u.m[i][a].values[q] = fs.m[static_cast<std::size_t>(i) * d + a];
    }
    for (int p = 0; p < r; ++p) state.u.s[p].values[q] = fs.s[p];
  }
  if (config_.mode == RunMode::geodesic) err = rho_change;
  return err;
}

void Solver::step(SolverState& state) const {
  step_phi(state);
  state.err = step_primal(state);
  if (!std::isfinite(state.err)) throw NumericalError("non-finite err in PDHG iteration");
  ++state.iteration;
  const bool full = state.iteration % config_.diagnostics_every == 0;
  HistoryRecord rec;
  if (full) rec = diagnostics(state);
  rec.iter = state.iteration;
  rec.err = state.err;
  rec.linear_iterations = state.last_linear_iterations;
  state.history.push_back(rec);
}

void Solver::iterate(SolverState& state, const std::function<void(const HistoryRecord&)>& progress) const {
  state.converged = false;
  while (state.iteration < config_.max_iter) {
    step(state);
    if (progress) progress(state.history.back());
    if (state.err < config_.tol) {
      state.converged = true;
      break;
    }
  }
  // The closing record always carries the full diagnostics.
  if (!state.history.empty() && std::isnan(state.history.back().objective)) {
    HistoryRecord rec = diagnostics(state);
    rec.iter = state.history.back().iter;
    rec.err = state.history.back().err;
    rec.linear_iterations = state.history.back().linear_iterations;
    state.history.back() = rec;
  }
}

double Solver::objective(const SolverState& state) const {
  const auto& mesh = *mesh_;
  const int n = params_.n_species;
  const int d = mesh.dim();
  const auto theta = mesh.temporal_weights();
  const auto lambda = mesh.spatial_weights();
  const std::size_t ns = mesh.n_space_pts();
  std::vector<double> rho(n);
  double total = 0.0;
  for (std::size_t q = 0; q < mesh.dg_size(); ++q) {
    const double w = theta[q / ns] * lambda[q % ns];
    for (int i = 0; i < n; ++i) rho[i] = state.u.rho[i].values[q];
    const auto mob = mobilities(rho, params_);
    double local = 0.0;
    for (int i = 0; i < n; ++i) {
      double m2 = 0.0;
      for (int a = 0; a < d; ++a) m2 += state.u.m[i][a].values[q] * state.u.m[i][a].values[q];
      local += m2 / (2.0 * mob.v1[i]);
      if (params_.beta[i] != 0.0) local += params_.beta[i] * rho[i] * std::log(rho[i]);
    }
    for (int p = 0; p < params_.n_reactions(); ++p) {
      if (mob.v2[p] > 0.0) local += state.u.s[p].values[q] * state.u.s[p].values[q] / (2.0 * mob.v2[p]);
    }
    total += w * local;
  }
  return total;
}

double Solver::distance(const SolverState& state) const {
  return std::sqrt(std::max(0.0, 2.0 * mesh_->terminal_time() * objective(state)));
}

std::vector<double> Solver::mass_per_time(const SolverState& state) const {
  const auto& mesh = *mesh_;
  const std::size_t ns = mesh.n_space_pts();
  std::vector<double> out(mesh.n_time_pts(), 0.0);
  for (std::size_t it = 0; it < mesh.n_time_pts(); ++it) {
    for (const auto& r : state.u.rho) {
      out[it] += spatial_integral(mesh, std::span<const double>(r.values).subspan(it * ns, ns));
    }
  }
  return out;
}

HistoryRecord Solver::diagnostics(const SolverState& state) const {
  const auto& mesh = *mesh_;
  const int n = params_.n_species;
  const int d = mesh.dim();
  HistoryRecord rec;
  rec.iter = state.iteration;
  rec.err = state.err;
  rec.objective = objective(state);

  double km = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto D = eval_D(mesh, state.phi[i]);
    for (int a = 0; a < d; ++a) {
      DGField diff = DGField::zeros(mesh);
      for (std::size_t q = 0; q < diff.size(); ++q) {
        diff.values[q] = state.u.m[i][a].values[q] / state.u.rho[i].values[q] - D.grad[a].values[q];
      }
      km += inner_dg(mesh, diff, diff);
    }
  }
  rec.kkt_m = std::sqrt(km);

  if (params_.alpha > 0.0 && params_.n_reactions() > 0) {
    const auto hat = apply_gamma_T(mesh, state.phi, params_.gamma);
    std::vector<double> rho(n);
    double ks = 0.0;
    for (int p = 0; p < params_.n_reactions(); ++p) {
      DGField diff = DGField::zeros(mesh);
      for (std::size_t q = 0; q < diff.size(); ++q) {
        for (int i = 0; i < n; ++i) rho[i] = state.u.rho[i].values[q];
        const auto mob = mobilities(rho, params_);
        diff.values[q] = state.u.s[p].values[q] / mob.v2[p] - hat[p].values[q];
      }
      ks += inner_dg(mesh, diff, diff);
    }
    rec.kkt_s = std::sqrt(ks);
  }

  double m0 = 0.0;
  for (const auto& r : rho0_) m0 += spatial_integral(mesh, r.values);
  double drift = 0.0;
  for (double m : mass_per_time(state)) drift = std::max(drift, std::abs(m - m0));
  rec.mass_drift = drift;

  if (config_.mode == RunMode::barycenter) {
    TerminalField sum = TerminalField::zeros(mesh);
    for (const auto& phi : state.phi) {
      const auto tr = trace_at_time(mesh, phi, TimeEnd::terminal);
      for (std::size_t j = 0; j < sum.size(); ++j) sum.values[j] += tr.values[j];
    }
    rec.phi_T_sum = std::sqrt(spatial_inner(mesh, sum, sum));
  }

  double cont = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto rhs = assemble_rhs(op_, i, step_one_inputs(state, 1.0));
    for (double v : rhs.coefficients) cont += v * v;
  }
  rec.continuity = std::sqrt(cont);
  rec.linear_iterations = state.last_linear_iterations;
  return rec;
}

}  // namespace wbary
