#include "wbary/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "wbary/errors.hpp"

namespace wbary {

// ---- reaction matrix ----

ReactionMatrix::ReactionMatrix(int species, int reactions)
    : species_(species), reactions_(reactions),
      entries_(static_cast<std::size_t>(std::max(species, 0)) * std::max(reactions, 0), 0.0) {
  if (species < 1 || reactions < 0) throw std::invalid_argument("reaction matrix needs >= 1 species and >= 0 reactions");
}

ReactionMatrix::ReactionMatrix(int species, int reactions, std::vector<double> row_major)
    : ReactionMatrix(species, reactions) {
  if (row_major.size() != entries_.size()) throw std::invalid_argument("reaction matrix entry count mismatch");
  entries_ = std::move(row_major);
}

bool ReactionMatrix::columns_sum_to_zero(double tol) const {
  for (int p = 0; p < reactions_; ++p) {
    double s = 0.0;
    for (int i = 0; i < species_; ++i) s += (*this)(i, p);
    if (std::abs(s) > tol) return false;
  }
  return true;
}

double ReactionMatrix::gram(int i, int j) const {
  double s = 0.0;
  for (int p = 0; p < reactions_; ++p) s += (*this)(i, p) * (*this)(j, p);
  return s;
}

bool ReactionMatrix::is_cyclic() const {
  if (species_ < 2 || reactions_ != species_) return false;
  const auto ref = gamma_cyclic(species_);
  return entries_ == ref.entries_;
}

ReactionMatrix gamma_cyclic(int n_species) {
  if (n_species < 2) throw std::invalid_argument("cyclic reaction matrix needs at least 2 species");
  ReactionMatrix g(n_species, n_species);
  for (int i = 0; i < n_species; ++i) {
    g(i, i) = 1.0;
    g(i, (i + n_species - 1) % n_species) = -1.0;
  }
  return g;
}

// ---- parameters ----

void ModelParams::validate(bool require_mass_conservation) const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (n_species < 1) fail("n_species must be >= 1");
  if (gamma.species() != n_species) fail("gamma must have one row per species");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha must be >= 0");
  if (static_cast<int>(beta.size()) != n_species) fail("beta must have one entry per species");
  for (double b : beta) {
    if (!(b >= 0.0) || !std::isfinite(b)) fail("beta must be >= 0");
  }
  if (!(rho_min > 0.0)) fail("rho_min must be > 0");
  if (!(rho_max > rho_min) || !std::isfinite(rho_max)) fail("rho_max must exceed rho_min");
  if (!(sigma_u > 0.0)) fail("sigma_u must be > 0");
  if (!(sigma_phi > 0.0)) fail("sigma_phi must be > 0");
  if (prox_sweeps < 1) fail("prox_sweeps must be >= 1");
  if (!(brent_tol > 0.0)) fail("brent_tol must be > 0");
  if (brent_max_iter < 1) fail("brent_max_iter must be >= 1");
  if (require_mass_conservation && !gamma.columns_sum_to_zero()) fail("gamma columns must sum to zero");
  if (alpha > 0.0) {
    if (mobility == ReactionMobility::log_mean && !gamma.is_cyclic()) {
      fail("log-mean reaction mobility needs the cyclic gamma (use alpha = 0 or the linear mobility)");
    }
    if (mobility == ReactionMobility::linear && gamma.reactions() > n_species) {
      fail("linear reaction mobility needs at most one reaction per species");
    }
  }
}

ModelParams make_cyclic_model(int n_species, double alpha, double beta) {
  ModelParams p;
  p.n_species = n_species;
  p.gamma = n_species >= 2 ? gamma_cyclic(n_species) : ReactionMatrix(n_species, 0);
  p.alpha = alpha;
  p.beta.assign(std::max(n_species, 0), beta);
  return p;
}

double PointBars::m_bar_sq(int i) const {
  double s = 0.0;
  for (int a = 0; a < dim; ++a) {
    const double v = m_bar[static_cast<std::size_t>(i) * dim + a];
    s += v * v;
  }
  return s;
}

// ---- pointwise physics ----

namespace {

constexpr double kNearEqualLog = 1e-10;

// log_mean from precomputed logarithms.
double log_mean_logs(double a, double b, double la, double lb) {
  const double d = la - lb;
  if (std::abs(d) < kNearEqualLog) return 0.5 * (a + b);
  // Difference of logs loses digits for close arguments; b - a is exact there.
  if (std::abs(d) < 1e-3) return (b - a) / std::log1p((b - a) / a);
  return (a - b) / d;
}

// d/da of log_mean(a, b).
double log_mean_da(double a, double b) {
  const double d = std::log(a) - std::log(b);
  if (std::abs(d) < 1e-4) return std::exp(-d) * (0.5 + d / 3.0 + d * d / 8.0);
  return (d - (a - b) / a) / (d * d);
}

void check_bounds(std::span<const double> rho, const ModelParams& params) {
  if (static_cast<int>(rho.size()) != params.n_species) throw ShapeError("density vector has wrong species count");
  for (double r : rho) {
    if (!(r >= params.rho_min && r <= params.rho_max)) {
      throw DomainError("density " + std::to_string(r) + " outside [rho_min, rho_max]");
    }
  }
}

// Densities that V2 of reaction p depends on; second = -1 for the linear mobility.
void reaction_partner(const ModelParams& params, int p, int& first, int& second) {
  first = p;
  second = params.mobility == ReactionMobility::log_mean ? (p + 1) % params.n_species : -1;
}

double v2_value(const ModelParams& params, std::span<const double> rho, int p) {
  if (params.alpha == 0.0) return 0.0;
  int a = 0, b = 0;
  reaction_partner(params, p, a, b);
  if (b < 0) return params.alpha * rho[a];
  return params.alpha * log_mean(rho[a], rho[b]);
}

}  // namespace

double log_mean(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("log_mean needs positive arguments");
  return log_mean_logs(a, b, std::log(a), std::log(b));
}

Mobilities mobilities(std::span<const double> rho, const ModelParams& params) {
  check_bounds(rho, params);
  Mobilities out;
  out.v1.assign(rho.begin(), rho.end());
  out.v2.resize(params.n_reactions());
  for (int p = 0; p < params.n_reactions(); ++p) out.v2[p] = v2_value(params, rho, p);
  return out;
}

FluxSource recover_flux_source(std::span<const double> rho, const PointBars& bars, const ModelParams& params) {
  const auto mob = mobilities(rho, params);
  const double sig = params.sigma_u;
  FluxSource out;
  out.m.resize(bars.m_bar.size());
  for (int i = 0; i < params.n_species; ++i) {
    const double f = mob.v1[i] / (sig + mob.v1[i]);
    for (int a = 0; a < bars.dim; ++a) {
      const std::size_t q = static_cast<std::size_t>(i) * bars.dim + a;
      out.m[q] = f * bars.m_bar[q];
    }
  }
  out.s.resize(bars.s_bar.size());
  for (int p = 0; p < params.n_reactions(); ++p) out.s[p] = mob.v2[p] / (sig + mob.v2[p]) * bars.s_bar[p];
  return out;
}

double pointwise_objective(std::span<const double> rho, const PointBars& bars, const ModelParams& params) {
  const auto mob = mobilities(rho, params);
  const double sig = params.sigma_u;
  double total = 0.0;
  for (int i = 0; i < params.n_species; ++i) {
    const double r = rho[i];
    total += bars.m_bar_sq(i) / (2.0 * (sig + mob.v1[i]));
    total += (r - bars.rho_bar[i]) * (r - bars.rho_bar[i]) / (2.0 * sig);
    if (params.beta[i] != 0.0) total += params.beta[i] * r * std::log(r);
  }
  for (int p = 0; p < params.n_reactions(); ++p) total += bars.s_bar[p] * bars.s_bar[p] / (2.0 * (sig + mob.v2[p]));
  return total;
}

std::vector<double> pointwise_objective_gradient(std::span<const double> rho, const PointBars& bars,
                                                 const ModelParams& params) {
  const auto mob = mobilities(rho, params);
  const double sig = params.sigma_u;
  std::vector<double> g(params.n_species, 0.0);
  for (int i = 0; i < params.n_species; ++i) {
    const double r = rho[i];
    const double den = sig + r;
    g[i] = -bars.m_bar_sq(i) / (2.0 * den * den) + (r - bars.rho_bar[i]) / sig;
    if (params.beta[i] != 0.0) g[i] += params.beta[i] * (std::log(r) + 1.0);
  }
  if (params.alpha == 0.0) return g;
  for (int p = 0; p < params.n_reactions(); ++p) {
    const double den = sig + mob.v2[p];
    const double outer = -bars.s_bar[p] * bars.s_bar[p] / (2.0 * den * den);
    int a = 0, b = 0;
    reaction_partner(params, p, a, b);
    if (b < 0) {
      g[a] += outer * params.alpha;
    } else {
      g[a] += outer * params.alpha * log_mean_da(rho[a], rho[b]);
      g[b] += outer * params.alpha * log_mean_da(rho[b], rho[a]);
    }
  }
  return g;
}

// ---- Brent ----

BrentResult brent_minimize(const std::function<double(double)>& f, double lo, double hi, double tol, int max_iter) {
  if (!(lo < hi)) throw std::invalid_argument("brent_minimize needs lo < hi");
  if (!(tol > 0.0)) throw std::invalid_argument("brent_minimize needs tol > 0");
  auto eval = [&](double x) {
    const double v = f(x);
    if (!std::isfinite(v)) throw NumericalError("non-finite objective value in brent_minimize");
    return v;
  };
  const double golden = 0.5 * (3.0 - std::sqrt(5.0));
  const double eps = std::sqrt(std::numeric_limits<double>::epsilon());
  double a = lo, b = hi;
  double x = a + golden * (b - a);
  double w = x, v = x;
  double fx = eval(x);
  double fw = fx, fv = fx;
  double d = 0.0, e = 0.0;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    const double xm = 0.5 * (a + b);
    const double tol1 = eps * std::abs(x) + tol / 3.0;
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - xm) <= tol2 - 0.5 * (b - a)) break;
    bool golden_step = true;
    if (std::abs(e) > tol1) {
      double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const double e_prev = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * q * e_prev) && p > q * (a - x) && p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = xm >= x ? tol1 : -tol1;
        golden_step = false;
      }
    }
    if (golden_step) {
      e = x >= xm ? a - x : b - x;
      d = golden * e;
    }
    const double u = std::abs(d) >= tol1 ? x + d : x + (d > 0.0 ? tol1 : -tol1);
    const double fu = eval(u);
    if (fu <= fx) {
      if (u >= x) a = x; else b = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  // The interior search can miss a minimizer sitting on the boundary.
  const double flo = eval(lo);
  const double fhi = eval(hi);
  BrentResult res{x, fx, iter};
  if (flo <= res.fx) res = {lo, flo, iter};
  if (fhi < res.fx) res = {hi, fhi, iter};
  return res;
}

// ---- density prox ----

namespace {

// Objective restricted to species i with the other densities fixed; differs
// from pointwise_objective by a constant.
struct SpeciesObjective {
  double sigma = 1.0;
  double mb2 = 0.0;
  double rho_bar = 0.0;
  double beta = 0.0;
  double alpha = 0.0;
  bool linear = false;
  int n_terms = 0;
  std::array<double, 2> s2{};       // s_bar^2 of the affected reactions
  std::array<double, 2> other{};    // partner density (log_mean)
  std::array<double, 2> log_other{};

  double operator()(double x) const {
    double v = mb2 / (2.0 * (sigma + x)) + (x - rho_bar) * (x - rho_bar) / (2.0 * sigma);
    const bool need_log = beta != 0.0 || (n_terms > 0 && !linear);
    const double lx = need_log ? std::log(x) : 0.0;
    if (beta != 0.0) v += beta * x * lx;
    for (int t = 0; t < n_terms; ++t) {
      const double v2 = linear ? alpha * x : alpha * log_mean_logs(x, other[t], lx, log_other[t]);
      v += s2[t] / (2.0 * (sigma + v2));
    }
    return v;
  }
};

SpeciesObjective restrict_to(int i, std::span<const double> rho, const PointBars& bars, const ModelParams& params) {
  SpeciesObjective obj;
  obj.sigma = params.sigma_u;
  obj.mb2 = bars.m_bar_sq(i);
  obj.rho_bar = bars.rho_bar[i];
  obj.beta = params.beta[i];
  obj.alpha = params.alpha;
  obj.linear = params.mobility == ReactionMobility::linear;
  if (params.alpha == 0.0 || params.n_reactions() == 0) return obj;
  if (obj.linear) {
    if (i < params.n_reactions()) {
      obj.n_terms = 1;
      obj.s2[0] = bars.s_bar[i] * bars.s_bar[i];
    }
    return obj;
  }
  const int n = params.n_species;
  const int p_fwd = i;               // pair (rho_i, rho_{i+1})
  const int p_bwd = (i + n - 1) % n; // pair (rho_{i-1}, rho_i)
  obj.n_terms = 2;
  obj.s2[0] = bars.s_bar[p_fwd] * bars.s_bar[p_fwd];
  obj.other[0] = rho[(i + 1) % n];
  obj.s2[1] = bars.s_bar[p_bwd] * bars.s_bar[p_bwd];
  obj.other[1] = rho[p_bwd];
  for (int t = 0; t < 2; ++t) obj.log_other[t] = std::log(obj.other[t]);
  return obj;
}

}  // namespace

std::vector<double> prox_density_sweep(std::span<const double> rho_start, const PointBars& bars,
                                       const ModelParams& params) {
  if (static_cast<int>(rho_start.size()) != params.n_species) throw ShapeError("prox: species count mismatch");
  std::vector<double> rho(rho_start.begin(), rho_start.end());
  for (double& r : rho) r = std::clamp(r, params.rho_min, params.rho_max);
  for (int sweep = 0; sweep < params.prox_sweeps; ++sweep) {
    for (int i = 0; i < params.n_species; ++i) {
      const SpeciesObjective obj = restrict_to(i, rho, bars, params);
      const double f_current = obj(rho[i]);
      const auto res = brent_minimize(obj, params.rho_min, params.rho_max, params.brent_tol, params.brent_max_iter);
      if (res.fx <= f_current) rho[i] = res.x;
    }
  }
  return rho;
}

// ---- whole-field update ----

PrimalFields PrimalFields::zeros(const SpaceTimeMesh& mesh, int n_species, int n_reactions) {
  PrimalFields u;
  u.rho.assign(n_species, DGField::zeros(mesh));
  u.m.assign(n_species, std::vector<DGField>(mesh.dim(), DGField::zeros(mesh)));
  u.s.assign(n_reactions, DGField::zeros(mesh));
  return u;
}

PrimalFields compute_ubar(const PrimalFields& current, std::span<const CGField> phi_tilde, const SpaceTimeMesh& mesh,
                          const ModelParams& params) {
  const int n = params.n_species;
  if (static_cast<int>(phi_tilde.size()) != n || static_cast<int>(current.rho.size()) != n ||
      static_cast<int>(current.m.size()) != n || static_cast<int>(current.s.size()) != params.n_reactions()) {
    throw ShapeError("compute_ubar: species or reaction count mismatch");
  }
  const double sig = params.sigma_u;
  auto axpy = [&](DGField& y, const DGField& x) {
    if (y.size() != x.size()) throw ShapeError("compute_ubar: field size mismatch");
    for (std::size_t q = 0; q < y.size(); ++q) y.values[q] += sig * x.values[q];
  };
  PrimalFields bar = current;
  std::vector<DGField> values;
  values.reserve(n);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(current.m[i].size()) != mesh.dim()) throw ShapeError("compute_ubar: flux dimension mismatch");
    const auto d = eval_D(mesh, phi_tilde[i]);
    axpy(bar.rho[i], d.dt);
    for (int a = 0; a < mesh.dim(); ++a) axpy(bar.m[i][a], d.grad[a]);
    if (params.n_reactions() > 0) values.push_back(eval_value(mesh, phi_tilde[i]));
  }
  if (params.n_reactions() > 0) {
    const auto hat = apply_gamma_T(values, params.gamma);
    for (int p = 0; p < params.n_reactions(); ++p) axpy(bar.s[p], hat[p]);
  }
  return bar;
}

}  // namespace wbary
