#pragma once

#include <functional>
#include <span>
#include <vector>

#include "wbary/fields.hpp"
#include "wbary/mesh.hpp"
#include "wbary/reaction.hpp"

namespace wbary {

/// How the reaction mobility V2_p depends on the densities.
///  - log_mean: V2_p = alpha * L(rho_p, rho_{p+1}) with cyclic indexing;
///    requires the cyclic reaction matrix.
///  - linear: V2_p = alpha * rho_p (one reaction per species, e.g. the
///    scalar unbalanced case with Gamma = [1]).
enum class ReactionMobility { log_mean, linear };

struct ModelParams {
  int n_species = 1;
  ReactionMatrix gamma;
  double alpha = 0.0;
  std::vector<double> beta;  // entropy weights, one per species
  ReactionMobility mobility = ReactionMobility::log_mean;
  double rho_min = 1e-6;
  double rho_max = 40.0;
  double sigma_u = 1.0;
  double sigma_phi = 1.0;
  int prox_sweeps = 1;
  double brent_tol = 1e-8;
  int brent_max_iter = 200;

  /// Throws std::invalid_argument naming the offending field. Mass
  /// conservation (zero column sums of Gamma) is checked on request.
  void validate(bool require_mass_conservation) const;
  [[nodiscard]] int n_reactions() const { return gamma.reactions(); }
};

/// Cyclic barycenter model with the given species count and strengths.
ModelParams make_cyclic_model(int n_species, double alpha, double beta);

/// Per-point data for the density prox: the extrapolated targets
/// (rho_bar, m_bar, s_bar) and the previous density iterate.
struct PointBars {
  int dim = 1;
  std::vector<double> rho_bar;   // N
  std::vector<double> m_bar;     // N * dim, species-major
  std::vector<double> s_bar;     // R
  std::vector<double> rho_prev;  // N

  PointBars() = default;
  PointBars(int n_species, int n_reactions, int dim_)
      : dim(dim_), rho_bar(n_species), m_bar(static_cast<std::size_t>(n_species) * dim_), s_bar(n_reactions),
        rho_prev(n_species) {}
  [[nodiscard]] double m_bar_sq(int i) const;
};

/// Logarithmic mean (a - b) / (ln a - ln b), continuous at a = b.
/// Throws DomainError for nonpositive arguments.
double log_mean(double a, double b);

struct Mobilities {
  std::vector<double> v1;  // per species
  std::vector<double> v2;  // per reaction
};
Mobilities mobilities(std::span<const double> rho, const ModelParams& params);

struct FluxSource {
  std::vector<double> m;  // N * dim
  std::vector<double> s;  // R
};
/// Minimizers of |m|^2 / (2 V1) + |m - m_bar|^2 / (2 sigma_u) (and the
/// analogue for s) for fixed densities.
FluxSource recover_flux_source(std::span<const double> rho, const PointBars& bars, const ModelParams& params);

/// Reduced per-point objective after eliminating m and s. Throws
/// DomainError when rho leaves [rho_min, rho_max].
double pointwise_objective(std::span<const double> rho, const PointBars& bars, const ModelParams& params);
/// Gradient of pointwise_objective with respect to rho.
std::vector<double> pointwise_objective_gradient(std::span<const double> rho, const PointBars& bars,
                                                 const ModelParams& params);

struct BrentResult {
  double x = 0.0;
  double fx = 0.0;
  int iterations = 0;
};

/// Brent's derivative-free minimizer (golden section with parabolic
/// steps) on [lo, hi]. The returned point never has a larger value than
/// either endpoint. Throws NumericalError on a non-finite evaluation and
/// std::invalid_argument unless lo < hi.
BrentResult brent_minimize(const std::function<double(double)>& f, double lo, double hi, double tol,
                           int max_iter = 200);

/// Coordinate-descent prox on the densities at one point: prox_sweeps
/// passes, each minimizing over rho_1..rho_N in order with the others held
/// at their latest values. `rho_start` is clipped into bounds first.
std::vector<double> prox_density_sweep(std::span<const double> rho_start, const PointBars& bars,
                                       const ModelParams& params);

/// Physical variables at every quadrature point.
struct PrimalFields {
  std::vector<DGField> rho;             // N
  std::vector<std::vector<DGField>> m;  // N x dim
  std::vector<DGField> s;               // R

  static PrimalFields zeros(const SpaceTimeMesh& mesh, int n_species, int n_reactions);
};

/// u_bar = u^k + sigma_u * D(phi_tilde) at every quadrature point.
PrimalFields compute_ubar(const PrimalFields& current, std::span<const CGField> phi_tilde, const SpaceTimeMesh& mesh,
                          const ModelParams& params);

}  // namespace wbary
