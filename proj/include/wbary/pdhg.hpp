#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "wbary/elliptic.hpp"
#include "wbary/fields.hpp"
#include "wbary/mesh.hpp"
#include "wbary/model.hpp"

namespace wbary {

/// barycenter: free common terminal density varrho.
/// geodesic: fixed terminal densities rho1_i (two-endpoint distance).
enum class RunMode { barycenter, geodesic };

struct PDHGConfig {
  double tol = 1e-5;
  int max_iter = 20000;
  int diagnostics_every = 10;
  RunMode mode = RunMode::barycenter;
  bool clamp_varrho = false;
  PcgOptions linear;
};

struct HistoryRecord {
  static constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  int iter = 0;
  double err = nan;
  double objective = nan;
  double kkt_m = nan;
  double kkt_s = nan;        // NaN when alpha = 0
  double mass_drift = nan;
  double phi_T_sum = nan;    // NaN in geodesic mode
  double continuity = nan;
  int linear_iterations = 0;
};

struct SolverState {
  PrimalFields u;
  std::vector<CGField> phi;
  std::vector<CGField> phi_prev;
  std::vector<CGField> phi_tilde;
  std::vector<CGField> delta;  // latest increment per species
  TerminalField varrho;        // barycenter mode only
  int iteration = 0;
  double err = std::numeric_limits<double>::infinity();
  bool converged = false;
  bool linear_failure = false;
  int last_linear_iterations = 0;
  std::vector<HistoryRecord> history;
};

/// PDHG for the discrete saddle-point problem. The elliptic operator is
/// assembled once at construction and shared by all species and iterations.
class Solver {
 public:
  /// `rho0` (and `rho1` in geodesic mode) are sampled at the spatial
  /// quadrature points; they are clipped into [rho_min, rho_max].
  Solver(const SpaceTimeMesh& mesh, ModelParams params, PDHGConfig config, std::vector<TerminalField> rho0,
         std::vector<TerminalField> rho1 = {});

  [[nodiscard]] const SpaceTimeMesh& mesh() const { return *mesh_; }
  [[nodiscard]] const ModelParams& params() const { return params_; }
  [[nodiscard]] const PDHGConfig& config() const { return config_; }
  [[nodiscard]] const EllipticOperator& elliptic() const { return op_; }
  [[nodiscard]] const std::vector<TerminalField>& initial() const { return rho0_; }
  [[nodiscard]] const std::vector<TerminalField>& terminal() const { return rho1_; }

  /// rho_i(t, .) = rho0_i for every t, everything else zero,
  /// varrho = mean of the rho0_i.
  [[nodiscard]] SolverState initialize() const;

  /// Dual ascent: one Gauss-Seidel pass over the species followed by the
  /// extrapolation phi_tilde = 2 phi^{k+1} - phi^k.
  void step_phi(SolverState& state) const;
  /// Primal descent: terminal update, u_bar, pointwise prox and flux/source
  /// recovery. Returns err (L1 change of varrho; in geodesic mode the
  /// space-time L1 change of the densities).
  double step_primal(SolverState& state) const;
  /// One full PDHG iteration; appends a history record.
  void step(SolverState& state) const;
  /// Iterates until err < tol (after at least one iteration) or max_iter.
  void iterate(SolverState& state, const std::function<void(const HistoryRecord&)>& progress = {}) const;

  [[nodiscard]] HistoryRecord diagnostics(const SolverState& state) const;
  /// Discrete objective H_h.
  [[nodiscard]] double objective(const SolverState& state) const;
  /// sqrt(2 T H_h), the transport distance estimate in geodesic mode.
  [[nodiscard]] double distance(const SolverState& state) const;
  /// Total mass sum_i int rho_i(t_j, x) dx at every temporal quadrature point.
  [[nodiscard]] std::vector<double> mass_per_time(const SolverState& state) const;

 private:
  [[nodiscard]] StepOneInputs step_one_inputs(const SolverState& state, double sigma) const;

  const SpaceTimeMesh* mesh_;
  ModelParams params_;
  PDHGConfig config_;
  std::vector<TerminalField> rho0_;
  std::vector<TerminalField> rho1_;
  EllipticOperator op_;
};

}  // namespace wbary
