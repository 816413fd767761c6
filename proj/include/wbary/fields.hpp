#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wbary/mesh.hpp"
#include "wbary/reaction.hpp"

namespace wbary {

/// Discontinuous space-time field stored by its values at the quadrature
/// lattice, time-major: values[it * n_space + is].
struct DGField {
  std::size_t n_time = 0;
  std::size_t n_space = 0;
  std::vector<double> values;

  DGField() = default;
  DGField(std::size_t nt, std::size_t ns, double fill = 0.0) : n_time(nt), n_space(ns), values(nt * ns, fill) {}
  static DGField zeros(const SpaceTimeMesh& mesh) { return {mesh.n_time_pts(), mesh.n_space_pts()}; }

  double& operator()(std::size_t it, std::size_t is) { return values[it * n_space + is]; }
  double operator()(std::size_t it, std::size_t is) const { return values[it * n_space + is]; }
  [[nodiscard]] std::size_t size() const { return values.size(); }
};

/// Continuous Q^k field: one coefficient per global Gauss-Lobatto node.
struct CGField {
  std::vector<double> coefficients;

  CGField() = default;
  explicit CGField(std::size_t n, double fill = 0.0) : coefficients(n, fill) {}
  static CGField zeros(const SpaceTimeMesh& mesh) { return CGField(mesh.cg_dof_count()); }
  [[nodiscard]] std::size_t size() const { return coefficients.size(); }
};

/// Spatial field at the spatial quadrature points (a single time slice).
struct TerminalField {
  std::vector<double> values;

  TerminalField() = default;
  explicit TerminalField(std::size_t n, double fill = 0.0) : values(n, fill) {}
  static TerminalField zeros(const SpaceTimeMesh& mesh) { return TerminalField(mesh.n_space_pts()); }
  [[nodiscard]] std::size_t size() const { return values.size(); }
};

/// The first two slots of the space-time operator: time derivative and
/// spatial gradient at every quadrature point.
struct SpaceTimeDerivatives {
  DGField dt;
  std::vector<DGField> grad;
};

enum class TimeEnd { initial, terminal };

DGField eval_value(const SpaceTimeMesh& mesh, const CGField& phi);
SpaceTimeDerivatives eval_D(const SpaceTimeMesh& mesh, const CGField& phi);

/// Reaction slot: output p is sum_i gamma(i, p) phi_i at the quadrature points.
std::vector<DGField> apply_gamma_T(const SpaceTimeMesh& mesh, std::span<const CGField> phis,
                                   const ReactionMatrix& gamma);
/// Same, for fields already evaluated at the quadrature points.
std::vector<DGField> apply_gamma_T(std::span<const DGField> values, const ReactionMatrix& gamma);
/// Species side: output i is sum_p gamma(i, p) s_p.
std::vector<DGField> apply_gamma(const SpaceTimeMesh& mesh, std::span<const DGField> sources,
                                 const ReactionMatrix& gamma);

/// sum_i sum_j theta_i lambda_j a(tau_i, chi_j) b(tau_i, chi_j).
double inner_dg(const SpaceTimeMesh& mesh, const DGField& a, const DGField& b);

/// phi restricted to t = 0 or t = T, at the spatial quadrature points.
TerminalField trace_at_time(const SpaceTimeMesh& mesh, const CGField& phi, TimeEnd which);

/// sum_j lambda_j a_j b_j.
double spatial_inner(const SpaceTimeMesh& mesh, const TerminalField& a, const TerminalField& b);
/// <a, sum_i phi_i(T, .)> with the spatial quadrature.
double terminal_inner(const SpaceTimeMesh& mesh, const TerminalField& a, std::span<const CGField> phis);
/// <a, phi(0, .)> with the spatial quadrature.
double initial_inner(const SpaceTimeMesh& mesh, const TerminalField& a, const CGField& phi);

double l1_norm_spatial(const SpaceTimeMesh& mesh, const TerminalField& a);

/// Transposed quadrature scatter: entry j of the result is
///   (value, psi_j)_h + (dt, d_t psi_j)_h + sum_a (grad[a], d_a psi_j)_h
/// for every continuous basis function psi_j. Null / empty arguments are
/// treated as zero.
CGField integrate_against_basis(const SpaceTimeMesh& mesh, const DGField* value, const DGField* dt,
                                std::span<const DGField> grad);

/// Entry j is <a, psi_j(t_end, .)> with the spatial quadrature.
CGField integrate_trace_against_basis(const SpaceTimeMesh& mesh, const TerminalField& a, TimeEnd which);

}  // namespace wbary
