#pragma once

#include <functional>
#include <span>
#include <vector>

#include "wbary/fields.hpp"
#include "wbary/mesh.hpp"
#include "wbary/model.hpp"
#include "wbary/reaction.hpp"

namespace wbary {

enum class Preconditioner { jacobi, kronecker };

/// The step-1 bilinear form on continuous fields
///   a(u, v) = (d_t u, d_t v) + (grad u, grad v) + c (u, v) [+ <u, v>_{t=T}]
/// with every term integrated exactly. It is a Kronecker sum
///   A = (K_t + c M_t + E_T) x M_s + M_t x sum_a (K_a x M_others)
/// and is applied by sum factorization.
class EllipticOperator {
 public:
  EllipticOperator(const SpaceTimeMesh& mesh, double c, bool terminal_term = true);

  [[nodiscard]] const SpaceTimeMesh& mesh() const { return *mesh_; }
  [[nodiscard]] double mass_coefficient() const { return c_; }
  [[nodiscard]] bool has_terminal_term() const { return terminal_; }
  [[nodiscard]] std::size_t size() const { return mesh_->cg_dof_count(); }

  [[nodiscard]] std::vector<double> apply(std::span<const double> u) const;
  [[nodiscard]] CGField apply(const CGField& u) const;
  /// (M_t x M_s) u: exact space-time mass.
  [[nodiscard]] std::vector<double> apply_mass(std::span<const double> u) const;
  /// (E_T x M_s) u: exact spatial mass of the t = T traces.
  [[nodiscard]] std::vector<double> apply_terminal_mass(std::span<const double> u) const;

  [[nodiscard]] const std::vector<double>& diagonal() const { return diagonal_; }
  /// z = P^{-1} r. The Kronecker variant is the exact (pseudo-)inverse of A
  /// via per-axis generalized eigendecompositions.
  [[nodiscard]] std::vector<double> precondition(std::span<const double> r, Preconditioner kind) const;

 private:
  const SpaceTimeMesh* mesh_;
  double c_;
  bool terminal_;
  AxisOperator time_main_;
  std::vector<double> diagonal_;

  // Fast diagonalization data: eigenvectors per axis (time first) and the
  // eigenvalues of the Kronecker sum.
  std::vector<AxisOperator> eig_vectors_;
  std::vector<AxisOperator> eig_vectors_t_;
  std::vector<double> inv_eigenvalues_;
};

/// One operator per run: c = (Gamma Gamma^T)_ii, which must be equal for
/// every species (std::invalid_argument otherwise).
EllipticOperator assemble_operator(const SpaceTimeMesh& mesh, const ReactionMatrix& gamma, bool terminal_term = true);

/// Data feeding the right-hand side of the species-i dual update.
struct StepOneInputs {
  const PrimalFields* primal = nullptr;
  /// Barycenter mode: the free terminal density. Ignored when
  /// `terminal_targets` is non-empty (geodesic mode).
  const TerminalField* varrho = nullptr;
  std::span<const TerminalField> terminal_targets;
  std::span<const TerminalField> initial;
  /// Latest increments of every species (entry i itself is not used).
  std::span<const CGField> deltas;
  const ReactionMatrix* gamma = nullptr;
  double sigma_phi = 1.0;
};

/// Entry j of the result is, for the basis function psi_j,
///   -sigma [(rho_i, d_t psi) + (m_i, grad psi) + ((Gamma s)_i, psi)]
///   + sigma <target, psi>_{t=T} - sigma <rho0_i, psi>_{t=0}
///   - sum_{j != i} (Gamma Gamma^T)_ij (delta_j, psi) - [<sum_{j != i} delta_j, psi>_{t=T}]
/// where the bracketed terminal coupling is present only when the operator
/// carries the terminal term.
CGField assemble_rhs(const EllipticOperator& op, int species, const StepOneInputs& in);

struct PcgOptions {
  double tol = 1e-10;
  int max_iter = 5000;
  Preconditioner preconditioner = Preconditioner::kronecker;
  /// Called with (iteration, current iterate) after each update.
  std::function<void(int, std::span<const double>)> on_iterate;
};

struct PcgResult {
  CGField x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Preconditioned conjugate gradients from a zero initial guess. Stops when
/// ||A x - b|| <= tol ||b||; hitting max_iter is reported, not thrown.
PcgResult pcg_solve(const EllipticOperator& op, const CGField& rhs, const PcgOptions& options = {});

/// Dense matrix of the operator (row-major), built column by column.
/// Throws ResourceLimitError above 2000 unknowns.
std::vector<double> dense_matrix(const EllipticOperator& op);
/// Direct LU solve for tiny meshes. Throws NumericalError when singular.
CGField dense_solve_oracle(const EllipticOperator& op, const CGField& rhs);

}  // namespace wbary
