#pragma once

#include <cstddef>
#include <vector>

namespace wbary {

/// Stoichiometric matrix Gamma (species x reactions). Column p couples the
/// species that reaction p converts; species i gains sum_p gamma(i, p) s_p.
class ReactionMatrix {
 public:
  ReactionMatrix() = default;
  ReactionMatrix(int species, int reactions);
  ReactionMatrix(int species, int reactions, std::vector<double> row_major);

  [[nodiscard]] int species() const { return species_; }
  [[nodiscard]] int reactions() const { return reactions_; }
  [[nodiscard]] double operator()(int i, int p) const { return entries_[static_cast<std::size_t>(i) * reactions_ + p]; }
  double& operator()(int i, int p) { return entries_[static_cast<std::size_t>(i) * reactions_ + p]; }

  [[nodiscard]] bool columns_sum_to_zero(double tol = 1e-14) const;
  /// (Gamma Gamma^T)(i, j).
  [[nodiscard]] double gram(int i, int j) const;
  /// True when this is exactly the cyclic pattern produced by gamma_cyclic.
  [[nodiscard]] bool is_cyclic() const;

 private:
  int species_ = 0;
  int reactions_ = 0;
  std::vector<double> entries_;
};

/// Cyclic reversible reactions on a ring of N species: gamma(i, i) = 1,
/// gamma(i, i - 1 mod N) = -1. Throws std::invalid_argument for N < 2.
ReactionMatrix gamma_cyclic(int n_species);

}  // namespace wbary
