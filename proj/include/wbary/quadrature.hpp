#pragma once

#include <span>
#include <vector>

namespace wbary {

/// One-dimensional quadrature rule on the reference interval [0, 1].
struct Rule1D {
  std::vector<double> points;
  std::vector<double> weights;

  [[nodiscard]] int size() const { return static_cast<int>(points.size()); }
};

/// n-point Gauss-Legendre rule on [0, 1], exact for polynomials of degree
/// <= 2n - 1. Nodes are found by Newton iteration on P_n.
/// Throws std::invalid_argument for n < 1.
Rule1D gauss_legendre_rule(int n);

/// The k + 1 Gauss-Lobatto nodes on [0, 1] (endpoints plus the roots of
/// P_k'). Throws std::invalid_argument for k < 1.
std::vector<double> gauss_lobatto_nodes(int k);

/// Lagrange basis through a set of distinct nodes. Basis j is the degree
/// (nodes - 1) polynomial equal to 1 at node j and 0 at every other node.
class NodalBasis1D {
 public:
  explicit NodalBasis1D(std::vector<double> nodes);

  [[nodiscard]] int degree() const { return static_cast<int>(nodes_.size()) - 1; }
  [[nodiscard]] std::span<const double> nodes() const { return nodes_; }

  [[nodiscard]] double eval(int j, double x) const;
  [[nodiscard]] double deriv(int j, double x) const;

 private:
  void check_index(int j) const;

  std::vector<double> nodes_;
  std::vector<double> inv_denominators_;  // 1 / prod_{m != j} (x_j - x_m)
};

double lagrange_eval(const NodalBasis1D& basis, int j, double x);
double lagrange_deriv(const NodalBasis1D& basis, int j, double x);

}  // namespace wbary
