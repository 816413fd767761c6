#include "wbary/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace wbary {

namespace {

struct LegendreValue {
  double p;   // P_n(x)
  double dp;  // P_n'(x)
};

// Three-term recurrence on [-1, 1].
LegendreValue legendre(int n, double x) {
  double p0 = 1.0;
  double p1 = x;
  if (n == 0) return {1.0, 0.0};
  for (int m = 2; m <= n; ++m) {
    const double p2 = ((2.0 * m - 1.0) * x * p1 - (m - 1.0) * p0) / m;
    p0 = p1;
    p1 = p2;
  }
  // P_n' from the standard identity; valid away from x = +-1.
  const double dp = n * (x * p1 - p0) / (x * x - 1.0);
  return {p1, dp};
}

constexpr int kNewtonMaxIter = 100;
constexpr double kNewtonTol = 1e-15;

}  // namespace

Rule1D gauss_legendre_rule(int n) {
  if (n < 1) {
    throw std::invalid_argument("gauss_legendre_rule: n must be >= 1, got " + std::to_string(n));
  }
  std::vector<double> x(n), w(n);
  for (int i = 0; i < n; ++i) {
    double r = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < kNewtonMaxIter; ++it) {
      const auto [p, dp] = legendre(n, r);
      const double step = p / dp;
      r -= step;
      if (std::abs(step) < kNewtonTol) break;
    }
    const auto [p, dp] = legendre(n, r);
    (void)p;
    x[i] = r;
    w[i] = 2.0 / ((1.0 - r * r) * dp * dp);
  }
  // Map from [-1, 1] to [0, 1]; roots were generated in decreasing order.
  Rule1D rule;
  rule.points.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.points[i] = 0.5 * (1.0 - x[i]);
    rule.weights[i] = 0.5 * w[i];
  }
  // Symmetrize to remove the last ulp of asymmetry from Newton.
  for (int i = 0; i < n / 2; ++i) {
    const double a = 0.5 * (rule.points[i] + 1.0 - rule.points[n - 1 - i]);
    rule.points[i] = a;
    rule.points[n - 1 - i] = 1.0 - a;
    const double wa = 0.5 * (rule.weights[i] + rule.weights[n - 1 - i]);
    rule.weights[i] = rule.weights[n - 1 - i] = wa;
  }
  if (n % 2 == 1) rule.points[n / 2] = 0.5;
  return rule;
}

std::vector<double> gauss_lobatto_nodes(int k) {
  if (k < 1) {
    throw std::invalid_argument("gauss_lobatto_nodes: k must be >= 1, got " + std::to_string(k));
  }
  std::vector<double> nodes(k + 1);
  nodes.front() = 0.0;
  nodes.back() = 1.0;
  // Interior nodes are the roots of P_k'. Newton on P_k' using
  // (1 - x^2) P_k'' = 2 x P_k' - k (k + 1) P_k.
  for (int i = 1; i < k; ++i) {
    double r = -std::cos(std::numbers::pi * i / k);
    for (int it = 0; it < kNewtonMaxIter; ++it) {
      const auto [p, dp] = legendre(k, r);
      const double ddp = (2.0 * r * dp - k * (k + 1.0) * p) / (1.0 - r * r);
      const double step = dp / ddp;
      r -= step;
      if (std::abs(step) < kNewtonTol) break;
    }
    nodes[i] = 0.5 * (1.0 + r);
  }
  for (int i = 1; i < k - i; ++i) {
    const double a = 0.5 * (nodes[i] + 1.0 - nodes[k - i]);
    nodes[i] = a;
    nodes[k - i] = 1.0 - a;
  }
  if (k % 2 == 0) nodes[k / 2] = 0.5;
  return nodes;
}

NodalBasis1D::NodalBasis1D(std::vector<double> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw std::invalid_argument("NodalBasis1D: at least one node required");
  const int n = static_cast<int>(nodes_.size());
  inv_denominators_.resize(n);
  for (int j = 0; j < n; ++j) {
    double d = 1.0;
    for (int m = 0; m < n; ++m) {
      if (m != j) d *= nodes_[j] - nodes_[m];
    }
    if (d == 0.0) throw std::invalid_argument("NodalBasis1D: nodes must be distinct");
    inv_denominators_[j] = 1.0 / d;
  }
}

void NodalBasis1D::check_index(int j) const {
  if (j < 0 || j > degree()) {
    throw std::invalid_argument("NodalBasis1D: basis index " + std::to_string(j) +
                                " outside [0, " + std::to_string(degree()) + "]");
  }
}

double NodalBasis1D::eval(int j, double x) const {
  check_index(j);
  const int n = static_cast<int>(nodes_.size());
  double v = inv_denominators_[j];
  for (int m = 0; m < n; ++m) {
    if (m != j) v *= x - nodes_[m];
  }
  return v;
}

double NodalBasis1D::deriv(int j, double x) const {
  check_index(j);
  const int n = static_cast<int>(nodes_.size());
  double sum = 0.0;
  for (int l = 0; l < n; ++l) {
    if (l == j) continue;
    double prod = 1.0;
    for (int m = 0; m < n; ++m) {
      if (m != j && m != l) prod *= x - nodes_[m];
    }
    sum += prod;
  }
  return sum * inv_denominators_[j];
}

double lagrange_eval(const NodalBasis1D& basis, int j, double x) { return basis.eval(j, x); }

double lagrange_deriv(const NodalBasis1D& basis, int j, double x) { return basis.deriv(j, x); }

}  // namespace wbary
