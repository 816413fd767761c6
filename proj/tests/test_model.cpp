#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "wbary/errors.hpp"
#include "wbary/model.hpp"

using namespace wbary;
using namespace wbary::testing;

namespace {

PointBars bars_for(const ModelParams& p, int dim = 3) { return PointBars(p.n_species, p.n_reactions(), dim); }

double grid_argmin(const std::function<double(double)>& f, double lo, double hi, int n, double* fmin) {
  double best_x = lo, best = f(lo);
  for (int j = 1; j < n; ++j) {
    const double x = lo + (hi - lo) * j / (n - 1);
    const double v = f(x);
    if (v < best) {
      best = v;
      best_x = x;
    }
  }
  if (fmin != nullptr) *fmin = best;
  return best_x;
}

// Random bars in the ranges used by the prox acceptance check.
PointBars random_bars(const ModelParams& p, std::mt19937& gen) {
  std::uniform_real_distribution<double> r(0.1, 5.0), c(-3.0, 3.0);
  PointBars b = bars_for(p, 2);
  for (auto& v : b.rho_bar) v = r(gen);
  for (auto& v : b.rho_prev) v = r(gen);
  for (auto& v : b.m_bar) v = c(gen);
  for (auto& v : b.s_bar) v = c(gen);
  return b;
}

}  // namespace

TEST(Gamma, CyclicPattern) {
  const auto g2 = gamma_cyclic(2);
  EXPECT_EQ(g2(0, 0), 1.0);
  EXPECT_EQ(g2(0, 1), -1.0);
  EXPECT_EQ(g2(1, 0), -1.0);
  EXPECT_EQ(g2(1, 1), 1.0);
  const auto g3 = gamma_cyclic(3);
  const double expect[3][3] = {{1, 0, -1}, {-1, 1, 0}, {0, -1, 1}};
  for (int i = 0; i < 3; ++i) {
    for (int p = 0; p < 3; ++p) EXPECT_EQ(g3(i, p), expect[i][p]);
  }
  for (int n = 2; n <= 6; ++n) {
    const auto g = gamma_cyclic(n);
    EXPECT_TRUE(g.columns_sum_to_zero());
    EXPECT_TRUE(g.is_cyclic());
    for (int i = 0; i < n; ++i) EXPECT_EQ(g.gram(i, i), 2.0);
  }
  EXPECT_THROW(gamma_cyclic(1), std::invalid_argument);
  EXPECT_FALSE(ReactionMatrix(1, 1, {1.0}).is_cyclic());
}

TEST(LogMean, Examples) {
  EXPECT_DOUBLE_EQ(log_mean(1.0, 1.0), 1.0);
  EXPECT_NEAR(log_mean(std::exp(1.0), 1.0), 1.718281828, 1e-9);
  EXPECT_NEAR(log_mean(4.0, 1.0), 2.164042561, 1e-9);
  EXPECT_NEAR(log_mean(1.0, 4.0), 2.164042561, 1e-9);
  EXPECT_THROW(log_mean(0.0, 1.0), DomainError);
  EXPECT_THROW(log_mean(1.0, -2.0), DomainError);
}

TEST(LogMean, ContinuityAndBetweenness) {
  for (double a : {1e-6, 0.3, 1.0, 17.0, 40.0}) {
    for (double d : {0.0, 1e-14, 1e-12, 1e-10, 1e-9, 1e-8}) {
      EXPECT_LE(std::abs(log_mean(a, a * (1 + d)) - a), a * d + 1e-15 * a);
    }
  }
  std::mt19937 gen(1);
  std::uniform_real_distribution<double> u(1e-6, 40);
  for (int t = 0; t < 100; ++t) {
    const double a = u(gen), b = u(gen);
    const double l = log_mean(a, b);
    EXPECT_GE(l, std::min(a, b) * (1 - 1e-14));
    EXPECT_LE(l, std::max(a, b) * (1 + 1e-14));
  }
}

TEST(Mobilities, Examples) {
  auto p = make_cyclic_model(2, 0.0, 0.0);
  std::vector<double> rho{2.0, 3.0};
  auto mob = mobilities(rho, p);
  EXPECT_EQ(mob.v1, rho);
  for (double v : mob.v2) EXPECT_EQ(v, 0.0);
  p.alpha = 50.0;
  rho = {2.0, 2.0};
  mob = mobilities(rho, p);
  EXPECT_NEAR(mob.v2[0], 100.0, 1e-12);
  EXPECT_NEAR(mob.v2[1], 100.0, 1e-12);
  p.alpha = 1.0;
  rho = {4.0, 1.0};
  mob = mobilities(rho, p);
  EXPECT_NEAR(mob.v2[0], 2.164042561, 1e-9);
  EXPECT_NEAR(mob.v2[1], 2.164042561, 1e-9);
  rho = {0.0, 1.0};
  EXPECT_THROW(mobilities(rho, p), DomainError);
}

TEST(RecoverFluxSource, Examples) {
  auto p = make_cyclic_model(1, 0.0, 0.0);
  PointBars b = bars_for(p);
  b.m_bar = {4.0, 0.0, 0.0};
  std::vector<double> rho{3.0};
  auto fs = recover_flux_source(rho, b, p);
  EXPECT_NEAR(fs.m[0], 3.0, 1e-15);
  EXPECT_EQ(fs.m[1], 0.0);
  p.sigma_u = 1e-12;
  fs = recover_flux_source(rho, b, p);
  EXPECT_NEAR(fs.m[0], 4.0, 1e-10);

  auto q = make_cyclic_model(2, 0.0, 0.0);
  PointBars b2 = bars_for(q);
  b2.s_bar = {5.0, -7.0};
  std::vector<double> rho2{1.0, 2.0};
  fs = recover_flux_source(rho2, b2, q);
  EXPECT_EQ(fs.s[0], 0.0);
  EXPECT_EQ(fs.s[1], 0.0);
}

TEST(RecoverFluxSource, ClosedFormIsStationary) {
  std::mt19937 gen(21);
  std::uniform_real_distribution<double> r(0.1, 5.0), c(-3.0, 3.0);
  const double alphas[] = {0.0, 1.0, 50.0};
  for (int t = 0; t < 100; ++t) {
    auto p = make_cyclic_model(2, alphas[t % 3], 0.0);
    const auto b = random_bars(p, gen);
    std::vector<double> rho{r(gen), r(gen)};
    const auto fs = recover_flux_source(rho, b, p);
    const auto mob = mobilities(rho, p);
    const double h = 1e-6;
    for (int i = 0; i < 2; ++i) {
      for (int a = 0; a < b.dim; ++a) {
        const std::size_t q = static_cast<std::size_t>(i) * b.dim + a;
        auto f = [&](double m) { return m * m / (2 * mob.v1[i]) + (m - b.m_bar[q]) * (m - b.m_bar[q]) / (2 * p.sigma_u); };
        EXPECT_NEAR((f(fs.m[q] + h) - f(fs.m[q] - h)) / (2 * h), 0.0, 1e-8);
      }
    }
    for (int s = 0; s < 2; ++s) {
      if (mob.v2[s] == 0.0) {
        EXPECT_EQ(fs.s[s], 0.0);
        continue;
      }
      auto f = [&](double x) { return x * x / (2 * mob.v2[s]) + (x - b.s_bar[s]) * (x - b.s_bar[s]) / (2 * p.sigma_u); };
      EXPECT_NEAR((f(fs.s[s] + h) - f(fs.s[s] - h)) / (2 * h), 0.0, 1e-8);
    }
  }
}

TEST(PointwiseObjective, Examples) {
  auto p = make_cyclic_model(1, 0.0, 0.0);
  PointBars b = bars_for(p);
  b.m_bar = {2.0, 0.0, 0.0};
  b.rho_bar = {1.0};
  std::vector<double> rho{1.0};
  EXPECT_NEAR(pointwise_objective(rho, b, p), 1.0, 1e-15);

  auto q = make_cyclic_model(2, 0.0, 0.0);
  PointBars pure = bars_for(q);
  pure.rho_bar = {0.5, 2.0};
  std::vector<double> r2{1.5, 1.0};
  EXPECT_NEAR(pointwise_objective(r2, pure, q), 0.5 + 0.5, 1e-15);
  r2 = {50.0, 1.0};
  EXPECT_THROW(pointwise_objective(r2, pure, q), DomainError);
  r2 = {1e-7, 1.0};
  EXPECT_THROW(pointwise_objective(r2, pure, q), DomainError);

  // Decreasing in rho through the flux term.
  auto g = pointwise_objective_gradient(rho, b, p);
  EXPECT_NEAR(g[0], -4.0 / (2.0 * 4.0), 1e-15);
}

TEST(PointwiseObjective, GradientMatchesFiniteDifferences) {
  std::mt19937 gen(4);
  std::uniform_real_distribution<double> r(0.2, 5.0);
  const double alphas[] = {0.0, 1.0, 50.0};
  const double betas[] = {0.0, 0.001, 0.1};
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + t % 2;
    auto p = make_cyclic_model(n, alphas[t % 3], betas[(t / 3) % 3]);
    const auto b = random_bars(p, gen);
    std::vector<double> rho(n);
    for (auto& v : rho) v = r(gen);
    const auto g = pointwise_objective_gradient(rho, b, p);
    for (int i = 0; i < n; ++i) {
      const double h = 1e-6 * std::max(1.0, rho[i]);
      auto up = rho, dn = rho;
      up[i] += h;
      dn[i] -= h;
      const double fd = (pointwise_objective(up, b, p) - pointwise_objective(dn, b, p)) / (2 * h);
      EXPECT_NEAR(g[i], fd, 1e-5 * std::max(1.0, std::abs(fd))) << "t=" << t << " i=" << i;
    }
  }
}

TEST(Brent, Examples) {
  auto r = brent_minimize([](double x) { return (x - 0.7) * (x - 0.7); }, 1e-6, 40.0, 1e-8);
  EXPECT_NEAR(r.x, 0.7, 1e-8);
  r = brent_minimize([](double x) { return x; }, 1e-6, 40.0, 1e-8);
  EXPECT_EQ(r.x, 1e-6);
  auto f = [](double x) { return (x - 1) * (x - 1) / 2 + 0.1 * x * std::log(x); };
  r = brent_minimize(f, 1e-6, 40.0, 1e-8);
  const double oracle = grid_argmin(f, 1e-6, 40.0, 1000000, nullptr);
  EXPECT_NEAR(r.x, oracle, 1e-4);
  EXPECT_NEAR(r.x, 0.9095, 1e-4);
}

TEST(Brent, NeverWorseThanEndpointsAndErrors) {
  auto dec = [](double x) { return -x; };
  const auto r = brent_minimize(dec, 0.0, 2.0, 1e-8);
  EXPECT_EQ(r.x, 2.0);
  EXPECT_THROW(brent_minimize([](double) { return std::nan(""); }, 0.0, 1.0, 1e-8), NumericalError);
  EXPECT_THROW(brent_minimize(dec, 1.0, 1.0, 1e-8), std::invalid_argument);
  // Non-unimodal: still no worse than both endpoints.
  auto wiggle = [](double x) { return std::sin(5 * x) + 0.1 * x; };
  const auto w = brent_minimize(wiggle, 0.0, 10.0, 1e-8);
  EXPECT_LE(w.fx, std::min(wiggle(0.0), wiggle(10.0)));
}

TEST(Prox, PureProximalReturnsClippedTarget) {
  auto p = make_cyclic_model(3, 0.0, 0.0);
  PointBars b = bars_for(p);
  b.rho_bar = {0.5, -2.0, 100.0};
  b.rho_prev = {1.0, 1.0, 1.0};
  const auto rho = prox_density_sweep(b.rho_prev, b, p);
  EXPECT_NEAR(rho[0], 0.5, 1e-7);
  EXPECT_EQ(rho[1], p.rho_min);
  EXPECT_EQ(rho[2], p.rho_max);
}

TEST(Prox, EntropyExample) {
  auto p = make_cyclic_model(1, 0.0, 0.1);
  PointBars b = bars_for(p);
  b.rho_bar = {1.0};
  b.rho_prev = {1.0};
  const auto rho = prox_density_sweep(b.rho_prev, b, p);
  EXPECT_NEAR(rho[0], 0.9095, 1e-4);
}

TEST(Prox, ZeroAlphaIgnoresSourceBars) {
  auto p = make_cyclic_model(2, 0.0, 0.01);
  std::mt19937 gen(8);
  auto b = random_bars(p, gen);
  const auto a = prox_density_sweep(b.rho_prev, b, p);
  b.s_bar = {100.0, -250.0};
  const auto c = prox_density_sweep(b.rho_prev, b, p);
  EXPECT_EQ(a, c);
}

TEST(Prox, MonotoneDescentAndGridOracle) {
  std::mt19937 gen(12);
  const double alphas[] = {0.0, 1.0, 50.0};
  const double betas[] = {0.0, 0.001, 0.1};
  for (int t = 0; t < 30; ++t) {
    auto p = make_cyclic_model(2, alphas[t % 3], betas[(t / 3) % 3]);
    p.prox_sweeps = 2;
    const auto b = random_bars(p, gen);
    auto rho = b.rho_prev;
    double prev = pointwise_objective(rho, b, p);
    for (int sweep = 0; sweep < 2; ++sweep) {
      for (int i = 0; i < 2; ++i) {
        auto f = [&](double x) {
          auto r = rho;
          r[i] = x;
          return pointwise_objective(r, b, p);
        };
        double fgrid = 0.0;
        const double xg = grid_argmin(f, p.rho_min, p.rho_max, 100000, &fgrid);
        const auto br = brent_minimize(f, p.rho_min, p.rho_max, p.brent_tol);
        EXPECT_NEAR(br.x, xg, 1e-3);
        EXPECT_LE(br.fx, fgrid + 1e-8);
        rho[i] = br.x;
        const double now = pointwise_objective(rho, b, p);
        EXPECT_LE(now, prev + 1e-14);
        prev = now;
      }
    }
    const auto swept = prox_density_sweep(b.rho_prev, b, p);
    EXPECT_NEAR(pointwise_objective(swept, b, p), prev, 1e-9);
  }
}

TEST(Prox, SingleSpeciesRestrictionIsUnimodal) {
  std::mt19937 gen(30);
  const double alphas[] = {0.0, 1.0, 50.0};
  const double betas[] = {0.0, 0.001, 0.1};
  for (int t = 0; t < 100; ++t) {
    auto p = make_cyclic_model(3, alphas[t % 3], betas[(t / 3) % 3]);
    const auto b = random_bars(p, gen);
    const int i = t % 3;
    auto rho = b.rho_prev;
    std::vector<double> vals;
    for (int j = 0; j < 2000; ++j) {
      rho[i] = p.rho_min + (p.rho_max - p.rho_min) * j / 1999.0;
      vals.push_back(pointwise_objective(rho, b, p));
    }
    int sign_changes = 0;
    bool decreasing = true;
    for (std::size_t j = 1; j < vals.size(); ++j) {
      const bool dec = vals[j] < vals[j - 1];
      if (!dec && decreasing) {
        decreasing = false;
        ++sign_changes;
      } else if (dec && !decreasing) {
        ++sign_changes;
      }
    }
    EXPECT_LE(sign_changes, 1) << "t=" << t;
  }
}

TEST(ModelParams, Validation) {
  auto p = make_cyclic_model(2, 0.0, 0.0);
  EXPECT_NO_THROW(p.validate(true));
  p.alpha = -1.0;
  try {
    p.validate(true);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("alpha"), std::string::npos);
  }
  p = make_cyclic_model(2, 0.0, 0.0);
  p.rho_max = p.rho_min;
  EXPECT_THROW(p.validate(true), std::invalid_argument);
  p = make_cyclic_model(2, 0.0, 0.0);
  p.gamma = ReactionMatrix(2, 1, {1.0, 0.0});
  EXPECT_THROW(p.validate(true), std::invalid_argument);
  EXPECT_NO_THROW(p.validate(false));
  p.alpha = 1.0;
  EXPECT_THROW(p.validate(false), std::invalid_argument);
  p.mobility = ReactionMobility::linear;
  EXPECT_NO_THROW(p.validate(false));
}

TEST(ComputeUbar, Examples) {
  const auto mesh = build_mesh(box_spec(2, 2, 2, 2));
  auto p = make_cyclic_model(2, 1.0, 0.0);
  std::mt19937 gen(2);
  PrimalFields u = PrimalFields::zeros(mesh, 2, 2);
  for (auto& r : u.rho) r = random_dg(mesh, gen);
  for (auto& mi : u.m) {
    for (auto& c : mi) c = random_dg(mesh, gen);
  }
  for (auto& s : u.s) s = random_dg(mesh, gen);

  std::vector<CGField> zero(2, CGField::zeros(mesh));
  const auto same = compute_ubar(u, zero, mesh, p);
  for (int i = 0; i < 2; ++i) EXPECT_EQ(same.rho[i].values, u.rho[i].values);

  const auto t = interpolate(mesh, [](double tt, const auto&) { return tt; });
  std::vector<CGField> tt{t, t};
  const auto bar = compute_ubar(u, tt, mesh, p);
  for (int i = 0; i < 2; ++i) {
    for (std::size_t q = 0; q < mesh.dg_size(); ++q) {
      EXPECT_NEAR(bar.rho[i].values[q], u.rho[i].values[q] + 1.0, 1e-12);
      EXPECT_NEAR(bar.m[i][0].values[q], u.m[i][0].values[q], 1e-12);
      EXPECT_NEAR(bar.m[i][1].values[q], u.m[i][1].values[q], 1e-12);
    }
  }
  for (int s = 0; s < 2; ++s) {
    for (std::size_t q = 0; q < mesh.dg_size(); ++q) EXPECT_NEAR(bar.s[s].values[q], u.s[s].values[q], 1e-12);
  }
}
