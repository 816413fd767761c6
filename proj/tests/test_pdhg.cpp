#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "test_support.hpp"
#include "wbary/errors.hpp"
#include "wbary/pdhg.hpp"

using namespace wbary;
using wbary::testing::line_spec;

namespace {

TerminalField constant(const SpaceTimeMesh& mesh, double v) {
  TerminalField f = TerminalField::zeros(mesh);
  for (double& x : f.values) x = v;
  return f;
}

TerminalField bump(const SpaceTimeMesh& mesh, double center, double sharpness) {
  TerminalField f = TerminalField::zeros(mesh);
  for (std::size_t j = 0; j < f.size(); ++j) {
    const double x = mesh.spatial_point(j)[0];
    f.values[j] = std::max(1e-6, std::exp(-sharpness * (x - center) * (x - center)));
  }
  return f;
}

ModelParams scalar_geodesic_model() {
  ModelParams p;
  p.n_species = 1;
  p.gamma = ReactionMatrix(1, 1, {1.0});
  p.alpha = 0.0;
  p.beta = {0.0};
  p.mobility = ReactionMobility::linear;
  return p;
}

PDHGConfig config_with(double tol, int max_iter, RunMode mode = RunMode::barycenter) {
  PDHGConfig c;
  c.tol = tol;
  c.max_iter = max_iter;
  c.mode = mode;
  return c;
}

}  // namespace

TEST(Initialize, ConstantsAverageIntoVarrho) {
  const SpaceTimeMesh mesh(line_spec(4, 2, 2));
  const Solver solver(mesh, make_cyclic_model(2, 0.0, 0.0), PDHGConfig{}, {constant(mesh, 2.0), constant(mesh, 4.0)});
  const auto s = solver.initialize();
  for (double v : s.varrho.values) EXPECT_DOUBLE_EQ(v, 3.0);
}

TEST(Initialize, IdenticalDensitiesGiveThatDensity) {
  const SpaceTimeMesh mesh(line_spec(6, 2, 2));
  const auto r = bump(mesh, 0.4, 20.0);
  const Solver solver(mesh, make_cyclic_model(3, 0.0, 0.0), PDHGConfig{}, {r, r, r});
  const auto s = solver.initialize();
  for (std::size_t j = 0; j < r.size(); ++j) EXPECT_NEAR(s.varrho.values[j], r.values[j], 1e-15);
}

TEST(Initialize, TimeConstantExtensionAndZeroDuals) {
  const SpaceTimeMesh mesh(line_spec(5, 3, 2));
  const auto r0 = bump(mesh, 0.3, 30.0), r1 = bump(mesh, 0.7, 30.0);
  const Solver solver(mesh, make_cyclic_model(2, 10.0, 0.0), PDHGConfig{}, {r0, r1});
  const auto s = solver.initialize();
  const std::size_t ns = mesh.n_space_pts();
  for (std::size_t it = 0; it < mesh.n_time_pts(); ++it) {
    for (std::size_t j = 0; j < ns; ++j) {
      EXPECT_EQ(s.u.rho[0](it, j), r0.values[j]);
      EXPECT_EQ(s.u.rho[1](it, j), r1.values[j]);
    }
  }
  for (const auto& per : s.u.m)
    for (const auto& m : per)
      for (double v : m.values) EXPECT_EQ(v, 0.0);
  for (const auto& src : s.u.s)
    for (double v : src.values) EXPECT_EQ(v, 0.0);
  for (const auto& phi : s.phi)
    for (double v : phi.coefficients) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(s.iteration, 0);
  EXPECT_TRUE(s.history.empty());
}

TEST(Initialize, DensitiesAreClippedIntoBounds) {
  const SpaceTimeMesh mesh(line_spec(4, 2, 2));
  auto low = constant(mesh, 0.0);
  auto high = constant(mesh, 1e3);
  const Solver solver(mesh, make_cyclic_model(2, 0.0, 0.0), PDHGConfig{}, {low, high});
  for (double v : solver.initial()[0].values) EXPECT_EQ(v, solver.params().rho_min);
  for (double v : solver.initial()[1].values) EXPECT_EQ(v, solver.params().rho_max);
}

TEST(SolverConstruction, RejectsInconsistentInputs) {
  const SpaceTimeMesh mesh(line_spec(4, 2, 2));
  const auto r = constant(mesh, 1.0);
  EXPECT_THROW(Solver(mesh, make_cyclic_model(2, 0.0, 0.0), PDHGConfig{}, {r}), ShapeError);
  EXPECT_THROW(Solver(mesh, make_cyclic_model(2, 0.0, 0.0), config_with(0.0, 10), {r, r}), std::invalid_argument);
  EXPECT_THROW(Solver(mesh, make_cyclic_model(2, 0.0, 0.0), config_with(1e-5, 0), {r, r}), std::invalid_argument);
  EXPECT_THROW(Solver(mesh, scalar_geodesic_model(), config_with(1e-5, 10, RunMode::geodesic), {r}),
               std::invalid_argument);
  // Gamma = [1] does not conserve mass, so it is geodesic-only.
  EXPECT_THROW(Solver(mesh, scalar_geodesic_model(), PDHGConfig{}, {r}), std::invalid_argument);
  EXPECT_THROW(Solver(mesh, make_cyclic_model(1, 0.0, 0.0), PDHGConfig{}, {r}, {r}), std::invalid_argument);
  TerminalField wrong(3);
  EXPECT_THROW(Solver(mesh, make_cyclic_model(1, 0.0, 0.0), PDHGConfig{}, {wrong}), ShapeError);
}

TEST(StepPrimal, VarrhoUpdateFormula) {
  const SpaceTimeMesh mesh(line_spec(4, 2, 2));
  const Solver solver(mesh, make_cyclic_model(2, 0.0, 0.0), PDHGConfig{}, {constant(mesh, 0.3), constant(mesh, 0.3)});
  auto s = solver.initialize();
  for (auto& phi : s.phi_tilde)
    for (double& c : phi.coefficients) c = 0.05;
  const double err = solver.step_primal(s);
  for (double v : s.varrho.values) EXPECT_NEAR(v, 0.2, 1e-14);
  EXPECT_NEAR(err, 0.1, 1e-13);  // |0.2 - 0.3| over the unit interval
}

TEST(StepPrimal, ClampKeepsVarrhoNonnegative) {
  const SpaceTimeMesh mesh(line_spec(4, 2, 2));
  auto cfg = config_with(1e-5, 10);
  cfg.clamp_varrho = true;
  const Solver solver(mesh, make_cyclic_model(2, 0.0, 0.0), cfg, {constant(mesh, 0.3), constant(mesh, 0.3)});
  auto s = solver.initialize();
  for (auto& phi : s.phi_tilde)
    for (double& c : phi.coefficients) c = 1.0;
  solver.step_primal(s);
  for (double v : s.varrho.values) EXPECT_EQ(v, 0.0);
}

TEST(StepPrimal, ZeroDualLeavesConsistentStateUnchanged) {
  const SpaceTimeMesh mesh(line_spec(6, 2, 2));
  const Solver solver(mesh, make_cyclic_model(2, 5.0, 0.0), PDHGConfig{},
                      {bump(mesh, 0.3, 20.0), bump(mesh, 0.6, 20.0)});
  auto s = solver.initialize();
  const auto before = s.u;
  solver.step_primal(s);
  for (int i = 0; i < 2; ++i) {
    for (std::size_t q = 0; q < before.rho[i].size(); ++q) {
      EXPECT_NEAR(s.u.rho[i].values[q], before.rho[i].values[q], 1e-7);
      EXPECT_NEAR(s.u.m[i][0].values[q], 0.0, 1e-12);
    }
  }
  for (double v : s.u.s[0].values) EXPECT_NEAR(v, 0.0, 1e-6);
}

TEST(StepPrimal, NoReactionStrengthMeansNoSource) {
  const SpaceTimeMesh mesh(line_spec(6, 2, 2));
  const Solver solver(mesh, make_cyclic_model(2, 0.0, 0.0), PDHGConfig{},
                      {bump(mesh, 0.3, 20.0), bump(mesh, 0.7, 20.0)});
  auto s = solver.initialize();
  for (int k = 0; k < 3; ++k) solver.step(s);
  ASSERT_EQ(s.u.s.size(), 2u);
  for (const auto& src : s.u.s)
    for (double v : src.values) EXPECT_EQ(v, 0.0);
}

TEST(StepPhi, StationaryStateHasZeroIncrement) {
  const SpaceTimeMesh mesh(line_spec(6, 2, 2));
  const auto r = bump(mesh, 0.5, 10.0);
  for (int n : {1, 2}) {
    const Solver solver(mesh, make_cyclic_model(n, 0.0, 0.0), PDHGConfig{}, std::vector<TerminalField>(n, r));
    auto s = solver.initialize();
    solver.step_phi(s);
    for (int i = 0; i < n; ++i) {
      for (double v : s.delta[i].coefficients) EXPECT_NEAR(v, 0.0, 1e-12);
      for (double v : s.phi_tilde[i].coefficients) EXPECT_NEAR(v, 0.0, 1e-12);
    }
  }
}

TEST(StepPhi, ExtrapolationIsTwiceNewMinusOld) {
  const SpaceTimeMesh mesh(line_spec(6, 2, 2));
  const Solver solver(mesh, make_cyclic_model(2, 0.0, 0.0), PDHGConfig{},
                      {bump(mesh, 0.3, 20.0), bump(mesh, 0.7, 20.0)});
  auto s = solver.initialize();
  solver.step(s);
  solver.step_phi(s);
  for (int i = 0; i < 2; ++i) {
    for (std::size_t q = 0; q < s.phi[i].size(); ++q) {
      EXPECT_DOUBLE_EQ(s.phi_tilde[i].coefficients[q], 2.0 * s.phi[i].coefficients[q] - s.phi_prev[i].coefficients[q]);
    }
  }
}

TEST(Iterate, InfiniteToleranceRunsOneIteration) {
  const SpaceTimeMesh mesh(line_spec(6, 2, 2));
  const Solver solver(mesh, make_cyclic_model(2, 0.0, 0.0),
                      config_with(std::numeric_limits<double>::infinity(), 100),
                      {bump(mesh, 0.3, 20.0), bump(mesh, 0.7, 20.0)});
  auto s = solver.initialize();
  solver.iterate(s);
  EXPECT_EQ(s.iteration, 1);
  EXPECT_TRUE(s.converged);
  ASSERT_EQ(s.history.size(), 1u);
  EXPECT_FALSE(std::isnan(s.history[0].objective));
}

TEST(Iterate, StationaryProblemStopsImmediately) {
  const SpaceTimeMesh mesh(line_spec(8, 2, 2));
  const auto r = bump(mesh, 0.5, 20.0);
  const Solver solver(mesh, make_cyclic_model(2, 0.0, 0.0), config_with(1e-8, 5), {r, r});
  auto s = solver.initialize();
  solver.iterate(s);
  EXPECT_TRUE(s.converged);
  EXPECT_EQ(s.iteration, 1);
  EXPECT_LT(s.err, 1e-10);
  const auto& rec = s.history.back();
  EXPECT_LT(rec.kkt_m, 1e-8);
  EXPECT_LT(rec.phi_T_sum, 1e-8);
  EXPECT_LT(rec.mass_drift, 1e-12);
  EXPECT_NEAR(rec.objective, 0.0, 1e-14);
}

TEST(Iterate, MaxIterIsReportedNotThrown) {
  const SpaceTimeMesh mesh(line_spec(6, 2, 2));
  const Solver solver(mesh, make_cyclic_model(2, 0.0, 0.0), config_with(1e-14, 3),
                      {bump(mesh, 0.3, 20.0), bump(mesh, 0.7, 20.0)});
  auto s = solver.initialize();
  solver.iterate(s);
  EXPECT_FALSE(s.converged);
  EXPECT_EQ(s.iteration, 3);
  EXPECT_EQ(s.history.size(), 3u);
}

TEST(Iterate, HistoryCadence) {
  const SpaceTimeMesh mesh(line_spec(6, 2, 2));
  auto cfg = config_with(1e-14, 12);
  cfg.diagnostics_every = 5;
  const Solver solver(mesh, make_cyclic_model(2, 0.0, 0.0), cfg, {bump(mesh, 0.3, 20.0), bump(mesh, 0.7, 20.0)});
  auto s = solver.initialize();
  int calls = 0;
  solver.iterate(s, [&](const HistoryRecord&) { ++calls; });
  EXPECT_EQ(calls, 12);
  ASSERT_EQ(s.history.size(), 12u);
  for (const auto& r : s.history) {
    EXPECT_TRUE(std::isfinite(r.err));
    const bool full = r.iter % 5 == 0 || r.iter == 12;
    EXPECT_EQ(std::isnan(r.objective), !full) << "iter " << r.iter;
    EXPECT_TRUE(std::isnan(r.kkt_s));  // alpha = 0
  }
}

TEST(Iterate, DeterministicAcrossRuns) {
  const SpaceTimeMesh mesh(line_spec(6, 2, 2));
  const Solver solver(mesh, make_cyclic_model(2, 20.0, 0.01), config_with(1e-14, 15),
                      {bump(mesh, 0.3, 20.0), bump(mesh, 0.7, 20.0)});
  auto a = solver.initialize();
  auto b = solver.initialize();
  solver.iterate(a);
  solver.iterate(b);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t k = 0; k < a.history.size(); ++k) EXPECT_EQ(a.history[k].err, b.history[k].err);
  EXPECT_EQ(a.varrho.values, b.varrho.values);
  for (int i = 0; i < 2; ++i) EXPECT_EQ(a.phi[i].coefficients, b.phi[i].coefficients);
}

TEST(Iterate, DensitiesStayInBounds) {
  const SpaceTimeMesh mesh(line_spec(8, 2, 2));
  const Solver solver(mesh, make_cyclic_model(2, 50.0, 0.001), config_with(1e-14, 30),
                      {bump(mesh, 0.2, 200.0), bump(mesh, 0.8, 200.0)});
  auto s = solver.initialize();
  solver.iterate(s, [&](const HistoryRecord&) {
    for (const auto& r : s.u.rho) {
      for (double v : r.values) {
        ASSERT_GE(v, solver.params().rho_min);
        ASSERT_LE(v, solver.params().rho_max);
      }
    }
  });
  EXPECT_FALSE(std::isnan(s.history.back().kkt_s));
}

TEST(Iterate, OneDimensionalBarycenterIsCentred) {
  const SpaceTimeMesh mesh(line_spec(16, 2, 2));
  const Solver solver(mesh, make_cyclic_model(2, 0.0, 0.0), config_with(1e-6, 5000),
                      {bump(mesh, 0.3, 50.0), bump(mesh, 0.7, 50.0)});
  auto s = solver.initialize();
  solver.iterate(s);
  ASSERT_TRUE(s.converged);
  double mass = 0.0, first = 0.0;
  const auto lambda = mesh.spatial_weights();
  for (std::size_t j = 0; j < s.varrho.size(); ++j) {
    mass += lambda[j] * s.varrho.values[j];
    first += lambda[j] * s.varrho.values[j] * mesh.spatial_point(j)[0];
  }
  EXPECT_NEAR(first / mass, 0.5, 1e-3);
  const auto& last = s.history.back();
  EXPECT_GT(last.objective, 0.0);
  EXPECT_LT(last.phi_T_sum, 1e-2);
}

TEST(Diagnostics, ZeroFluxStateHasZeroObjective) {
  const SpaceTimeMesh mesh(line_spec(6, 2, 2));
  const Solver solver(mesh, make_cyclic_model(2, 3.0, 0.0), PDHGConfig{},
                      {bump(mesh, 0.3, 20.0), bump(mesh, 0.7, 20.0)});
  const auto s = solver.initialize();
  const auto rec = solver.diagnostics(s);
  EXPECT_EQ(rec.objective, 0.0);
  EXPECT_EQ(rec.kkt_m, 0.0);
  EXPECT_EQ(rec.kkt_s, 0.0);
  EXPECT_EQ(rec.mass_drift, 0.0);
  EXPECT_EQ(rec.phi_T_sum, 0.0);
}

TEST(Diagnostics, EntropyEntersObjective) {
  const SpaceTimeMesh mesh(line_spec(4, 2, 2));
  const Solver solver(mesh, make_cyclic_model(1, 0.0, 0.5), PDHGConfig{}, {constant(mesh, 2.0)});
  const auto s = solver.initialize();
  // beta * rho log rho integrated over [0,1] x [0,1]
  EXPECT_NEAR(solver.objective(s), 0.5 * 2.0 * std::log(2.0), 1e-13);
}

TEST(Geodesic, IdenticalEndpointsHaveZeroDistance) {
  const SpaceTimeMesh mesh(line_spec(8, 2, 2));
  const auto r = bump(mesh, 0.5, 30.0);
  const Solver solver(mesh, scalar_geodesic_model(), config_with(1e-10, 50, RunMode::geodesic), {r}, {r});
  auto s = solver.initialize();
  solver.iterate(s);
  EXPECT_TRUE(s.converged);
  EXPECT_LT(solver.distance(s), 1e-6);
  EXPECT_TRUE(std::isnan(s.history.back().phi_T_sum));
}

TEST(Geodesic, DistanceIsSymmetric) {
  const SpaceTimeMesh mesh(line_spec(12, 2, 2));
  const auto a = bump(mesh, 0.4, 60.0), b = bump(mesh, 0.6, 60.0);
  const auto cfg = config_with(1e-8, 6000, RunMode::geodesic);
  const Solver forward(mesh, scalar_geodesic_model(), cfg, {a}, {b});
  const Solver backward(mesh, scalar_geodesic_model(), cfg, {b}, {a});
  auto sf = forward.initialize();
  auto sb = backward.initialize();
  forward.iterate(sf);
  backward.iterate(sb);
  const double df = forward.distance(sf), db = backward.distance(sb);
  EXPECT_GT(df, 0.05);
  EXPECT_NEAR(df, db, 1e-3 * df);
}

TEST(Iterate, ConstraintResidualsDecrease) {
  const SpaceTimeMesh mesh(line_spec(32, 4, 2));
  const Solver solver(mesh, make_cyclic_model(2, 50.0, 0.001), config_with(1e-5, 20000),
                      {bump(mesh, 0.25, 100.0), bump(mesh, 0.75, 100.0)});
  auto s = solver.initialize();
  solver.iterate(s);
  ASSERT_TRUE(s.converged);
  const auto& early = s.history[9];
  const auto& last = s.history.back();
  ASSERT_EQ(early.iter, 10);
  EXPECT_LE(last.kkt_m, early.kkt_m / 10);
  EXPECT_LE(last.kkt_s, early.kkt_s / 10);
  EXPECT_LE(last.phi_T_sum, early.phi_T_sum / 10);
  EXPECT_LE(last.continuity, early.continuity / 10);
  const double m0 = 2.0 * std::sqrt(M_PI / 100.0);
  for (double m : solver.mass_per_time(s)) EXPECT_NEAR(m, m0, 1e-2 * m0);
}
