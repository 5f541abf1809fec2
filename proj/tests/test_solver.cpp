#include <doctest.h>

#include <cmath>
#include <random>

#include "lingrow/solver.hpp"
#include "oracles.hpp"

using namespace lingrow;

namespace {

Field random_field(const Grid2& g, int channels, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Field f(g, channels);
  for (Eigen::Index k = 0; k < f.values().size(); ++k) f.values().data()[k] = u(rng);
  return f;
}

FidelityProblem random_denoising(int n, std::uint64_t seed, bool with_region = false) {
  std::mt19937_64 rng(seed);
  const Grid2 g(n, n, 1.0 / n);
  Mask region(g);
  if (with_region) {
    for (int j = 1; j < 4; ++j) {
      for (int i = 2; i < 5; ++i) region.set(i, j, true);
    }
  }
  return FidelityProblem(g, random_field(g, 1, rng, -3.0, 3.0), region, 0.5, RadialProfile::minimal_surface());
}

DirichletProblem random_dirichlet(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Grid2 g(n, n, 1.0 / n);
  return DirichletProblem(g, random_field(g.with_ghost_layer(), 1, rng, -2.0, 2.0), RadialProfile::minimal_surface());
}

double sup_diff(const Field& a, const Eigen::MatrixXd& b) { return (a.values() - b).cwiseAbs().maxCoeff(); }

double l2_diff(const Field& a, const Field& b) {
  return std::sqrt((a.values() - b.values()).squaredNorm() * a.grid().cell_area());
}

}  // namespace

TEST_CASE("solver configuration validation") {
  const Problem p = random_denoising(6, 1);
  SolverConfig cfg;
  CHECK_NOTHROW(cfg.validate(p));
  cfg.delta_schedule = {0.1, 0.1};
  CHECK_THROWS_AS(cfg.validate(p), std::invalid_argument);
  cfg.delta_schedule = {0.1, 0.2};
  CHECK_THROWS_AS(cfg.validate(p), std::invalid_argument);
  cfg.delta_schedule = {1.0};
  CHECK_THROWS_AS(cfg.validate(p), std::invalid_argument);
  cfg.delta_schedule = {0.1};
  cfg.mu = 2.0;
  CHECK_THROWS_AS(cfg.validate(p), std::invalid_argument);
  cfg.mu = 1.5;
  cfg.max_iters = 0;
  CHECK_THROWS_AS(cfg.validate(p), std::invalid_argument);
  CHECK(default_residual_tol(p) == doctest::Approx(3e-8).epsilon(0.01));
}

TEST_CASE("constant data is reproduced") {
  const Grid2 g(10, 10, 0.1);
  const Problem p = FidelityProblem(g, Field::constant(g, 1, 2.5), Mask(g), 0.5, RadialProfile::minimal_surface());
  std::mt19937_64 rng(3);
  for (auto method : {DescentMethod::Newton, DescentMethod::DiagonalGradient}) {
    SolverConfig cfg;
    cfg.method = method;
    cfg.residual_tol = 1e-10;
    const auto r = RegularizationState::fidelity(0.1, 1.5);
    const MinimizeResult res = minimize_fixed_delta(p, r, random_field(g, 1, rng, -1.0, 1.0), cfg);
    CHECK((res.solution.values().array() - 2.5).abs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("affine Dirichlet data is the minimiser") {
  const Grid2 g(10, 10, 0.1);
  auto affine = [](double x, double y) { return 1.0 - 3.0 * x + 0.5 * y; };
  const Problem p = DirichletProblem(g, Field::sample_scalar(g.with_ghost_layer(), affine), RadialProfile::minimal_surface());
  const Field expected = Field::sample_scalar(g, affine);
  std::mt19937_64 rng(4);
  const SolveTrace trace = continuation_solve(p, SolverConfig{}, random_field(g, 1, rng, -1.0, 1.0));
  REQUIRE(trace.entries.size() == 4);
  for (const auto& e : trace.entries) {
    CHECK(sup_diff(e.solution, expected.values()) <= 1e-8);
    CHECK(e.plain_energy == doctest::Approx(trace.entries.front().plain_energy).epsilon(1e-12));
  }
}

TEST_CASE("fixed-delta solutions match the dense Newton oracle") {
  SolverConfig cfg;
  for (const Problem& p : {Problem(random_denoising(8, 11)), Problem(random_denoising(8, 12, true)),
                           Problem(random_dirichlet(8, 13))}) {
    for (auto method : {DescentMethod::Newton, DescentMethod::DiagonalGradient}) {
      cfg.method = method;
      const auto r = RegularizationState::for_problem(p, 0.1, 1.5);
      const Field init = initial_guess(p, 0.1);
      const MinimizeResult res = minimize_fixed_delta(p, r, init, cfg);
      CHECK(res.stats.residual <= cfg.tolerance_for(p));
      const Eigen::MatrixXd ref = oracle::dense_newton(p, oracle::regularized(p, 0.1, 1.5), 0.1, init.values());
      CHECK(sup_diff(res.solution, ref) <= 1e-6);
      for (std::size_t k = 1; k < res.stats.energy_history.size(); ++k) {
        const double prev = res.stats.energy_history[k - 1];
        CHECK(res.stats.energy_history[k] <= prev + 1e-13 * (1.0 + std::abs(prev)));
      }
    }
  }
}

TEST_CASE("iteration budget exhaustion carries the best iterate") {
  const Problem p = random_denoising(8, 21);
  SolverConfig cfg;
  cfg.method = DescentMethod::DiagonalGradient;
  cfg.max_iters = 2;
  const auto r = RegularizationState::fidelity(0.01, 1.5);
  const Field init = initial_guess(p, 0.01);
  try {
    minimize_fixed_delta(p, r, init, cfg);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.residual() > cfg.tolerance_for(p));
    CHECK(e.delta() == 0.01);
    CHECK(energy(p, r, e.best()) <= energy(p, r, init));
  }
  try {
    continuation_solve(p, cfg);
    FAIL("expected ContinuationError");
  } catch (const ContinuationError& e) {
    CHECK(e.delta() == 0.1);
    CHECK(e.partial().entries.empty());
  }
}

TEST_CASE("continuation along the schedule") {
  const Problem p = random_denoising(8, 31);
  const SolveTrace trace = continuation_solve(p, SolverConfig{});
  REQUIRE(trace.entries.size() == 4);
  const double tol = SolverConfig{}.tolerance_for(p);
  for (std::size_t k = 0; k < trace.entries.size(); ++k) {
    const auto& e = trace.entries[k];
    CHECK(e.residual <= tol);
    CHECK(e.tv <= 1.1 * trace.entries.front().tv);
    const Eigen::MatrixXd ref =
        oracle::dense_newton(p, oracle::regularized(p, e.delta, 1.5), e.delta, initial_guess(p, e.delta).values());
    CHECK(sup_diff(e.solution, ref) <= 1e-6);
    if (k > 0) {
      const double prev = trace.entries[k - 1].plain_energy;
      CHECK(e.plain_energy <= prev + 1e-8 * std::abs(prev));
    }
  }
  CHECK(&trace.limit_candidate() == &trace.entries.back().solution);
}

TEST_CASE("pure denoising has a unique solution") {
  const Problem p = random_denoising(12, 41);
  std::mt19937_64 rng(42);
  const Grid2& g = problem_grid(p);
  const SolveTrace a = continuation_solve(p, SolverConfig{}, random_field(g, 1, rng, -5.0, 5.0));
  const SolveTrace b = continuation_solve(p, SolverConfig{}, random_field(g, 1, rng, -5.0, 5.0));
  for (std::size_t k = 0; k < a.entries.size(); ++k) {
    CHECK(l2_diff(a.entries[k].solution, b.entries[k].solution) <= 1e-6);
  }
}

TEST_CASE("Dirichlet solutions shift with the data") {
  const DirichletProblem base = random_dirichlet(10, 51);
  Field shifted_u0 = base.u0;
  shifted_u0.values().array() += 7.25;
  const Problem p = base;
  const Problem q = DirichletProblem(base.grid, shifted_u0, base.density);
  SolverConfig cfg;
  cfg.residual_tol = 1e-11;
  const SolveTrace a = continuation_solve(p, cfg);
  const SolveTrace b = continuation_solve(q, cfg);
  for (std::size_t k = 0; k < a.entries.size(); ++k) {
    CHECK((b.entries[k].solution.values().array() - a.entries[k].solution.values().array() - 7.25).abs().maxCoeff() <=
          1e-9);
  }
}

TEST_CASE("minimality audit") {
  for (const Problem& p : {Problem(random_denoising(12, 61, true)), Problem(random_dirichlet(12, 62))}) {
    const auto r = RegularizationState::for_problem(p, 0.01, 1.5);
    const MinimizeResult res = minimize_fixed_delta(p, r, initial_guess(p, 0.01), SolverConfig{});
    const MinimalityReport rep = verify_minimality(p, r, res.solution, 100, 0.1);
    CHECK(rep.pass);
    CHECK(rep.worst_margin >= -1e-9);

    const MinimalityReport zero = verify_minimality(p, r, res.solution, 10, 0.0);
    CHECK(zero.worst_margin == 0.0);

    // A bump at one cell leaves a descent direction along -residual.
    Field bumped = res.solution;
    bumped(5, 6) += 0.1;
    const Field g = euler_residual(p, r, bumped);
    Field step = bumped;
    step.values() -= 1e-3 * g.values() / g.values().cwiseAbs().maxCoeff();
    CHECK(energy(p, r, step) < energy(p, r, bumped));
  }
}

TEST_CASE("initial guesses") {
  const FidelityProblem f = random_denoising(8, 71, true);
  const Field init = initial_guess(f, 0.1);
  double mean = 0.0;
  int count = 0;
  const Field fd = clip_data(f.f, 0.1);
  for (Eigen::Index c = 0; c < f.grid.cells(); ++c) {
    if (!f.region.member(c)) {
      mean += fd.values()(c, 0);
      ++count;
      CHECK(init.values()(c, 0) == fd.values()(c, 0));
    }
  }
  mean /= count;
  for (Eigen::Index c = 0; c < f.grid.cells(); ++c) {
    if (f.region.member(c)) CHECK(init.values()(c, 0) == doctest::Approx(mean).epsilon(1e-14));
  }
  const DirichletProblem d = random_dirichlet(6, 72);
  CHECK(initial_guess(d, 0.1).values() == d.u0.without_ghost_layer().values());
}

TEST_CASE("pure denoising solutions settle as delta decreases") {
  const Problem p = random_denoising(8, 81);
  SolverConfig cfg;
  cfg.delta_schedule = {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
  const SolveTrace trace = continuation_solve(p, cfg);
  const auto& a = trace.entries[trace.entries.size() - 2];
  const auto& b = trace.entries.back();
  CHECK(l2_diff(a.solution, b.solution) <= 1e-6);
  for (const auto* e : {&a, &b}) {
    const Eigen::MatrixXd ref =
        oracle::dense_newton(p, oracle::regularized(p, e->delta, 1.5), e->delta, initial_guess(p, e->delta).values());
    CHECK(sup_diff(e->solution, ref) <= 1e-6);
  }
  // The gap shrinks linearly in delta.
  for (std::size_t k = 2; k < trace.entries.size(); ++k) {
    const double prev = l2_diff(trace.entries[k - 1].solution, trace.entries[k - 2].solution);
    const double gap = l2_diff(trace.entries[k].solution, trace.entries[k - 1].solution);
    CHECK(gap <= 0.2 * prev);
  }
}
