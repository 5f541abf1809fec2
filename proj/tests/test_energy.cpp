#include <doctest.h>

#include <cmath>
#include <random>

#include "lingrow/energy.hpp"
#include "oracles.hpp"

using namespace lingrow;

namespace {

Field random_field(const Grid2& g, int channels, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Field f(g, channels);
  for (Eigen::Index k = 0; k < f.values().size(); ++k) f.values().data()[k] = u(rng);
  return f;
}

DirichletProblem random_dirichlet(int n, int channels, std::mt19937_64& rng) {
  const Grid2 g(n, n, 1.0 / n);
  return DirichletProblem(g, random_field(g.with_ghost_layer(), channels, rng, 2.0), RadialProfile::minimal_surface());
}

FidelityProblem random_fidelity(int n, std::mt19937_64& rng, bool with_region) {
  const Grid2 g(n, n, 1.0 / n);
  Mask region(g);
  if (with_region) {
    for (int j = 2; j < 5; ++j) {
      for (int i = 1; i < 4; ++i) region.set(i, j, true);
    }
  }
  region.validate();
  Field f = random_field(g, 1, rng, 15.0);  // partly beyond 1/delta
  return FidelityProblem(g, f, region, 0.7, RadialProfile::phi_mu(1.5));
}

// Max-norm relative comparison of the residual with central differences of the energy.
double fd_gradient_error(const Problem& p, const RegularizationState& r, const Field& w) {
  const Field res = euler_residual(p, r, w);
  double err = 0.0;
  double scale = 0.0;
  for (Eigen::Index k = 0; k < w.values().size(); ++k) {
    auto e = [&](double s) {
      Field x = w;
      x.values().data()[k] += s;
      return energy(p, r, x);
    };
    const double fd = oracle::richardson_d1(e, 0.0, 1e-3);
    err = std::max(err, std::abs(fd - res.values().data()[k]));
    scale = std::max(scale, std::abs(fd));
  }
  return err / scale;
}

}  // namespace

TEST_CASE("clip_data") {
  const Grid2 g(4, 4, 0.25);
  CHECK(clip_data(Field::constant(g, 1, 5.0), 0.1).values().isApproxToConstant(5.0));
  CHECK(clip_data(Field::constant(g, 1, 20.0), 0.1).values().isApproxToConstant(10.0));
  CHECK(clip_data(Field::constant(g, 1, -20.0), 0.1).values().isApproxToConstant(-10.0));
  std::mt19937_64 rng(2);
  const Field f = random_field(g, 1, rng, 3.0);
  CHECK(clip_data(f, 0.2).values() == f.values());
}

TEST_CASE("regularisation ranges") {
  CHECK_NOTHROW(RegularizationState::dirichlet(0.1, 1.9));
  CHECK_THROWS_AS(RegularizationState::dirichlet(0.1, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(RegularizationState::dirichlet(0.1, 1.0), std::invalid_argument);
  CHECK_NOTHROW(RegularizationState::dirichlet(0.1, 1.6, 3));
  CHECK_THROWS_AS(RegularizationState::dirichlet(0.1, 1.7, 3), std::invalid_argument);
  CHECK_THROWS_AS(RegularizationState::fidelity(0.1, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(RegularizationState::fidelity(1.0, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(RegularizationState::fidelity(0.0, 1.5), std::invalid_argument);
}

TEST_CASE("dirichlet energy examples") {
  const Grid2 g(8, 8, 0.125);
  const DirichletProblem zero(g, Field(g.with_ghost_layer(), 1), RadialProfile::minimal_surface());
  CHECK(energy_dirichlet(zero, std::nullopt, Field(g, 1)) == 0.0);

  // Affine data: every stencil cell, including the ghost ring cells that
  // own a difference, carries the gradient A.
  auto affine = [](double x, double y) { return 0.5 + 2.0 * x - y; };
  const DirichletProblem p(g, Field::sample_scalar(g.with_ghost_layer(), affine), RadialProfile::minimal_surface());
  const Field w = Field::sample_scalar(g, affine);
  const auto r = RegularizationState::dirichlet(0.01, 1.5);
  const double a = std::sqrt(5.0);
  const double expected = (g.nx + 1) * (g.ny + 1) * g.cell_area() *
                          (0.01 * profile_eval(RadialProfile::phi_mu(1.5), a) +
                           profile_eval(RadialProfile::minimal_surface(), a));
  CHECK(energy_dirichlet(p, r, w) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("energies equal naive cell-loop sums") {
  std::mt19937_64 rng(17);
  for (int channels : {1, 2}) {
    const DirichletProblem d = random_dirichlet(8, channels, rng);
    const Field w = random_field(d.grid, channels, rng, 2.0);
    const Problem p = d;
    CHECK(energy_dirichlet(d, std::nullopt, w) ==
          doctest::Approx(oracle::naive_energy(p, oracle::regularized(p, 0.0, 1.5), 1.0, true, w.values()))
              .epsilon(1e-13));
    const auto r = RegularizationState::dirichlet(0.05, 1.5);
    CHECK(energy_dirichlet(d, r, w) ==
          doctest::Approx(oracle::naive_energy(p, oracle::regularized(p, 0.05, 1.5), 1.0, true, w.values()))
              .epsilon(1e-13));
  }
  for (bool region : {false, true}) {
    const FidelityProblem f = random_fidelity(8, rng, region);
    const Field w = random_field(f.grid, 1, rng, 5.0);
    const Problem p = f;
    const auto r = RegularizationState::fidelity(0.1, 1.5);
    CHECK(energy_fidelity(f, r, w) ==
          doctest::Approx(oracle::naive_energy(p, oracle::regularized(p, 0.1, 1.5), 0.1, true, w.values()))
              .epsilon(1e-13));
    CHECK(energy_fidelity(f, std::nullopt, w) ==
          doctest::Approx(oracle::naive_energy(p, oracle::regularized(p, 0.0, 1.5), 0.1, false, w.values()))
              .epsilon(1e-13));
  }
}

TEST_CASE("fidelity energy examples") {
  const Grid2 g(8, 8, 0.125);
  const auto r = RegularizationState::fidelity(0.1, 1.5);
  const FidelityProblem flat(g, Field::constant(g, 1, 3.0), Mask(g), 0.5, RadialProfile::minimal_surface());
  CHECK(energy_fidelity(flat, r, Field::constant(g, 1, 3.0)) == 0.0);

  Mask region(g);
  for (int i = 0; i < 5; ++i) region.set(i, 0, true);
  const FidelityProblem ones(g, Field::constant(g, 1, 1.0), region, 0.5, RadialProfile::minimal_surface());
  CHECK(energy_fidelity(ones, r, Field(g, 1)) == doctest::Approx(0.5 * g.cell_area() * (64 - 5)).epsilon(1e-14));
}

TEST_CASE("channel mismatch is rejected") {
  std::mt19937_64 rng(4);
  const DirichletProblem d = random_dirichlet(6, 2, rng);
  CHECK_THROWS_AS(energy_dirichlet(d, std::nullopt, Field(d.grid, 1)), std::invalid_argument);
  const FidelityProblem f = random_fidelity(8, rng, false);
  CHECK_THROWS_AS(energy_fidelity(f, std::nullopt, Field(f.grid, 2)), std::invalid_argument);
  CHECK_THROWS_AS(energy_fidelity(f, std::nullopt, Field(Grid2(6, 6, 0.1), 1)), std::invalid_argument);
}

TEST_CASE("boundary penalty") {
  const Grid2 g(10, 10, 0.1);
  Field u0(g.with_ghost_layer(), 1);
  for (int i = 0; i < g.nx; ++i) u0(i + 1, 0) = 1.0;
  const DirichletProblem p(g, u0, RadialProfile::phi_mu(2.0));
  CHECK(relaxed_boundary_penalty(p, Field(g, 1)) == doctest::Approx(1.0).epsilon(1e-14));

  Field doubled = u0;
  doubled.values() *= 2.0;
  const DirichletProblem p2(g, doubled, RadialProfile::phi_mu(2.0));
  CHECK(relaxed_boundary_penalty(p2, Field(g, 1)) == doctest::Approx(2.0).epsilon(1e-14));

  // w matching u0 next to every face gives no jump.
  auto smooth = [](double x, double y) { return std::sin(x) + y * y; };
  const Field ghost = Field::sample_scalar(g.with_ghost_layer(), smooth);
  Field w(g, 1);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) w(i, j) = 0.3;
  }
  for (int k = 0; k < g.nx; ++k) {
    w(k, 0) = ghost(k + 1, 0);
    w(k, g.ny - 1) = ghost(k + 1, g.ny + 1);
  }
  Field rows_only = ghost;
  for (int j = 1; j <= g.ny; ++j) {
    rows_only(0, j) = w(0, j - 1);
    rows_only(g.nx + 1, j) = w(g.nx - 1, j - 1);
  }
  const DirichletProblem matched(g, rows_only, RadialProfile::minimal_surface());
  CHECK(relaxed_boundary_penalty(matched, w) == doctest::Approx(0.0).scale(1.0));
  CHECK(relaxed_energy(matched, w) >= 0.0);
}

TEST_CASE("euler residual is the exact energy gradient") {
  std::mt19937_64 rng(23);
  for (int channels : {1, 2}) {
    const DirichletProblem d = random_dirichlet(8, channels, rng);
    const Field w = random_field(d.grid, channels, rng, 2.0);
    for (double delta : {0.1, 1e-3}) {
      const auto r = RegularizationState::dirichlet(delta, 1.5);
      CHECK(fd_gradient_error(d, r, w) <= 1e-6);
      const Problem p = d;
      const Eigen::MatrixXd naive = oracle::naive_residual(p, oracle::regularized(p, delta, 1.5), delta, w.values());
      CHECK((euler_residual(p, r, w).values() - naive).cwiseAbs().maxCoeff() <= 1e-13 * naive.cwiseAbs().maxCoeff());
    }
  }
  for (bool region : {false, true}) {
    const FidelityProblem f = random_fidelity(8, rng, region);
    const Field w = random_field(f.grid, 1, rng, 5.0);
    for (double delta : {0.1, 1e-3}) {
      const auto r = RegularizationState::fidelity(delta, 1.5);
      CHECK(fd_gradient_error(f, r, w) <= 1e-6);
      const Problem p = f;
      const Eigen::MatrixXd naive = oracle::naive_residual(p, oracle::regularized(p, delta, 1.5), delta, w.values());
      CHECK((euler_residual(p, r, w).values() - naive).cwiseAbs().maxCoeff() <= 1e-13 * naive.cwiseAbs().maxCoeff());
    }
  }
}

TEST_CASE("residual vanishes at constant Dirichlet data") {
  const Grid2 g(8, 8, 0.125);
  const DirichletProblem p(g, Field::constant(g.with_ghost_layer(), 1, 2.5), RadialProfile::minimal_surface());
  const auto r = RegularizationState::dirichlet(0.1, 1.5);
  CHECK(euler_residual(p, r, Field::constant(g, 1, 2.5)).values().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sparse Hessian matches differences of the residual") {
  std::mt19937_64 rng(8);
  const DirichletProblem d = random_dirichlet(5, 2, rng);
  const FidelityProblem f = random_fidelity(8, rng, true);
  for (const Problem& p : {Problem(d), Problem(f)}) {
    const int channels = problem_channels(p);
    const Field w = random_field(problem_grid(p), channels, rng, 2.0);
    const auto r = RegularizationState::for_problem(p, 0.01, 1.5);
    const Eigen::MatrixXd H = Eigen::MatrixXd(energy_hessian(p, r, w));
    const Eigen::Index n = w.values().size();
    REQUIRE(H.rows() == n);
    double err = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      Field plus = w, minus = w;
      plus.values().data()[k] += 1e-6;
      minus.values().data()[k] -= 1e-6;
      const Eigen::MatrixXd col = (euler_residual(p, r, plus).values() - euler_residual(p, r, minus).values()) / 2e-6;
      err = std::max(err, (H.col(k) - Eigen::Map<const Eigen::VectorXd>(col.data(), n)).cwiseAbs().maxCoeff());
    }
    CHECK(err <= 1e-6 * H.cwiseAbs().maxCoeff());
    CHECK((H - H.transpose()).norm() <= 1e-14 * H.norm());
  }
}

TEST_CASE("energies are convex along segments") {
  std::mt19937_64 rng(31);
  const DirichletProblem d = random_dirichlet(8, 1, rng);
  const FidelityProblem f = random_fidelity(8, rng, true);
  for (const Problem& p : {Problem(d), Problem(f)}) {
    const auto r = RegularizationState::for_problem(p, 0.01, 1.5);
    for (int trial = 0; trial < 10; ++trial) {
      const Field a = random_field(problem_grid(p), 1, rng, 3.0);
      const Field b = random_field(problem_grid(p), 1, rng, 3.0);
      for (double t : {0.25, 0.5, 0.75}) {
        Field m = a;
        m.values() = t * a.values() + (1.0 - t) * b.values();
        CHECK(energy(p, r, m) <= t * energy(p, r, a) + (1.0 - t) * energy(p, r, b) + 1e-10);
      }
    }
  }
}

TEST_CASE("growth sandwich transfers to the discrete energy") {
  std::mt19937_64 rng(12);
  const DirichletProblem d = random_dirichlet(8, 1, rng);
  const ConditionReport rep = certify_conditions(d.density, 100.0, 1000);
  const auto& nu = rep.constants;
  const double area = (d.grid.nx + 1) * (d.grid.ny + 1) * d.grid.cell_area();
  for (int trial = 0; trial < 20; ++trial) {
    const Field w = random_field(d.grid, 1, rng, 0.5 * (trial + 1));
    const double tv = total_variation(problem_gradient(d, w));
    const double e = energy_dirichlet(d, std::nullopt, w);
    CHECK(e >= nu.nu1 * tv - nu.nu2 * area - 1e-12);
    CHECK(e <= nu.nu3 * tv + nu.nu4 * area + 1e-12);
  }
}

TEST_CASE("clipped data approaches the data as delta decreases") {
  std::mt19937_64 rng(6);
  const FidelityProblem f = random_fidelity(8, rng, true);
  double prev = std::numeric_limits<double>::infinity();
  for (double delta : {0.5, 0.2, 0.1, 0.05, 0.01}) {
    const Field fd = clip_data(f.f, delta);
    double dist = 0.0;
    for (Eigen::Index c = 0; c < f.grid.cells(); ++c) {
      if (!f.region.member(c)) dist += std::pow(fd.values()(c, 0) - f.f.values()(c, 0), 2);
    }
    CHECK(dist <= prev);
    prev = dist;
  }
  CHECK(prev == 0.0);
}

TEST_CASE("combined base density is rejected") {
  const Grid2 g(4, 4, 0.25);
  CHECK_THROWS_AS(DirichletProblem(g, Field(g.with_ghost_layer(), 1),
                                   RadialProfile::combined(0.1, 1.5, RadialProfile::minimal_surface())),
                  std::invalid_argument);
  CHECK_THROWS_AS(FidelityProblem(g, Field(g, 2), Mask(g), 0.5, RadialProfile::minimal_surface()),
                  std::invalid_argument);
  CHECK_THROWS_AS(FidelityProblem(g, Field(g, 1), Mask(g), 0.0, RadialProfile::minimal_surface()),
                  std::invalid_argument);
}
