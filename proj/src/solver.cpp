#include "lingrow/solver.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/SparseCholesky>

namespace lingrow {

void SolverConfig::validate(const Problem& p) const {
  if (delta_schedule.empty()) throw std::invalid_argument("delta schedule is empty");
  for (std::size_t k = 0; k < delta_schedule.size(); ++k) {
    const double d = delta_schedule[k];
    if (!(d > 0.0 && d < 1.0)) throw std::invalid_argument("delta schedule entries must lie in (0, 1)");
    if (k > 0 && !(d < delta_schedule[k - 1])) {
      throw std::invalid_argument("delta schedule must be strictly decreasing");
    }
  }
  if (max_iters < 1) throw std::invalid_argument("max_iters must be positive");
  if (!(armijo_slope > 0.0 && armijo_slope < 0.5)) throw std::invalid_argument("armijo slope must lie in (0, 0.5)");
  if (!(backtrack > 0.0 && backtrack < 1.0)) throw std::invalid_argument("backtrack factor must lie in (0, 1)");
  if (residual_tol && !(*residual_tol > 0.0)) throw std::invalid_argument("residual_tol must be > 0");
  RegularizationState::for_problem(p, delta_schedule.front(), mu);
}

double default_residual_tol(const Problem& p) {
  double scale = 1.0;
  if (const auto* d = std::get_if<DirichletProblem>(&p)) {
    scale = std::max(scale, d->u0.values().cwiseAbs().maxCoeff());
  } else {
    const auto& f = std::get<FidelityProblem>(p);
    for (Eigen::Index c = 0; c < f.grid.cells(); ++c) {
      if (!f.region.member(c)) scale = std::max(scale, std::abs(f.f.values()(c, 0)));
    }
  }
  return 1e-8 * scale;
}

double SolverConfig::tolerance_for(const Problem& p) const {
  return residual_tol ? *residual_tol : default_residual_tol(p);
}

ConvergenceError::ConvergenceError(const std::string& what, Field best, double residual, double delta)
    : std::runtime_error(what), best_(std::move(best)), residual_(residual), delta_(delta) {}

ContinuationError::ContinuationError(const ConvergenceError& cause, SolveTrace partial)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "continuation failed at delta = " << cause.delta() << ": " << cause.what();
        return os.str();
      }()),
      partial_(std::move(partial)),
      delta_(cause.delta()),
      residual_(cause.residual()),
      best_(cause.best()) {}

namespace {

Eigen::Map<const Eigen::VectorXd> flat(const Field& f) {
  return {f.values().data(), f.values().size()};
}

Field shifted(const Field& w, const Eigen::VectorXd& direction, double step) {
  Field out = w;
  Eigen::Map<Eigen::VectorXd>(out.values().data(), out.values().size()) += step * direction;
  return out;
}

class NewtonDirection {
 public:
  explicit NewtonDirection(const Problem& p) : problem_(p) {}

  // Solves H d = -g; returns false when the factorisation fails even after
  // diagonal shifts.
  bool compute(const RegularizationState& r, const Field& w, const Eigen::VectorXd& grad,
               Eigen::VectorXd& out) {
    Eigen::SparseMatrix<double> hessian = energy_hessian(problem_, r, w);
    if (!analyzed_) {
      solver_.analyzePattern(hessian);
      analyzed_ = true;
    }
    const double scale = hessian.diagonal().cwiseAbs().maxCoeff();
    double shift = 0.0;
    for (int attempt = 0; attempt < 6; ++attempt) {
      if (shift > 0.0) solver_.setShift(shift);
      solver_.factorize(hessian);
      if (solver_.info() == Eigen::Success) {
        out = solver_.solve(-grad);
        solver_.setShift(0.0);
        if (out.allFinite()) return true;
      }
      shift = shift == 0.0 ? 1e-12 * scale : shift * 100.0;
    }
    solver_.setShift(0.0);
    return false;
  }

 private:
  const Problem& problem_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
  bool analyzed_ = false;
};

}  // namespace

MinimizeResult minimize_fixed_delta(const Problem& p, const RegularizationState& r, const Field& init,
                                    const SolverConfig& cfg) {
  const Grid2& grid = problem_grid(p);
  const double tol = cfg.tolerance_for(p);
  const double inv_area = 1.0 / grid.cell_area();
  const Eigen::VectorXd diag = curvature_bound_diagonal(p, r);
  std::optional<NewtonDirection> newton;
  if (cfg.method == DescentMethod::Newton) newton.emplace(p);

  Field w = init;
  double e = energy(p, r, w);
  Eigen::VectorXd grad = flat(euler_residual(p, r, w));
  SolverStats stats;
  stats.energy_history.push_back(e);

  for (int it = 0;; ++it) {
    stats.iterations = it;
    stats.residual = grad.cwiseAbs().maxCoeff() * inv_area;
    stats.energy = e;
    if (stats.residual <= tol) return {std::move(w), std::move(stats)};
    if (it >= cfg.max_iters) {
      std::ostringstream os;
      os << "no convergence after " << it << " iterations, residual " << stats.residual
         << " > " << tol;
      throw ConvergenceError(os.str(), std::move(w), stats.residual, r.delta());
    }

    Eigen::VectorXd direction;
    bool use_newton = newton && newton->compute(r, w, grad, direction) && grad.dot(direction) < 0.0;
    if (!use_newton) direction = -grad.cwiseQuotient(diag);

    // Armijo backtracking with a round-off allowance on the energy sum.
    const double slack = 1e-13 * (1.0 + std::abs(e));
    auto search = [&](const Eigen::VectorXd& d, double& step, Field& trial, double& e_trial) {
      const double slope = grad.dot(d);
      step = 1.0;
      for (int k = 0; k < 60; ++k, step *= cfg.backtrack) {
        trial = shifted(w, d, step);
        e_trial = energy(p, r, trial);
        if (e_trial <= e + cfg.armijo_slope * step * slope + slack) return true;
      }
      return false;
    };

    double step = 0.0;
    double e_trial = 0.0;
    Field trial = w;
    bool accepted = search(direction, step, trial, e_trial);
    if (!accepted && use_newton) {
      direction = -grad.cwiseQuotient(diag);
      accepted = search(direction, step, trial, e_trial);
    }
    if (!accepted) {
      std::ostringstream os;
      os << "line search stalled at residual " << stats.residual << " > " << tol;
      throw ConvergenceError(os.str(), std::move(w), stats.residual, r.delta());
    }
    w = std::move(trial);
    e = e_trial;
    grad = flat(euler_residual(p, r, w));
    stats.energy_history.push_back(e);
  }
}

Field initial_guess(const Problem& p, double delta) {
  if (const auto* d = std::get_if<DirichletProblem>(&p)) return d->u0.without_ghost_layer();
  const auto& fp = std::get<FidelityProblem>(p);
  Field guess = clip_data(fp.f, delta);
  double sum = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index c = 0; c < fp.grid.cells(); ++c) {
    if (!fp.region.member(c)) {
      sum += guess.values()(c, 0);
      ++count;
    }
  }
  const double mean = sum / static_cast<double>(count);
  for (Eigen::Index c = 0; c < fp.grid.cells(); ++c) {
    if (fp.region.member(c)) guess.values()(c, 0) = mean;
  }
  return guess;
}

SolveTrace continuation_solve(const Problem& p, const SolverConfig& cfg, const std::optional<Field>& init) {
  cfg.validate(p);
  SolveTrace trace;
  Field current = init ? *init : initial_guess(p, cfg.delta_schedule.front());
  for (double delta : cfg.delta_schedule) {
    const RegularizationState r = RegularizationState::for_problem(p, delta, cfg.mu);
    try {
      MinimizeResult result = minimize_fixed_delta(p, r, current, cfg);
      current = result.solution;
      trace.entries.push_back(TraceEntry{delta, std::move(result.solution), result.stats.energy,
                                         energy(p, std::nullopt, current), result.stats.residual,
                                         result.stats.iterations,
                                         total_variation(problem_gradient(p, current))});
    } catch (const ConvergenceError& e) {
      throw ContinuationError(e, std::move(trace));
    }
  }
  return trace;
}

MinimalityReport verify_minimality(const Problem& p, const RegularizationState& r, const Field& u,
                                   int trials, double amplitude, std::uint64_t seed) {
  const Grid2& grid = problem_grid(p);
  const int n = problem_channels(p);
  MinimalityReport report;
  report.trials = trials;
  report.base_energy = energy(p, r, u);
  const double allowance = 1e-9 * (1.0 + std::abs(report.base_energy));

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_i(0, grid.nx - 1);
  std::uniform_int_distribution<int> pick_j(0, grid.ny - 1);
  const double max_radius = std::max(2.0, std::min(grid.nx, grid.ny) / 4.0);
  std::uniform_real_distribution<double> pick_radius(1.5, max_radius);
  std::normal_distribution<double> normal;

  bool first = true;
  for (int t = 0; t < trials; ++t) {
    const int ci = pick_i(rng);
    const int cj = pick_j(rng);
    const double radius = pick_radius(rng);
    Eigen::VectorXd weights(n);
    for (int c = 0; c < n; ++c) weights(c) = normal(rng);
    Field perturbed = u;
    for (int j = 0; j < grid.ny; ++j) {
      for (int i = 0; i < grid.nx; ++i) {
        const double dist = std::hypot(i - ci, j - cj);
        const double tent = std::max(0.0, 1.0 - dist / radius);
        if (tent == 0.0) continue;
        for (int c = 0; c < n; ++c) perturbed(i, j, c) += amplitude * tent * weights(c);
      }
    }
    const double margin = energy(p, r, perturbed) - report.base_energy;
    if (first || margin < report.worst_margin) report.worst_margin = margin;
    first = false;
    if (margin < -allowance) ++report.failures;
  }
  report.pass = report.failures == 0;
  return report;
}

}  // namespace lingrow
