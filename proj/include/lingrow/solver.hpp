#pragma once

// Minimisation of the regularised energies for fixed delta and the
// warm-started continuation delta -> 0.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "lingrow/energy.hpp"

namespace lingrow {

enum class DescentMethod {
  /// Negative residual scaled by the curvature-bound diagonal.
  DiagonalGradient,
  /// Negative residual preconditioned by the exact sparse Hessian.
  Newton,
};

struct SolverConfig {
  /// Bound on max |residual| / h^2; unset means default_residual_tol().
  std::optional<double> residual_tol;
  int max_iters = 50000;
  double armijo_slope = 1e-4;
  double backtrack = 0.5;
  std::vector<double> delta_schedule = {1e-1, 1e-2, 1e-3, 1e-4};
  double mu = 1.5;
  DescentMethod method = DescentMethod::Newton;

  /// Throws std::invalid_argument on an inadmissible schedule or mu.
  void validate(const Problem& p) const;
  double tolerance_for(const Problem& p) const;
};

/// 1e-8 times max(1, sup |data|).
double default_residual_tol(const Problem& p);

struct SolverStats {
  int iterations = 0;
  double residual = 0.0;  // max |euler_residual| / h^2
  double energy = 0.0;
  std::vector<double> energy_history;  // accepted iterates, starting with the initial guess
};

struct MinimizeResult {
  Field solution;
  SolverStats stats;
};

/// Raised when the iteration budget runs out; carries the best iterate.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, Field best, double residual, double delta);

  const Field& best() const { return best_; }
  double residual() const { return residual_; }
  double delta() const { return delta_; }

 private:
  Field best_;
  double residual_;
  double delta_;
};

/// Descent with Armijo backtracking until max |residual| / h^2 <= tol.
MinimizeResult minimize_fixed_delta(const Problem& p, const RegularizationState& r, const Field& init,
                                    const SolverConfig& cfg);

struct TraceEntry {
  double delta;
  Field solution;
  double energy;        // J_delta or K_delta
  double plain_energy;  // J or K (unclipped data)
  double residual;
  int iterations;
  double tv;  // sum h^2 |grad u|
};

struct SolveTrace {
  std::vector<TraceEntry> entries;

  const Field& limit_candidate() const { return entries.back().solution; }
};

/// Initial guess of the continuation: u0 inside the domain (Dirichlet) or
/// f_delta with the region filled by the mean of f_delta over Omega - D.
Field initial_guess(const Problem& p, double delta);

/// Solves along cfg.delta_schedule warm-starting each level from the
/// previous one. On failure throws ContinuationError with the partial trace.
SolveTrace continuation_solve(const Problem& p, const SolverConfig& cfg,
                              const std::optional<Field>& init = std::nullopt);

class ContinuationError : public std::runtime_error {
 public:
  ContinuationError(const ConvergenceError& cause, SolveTrace partial);

  const SolveTrace& partial() const { return partial_; }
  double delta() const { return delta_; }
  double residual() const { return residual_; }
  const Field& best() const { return best_; }

 private:
  SolveTrace partial_;
  double delta_;
  double residual_;
  Field best_;
};

struct MinimalityReport {
  int trials = 0;
  double base_energy = 0.0;
  double worst_margin = 0.0;  // min over trials of E(u + psi) - E(u)
  int failures = 0;
  bool pass = true;
};

/// Random compactly supported tent perturbations of the free cells; a trial
/// fails when E(u + psi) < E(u) - 1e-9 (1 + |E(u)|).
MinimalityReport verify_minimality(const Problem& p, const RegularizationState& r, const Field& u,
                                   int trials, double amplitude, std::uint64_t seed = 1);

}  // namespace lingrow
