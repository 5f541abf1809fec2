#pragma once

// Discrete linear-growth functionals J, J_delta (Dirichlet) and K, K_delta
// (denoising / inpainting), their exact gradients and Hessians.

#include <optional>
#include <variant>

#include <Eigen/Sparse>

#include "lingrow/density.hpp"
#include "lingrow/grid.hpp"

namespace lingrow {

/// Minimise sum h^2 F(grad w) with w frozen to u0 on the ghost layer.
struct DirichletProblem {
  DirichletProblem(Grid2 grid, Field u0, RadialProfile density);

  Grid2 grid;
  Field u0;  // sampled on grid.with_ghost_layer()
  RadialProfile density;

  int channels() const { return u0.channels(); }
};

/// Minimise sum h^2 F(grad w) + lambda sum_{Omega - D} h^2 |w - f|^2 with
/// homogeneous Neumann differences at the far edges. Scalar only.
struct FidelityProblem {
  FidelityProblem(Grid2 grid, Field f, Mask region, double lambda, RadialProfile density);

  Grid2 grid;
  Field f;  // values inside the region are ignored
  Mask region;
  double lambda;
  RadialProfile density;

  int channels() const { return 1; }
};

using Problem = std::variant<DirichletProblem, FidelityProblem>;

const Grid2& problem_grid(const Problem& p);
int problem_channels(const Problem& p);
const RadialProfile& problem_density(const Problem& p);

/// delta in (0,1) and the mu range under which the regularised problem is
/// uniquely solvable: 1 < mu < 1 + 2/n (Dirichlet), 1 < mu < 2 (fidelity).
class RegularizationState {
 public:
  static RegularizationState dirichlet(double delta, double mu, int n = 2);
  static RegularizationState fidelity(double delta, double mu);
  static RegularizationState for_problem(const Problem& p, double delta, double mu);

  double delta() const { return delta_; }
  double mu() const { return mu_; }

 private:
  RegularizationState(double delta, double mu);

  double delta_;
  double mu_;
};

/// delta * Phi_mu + F.
RadialProfile regularized_density(const RadialProfile& base, const RegularizationState& r);

/// f_delta: f clamped symmetrically to [-1/delta, 1/delta].
Field clip_data(const Field& f, double delta);

/// Gradient of w under the problem's boundary rule.
GradientField problem_gradient(const Problem& p, const Field& w);

double energy_dirichlet(const DirichletProblem& p, const std::optional<RegularizationState>& r,
                        const Field& w);
/// With r: K_delta using f_delta. Without: K using f unclipped.
double energy_fidelity(const FidelityProblem& p, const std::optional<RegularizationState>& r,
                       const Field& w);
double energy(const Problem& p, const std::optional<RegularizationState>& r, const Field& w);

/// sum over boundary faces of h * k * |u0(ghost) - w(adjacent cell)|,
/// k the recession slope of the density.
double relaxed_boundary_penalty(const DirichletProblem& p, const Field& w);
/// Interior sum of F(grad w) with free far edges plus the boundary penalty.
double relaxed_energy(const DirichletProblem& p, const Field& w);

/// Exact gradient of the discrete regularised energy with respect to the
/// free cell values.
Field euler_residual(const Problem& p, const RegularizationState& r, const Field& w);

/// Exact Hessian of the discrete regularised energy. Unknowns are ordered
/// like Field::values() in column-major order (cell + cells * channel).
Eigen::SparseMatrix<double> energy_hessian(const Problem& p, const RegularizationState& r,
                                           const Field& w);

/// Per-unknown upper bound of the Hessian diagonal derived from
/// sup_t max(F''(t), F'(t)/t) = F''(0) of the regularised density.
Eigen::VectorXd curvature_bound_diagonal(const Problem& p, const RegularizationState& r);

}  // namespace lingrow
