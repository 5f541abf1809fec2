#pragma once

// Test-only reference computations. None of them calls the library code
// they are used to check.

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "lingrow/energy.hpp"

namespace oracle {

/// Phi_mu(r) as the nested integral int_0^r int_0^s (1+t)^-mu dt ds by
/// composite Gauss-Legendre quadrature on geometrically graded panels.
double phi_mu_quadrature(double mu, double r);

/// Gauss-Legendre integral of fn over [a, b] with `panels` equal panels.
double gauss_legendre(const std::function<double(double)>& fn, double a, double b, int panels);

/// Central difference of fn at t with step h, Richardson-extrapolated.
double richardson_d1(const std::function<double(double)>& fn, double t, double h);
/// Second central difference, Richardson-extrapolated.
double richardson_d2(const std::function<double(double)>& fn, double t, double h);

/// F~ of the regularised density delta Phi_mu + base, evaluated term by term.
struct Density {
  lingrow::RadialProfile base;
  double delta = 0.0;  // 0: base only
  double mu = 1.5;

  double operator()(double t) const;
  double d1(double t) const;
};

/// Energy of the problem by plain loops over an extended array.
/// clipped = true uses f_delta, false the raw f.
double naive_energy(const lingrow::Problem& p, const Density& F, double delta_clip, bool clipped,
                    const Eigen::MatrixXd& w);

/// Exact gradient of naive_energy, accumulated cell by cell.
Eigen::MatrixXd naive_residual(const lingrow::Problem& p, const Density& F, double delta_clip,
                               const Eigen::MatrixXd& w);

/// Damped Newton on the gradient system with a finite-difference Jacobian
/// and dense LU. Stops when max |gradient| <= tol.
Eigen::MatrixXd dense_newton(const lingrow::Problem& p, const Density& F, double delta_clip, Eigen::MatrixXd w,
                             double tol = 1e-13, int max_iters = 200);

/// Regularised density of the problem at (delta, mu).
Density regularized(const lingrow::Problem& p, double delta, double mu);

}  // namespace oracle
