#pragma once

// Radial energy densities of linear growth, F(P) = F~(|P|), with their
// derivatives, recession slopes and a sampled certification of the growth
// and ellipticity hypotheses.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace lingrow {

enum class ProfileKind { PhiMu, MinimalSurface, Combined };

/// One-dimensional convex profile F~ : [0, inf) -> [0, inf).
///
/// PhiMu is the double primitive of (1+t)^-mu, MinimalSurface is
/// sqrt(1+t^2) - 1 and Combined is delta * PhiMu(mu) + base, where base is
/// itself a PhiMu or MinimalSurface profile.
class RadialProfile {
 public:
  static RadialProfile phi_mu(double mu);
  static RadialProfile minimal_surface();
  static RadialProfile combined(double delta, double mu, const RadialProfile& base);

  ProfileKind kind() const { return kind_; }
  double mu() const { return mu_; }
  double delta() const { return delta_; }
  const RadialProfile& base() const;

  std::string describe() const;

 private:
  RadialProfile() = default;

  ProfileKind kind_ = ProfileKind::MinimalSurface;
  double mu_ = 0.0;
  double delta_ = 0.0;
  std::shared_ptr<const RadialProfile> base_;
};

/// F~(t). Throws std::invalid_argument for t < 0 or non-finite t.
double profile_eval(const RadialProfile& p, double t);
/// F~'(t).
double profile_d1(const RadialProfile& p, double t);
/// F~''(t).
double profile_d2(const RadialProfile& p, double t);
/// F~'(t) / t, replaced by F~''(0) below t = 1e-8.
double profile_d1_over_t(const RadialProfile& p, double t);

/// DF(P) = F~'(|P|) P / |P|, zero at P = 0.
Eigen::MatrixXd density_grad(const RadialProfile& p, const Eigen::MatrixXd& P);

/// D^2F(P)(Q,Q) using the radial Hessian identity
///   F~'(|P|)/|P| (|Q|^2 - (P:Q)^2/|P|^2) + F~''(|P|) (P:Q)^2/|P|^2.
double density_hess_quadform(const RadialProfile& p, const Eigen::MatrixXd& P,
                             const Eigen::MatrixXd& Q);

/// Slope k of the recession function, F^inf(P) = k |P|.
double recession_slope(const RadialProfile& p);

struct GrowthConstants {
  double nu1 = 0.0;
  double nu2 = 0.0;
  double nu3 = 0.0;
  double nu4 = 0.0;
  double nu5 = 0.0;
  std::optional<double> nu6;
  std::optional<double> mu_certified;
};

struct ConditionResult {
  std::string name;
  bool pass = false;
  double worst_violation = 0.0;  // >= 0, magnitude of the worst sampled breach
  double location = 0.0;         // t at which the worst breach occurred
  std::string note;
};

struct ConditionReport {
  std::string profile;
  double t_max = 0.0;
  int samples = 0;
  double tolerance = 0.0;
  std::vector<ConditionResult> conditions;
  GrowthConstants constants;
  double worst_violation = 0.0;

  bool all_pass() const;
  const ConditionResult& condition(const std::string& name) const;
};

/// The sample grid used by certify_conditions: t = 0, a linear cluster in
/// (0, 1] and log-spaced points up to t_max.
std::vector<double> certification_grid(double t_max, int samples);

/// Checks the seven structure conditions (vanishes_at_origin, flat_at_origin,
/// linear_growth, convex_profile, curvature_decay, mu_ellipticity,
/// slope_bound), the matrix growth sandwich and the Hessian corridor on
/// the sample grid and fits the tightest constants. Failures are reported,
/// never thrown.
ConditionReport certify_conditions(const RadialProfile& p, double t_max, int samples,
                                   double tolerance = 1e-10);

RadialProfile profile_from_json(const nlohmann::json& j);
nlohmann::json profile_to_json(const RadialProfile& p);
nlohmann::json to_json(const ConditionReport& report);

}  // namespace lingrow
