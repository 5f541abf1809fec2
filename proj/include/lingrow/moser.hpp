#pragma once

// Numerical audit of the Moser iteration on concentric balls: radii and
// exponent sequences, the masses a_j, the measured recursion constants,
// the limiting sup bound, the Caccioppoli-type inequality and the radius
// choice that absorbs the data term.

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lingrow/grid.hpp"

namespace lingrow {

/// Raised for balls that leave the domain or hold too few cells.
class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kMinCellsPerBall = 50;

struct BallFamily {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double R0 = 0.0;
  int n = 2;  // ambient dimension entering the exponents
  int j_max = 6;

  /// Throws GeometryError unless B_0 lies strictly inside the grid and
  /// B_{j_max} holds at least kMinCellsPerBall cell centres.
  void validate(const Grid2& grid) const;
  double ratio() const { return static_cast<double>(n) / (n - 1); }
  Ball level(int j) const;
  Ball limit_ball() const;
};

struct Radii {
  std::vector<double> levels;  // R_0 ... R_{j_max}
  double limit;                // R0 (n-1)/n
};

Radii radii(const BallFamily& bf);
/// s_j = (n/(n-1))^j - 1 for j = 0 ... j_max.
std::vector<double> exponents(const BallFamily& bf);
/// (n/(n-1))^(2n(n-1)); equals 16 for n = 2.
double sup_prefactor(int n);

struct Masses {
  std::vector<double> a;      // a_j, may be +inf when it overflows
  std::vector<double> log_a;  // log a_j >= 0, always finite
};

/// a_j = max{1, int_{B_j} |u|^{(n/(n-1))^j}}. Integrals with s_j >= 15 are
/// accumulated in log space.
Masses masses(const Field& u, const BallFamily& bf);

struct MoserLevel {
  int j;
  double radius;
  double s;
  double a;
  double log_a;
  double c;  // a_{j+1}^{(n-1)/n} / ((n/(n-1))^{2j} a_j); NaN on the last level
};

struct RecursionCheck {
  std::vector<MoserLevel> levels;
  double c_max = 0.0;
  bool pass = false;
};

/// c_j per level. Passes when c_max is finite and the c_j over the second
/// half of the levels stay within 5% of the maximum over the first half.
RecursionCheck verify_recursion(const Field& u, const BallFamily& bf);

struct SupBound {
  double predicted;  // c_max^{n-1} (n/(n-1))^{2n(n-1)} max{1, ||u||_{L^{n/(n-1)}(Omega)}}
  double observed;   // sup over B_inf
  bool pass;
};

SupBound sup_bound(const RecursionCheck& check, const Field& u, const BallFamily& bf);

struct CaccioppoliMeasurement {
  int j;
  double s;
  double lhs;
  double bracket;
  double c;  // lhs / ((s+1) bracket)
  bool valid;  // false when the bracket vanishes but lhs does not
};

/// Radial piecewise-linear cut-off: 1 on B_{j+1}, 0 outside B_j.
double cutoff(const BallFamily& bf, int j, const Eigen::Vector2d& x);
double cutoff_slope(const BallFamily& bf, int j, const Eigen::Vector2d& x);

/// Evaluates both sides of
///   (int |u|^{(s+1)n/(n-1)} eta^{2n/(n-1)})^{(n-1)/n}
///     <= c (s+1) [int |u|^s eta^2 + int |u|^{s+1} eta |grad eta|]
/// with eta the level-j cut-off and returns the smallest admissible c.
CaccioppoliMeasurement caccioppoli_check(const Field& u, const BallFamily& bf, int j, double s);

struct RadiusChoice {
  double R0;
  double epsilon0;
  double integral;  // int_{B_R0 - D} |f|^2
};

/// epsilon0 = 1/(16 lambda^2), the largest value with 2 lambda sqrt(eps0) <= 1/2,
/// and the largest radius found by halving from dist(x0, boundary)/2 (then
/// bisecting back up) with int_{B_R0 - D} |f|^2 < epsilon0.
/// Throws std::domain_error when no admissible radius above 3h exists.
RadiusChoice select_radius(const Field& f, const Mask& region, double lambda, const Eigen::Vector2d& x0);

/// int_{B - D} |f|^2 over cell centres strictly inside the ball.
double masked_square_integral(const Field& f, const Mask& region, const Ball& b);

struct MoserReport {
  BallFamily family;
  RecursionCheck recursion;
  SupBound bound{};
  std::vector<CaccioppoliMeasurement> caccioppoli;
  std::optional<double> epsilon0;

  bool pass() const { return recursion.pass && bound.pass; }
};

/// Runs masses, recursion, sup bound and the Caccioppoli measurements for
/// every level j < j_max and every s in s_values. Throws GeometryError for
/// families rejected by BallFamily::validate.
MoserReport analyze(const Field& u, const BallFamily& bf, const std::vector<double>& s_values,
                    std::optional<double> epsilon0 = std::nullopt);

/// (max - min) / min over positive values; 0 for fewer than two values.
double relative_spread(std::span<const double> values);

nlohmann::json to_json(const MoserReport& report);
/// Columns j, R_j, s_j, a_j, c_j.
std::string levels_csv(const MoserReport& report);

}  // namespace lingrow
