#include "lingrow/moser.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace lingrow {

namespace {

constexpr double kLogSpaceExponent = 15.0;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

void BallFamily::validate(const Grid2& grid) const {
  if (n < 2) throw std::invalid_argument("ball family needs n >= 2");
  if (j_max < 1) throw std::invalid_argument("ball family needs j_max >= 1");
  if (!(R0 > 0.0)) throw GeometryError("ball radius must be positive");
  if (!level(0).inside(grid)) throw GeometryError("ball B_0 is not inside the domain");
  const auto smallest = ball_cells(grid, level(j_max));
  if (static_cast<int>(smallest.size()) < kMinCellsPerBall) {
    std::ostringstream os;
    os << "ball B_" << j_max << " holds " << smallest.size() << " cells, need " << kMinCellsPerBall;
    throw GeometryError(os.str());
  }
}

Ball BallFamily::level(int j) const {
  const double q = (n - 1.0) / n;
  return Ball{center, q * R0 + std::pow(q, j) * R0 / n};
}

Ball BallFamily::limit_ball() const { return Ball{center, R0 * (n - 1.0) / n}; }

Radii radii(const BallFamily& bf) {
  Radii out;
  for (int j = 0; j <= bf.j_max; ++j) out.levels.push_back(bf.level(j).radius);
  out.limit = bf.limit_ball().radius;
  return out;
}

std::vector<double> exponents(const BallFamily& bf) {
  std::vector<double> s;
  for (int j = 0; j <= bf.j_max; ++j) s.push_back(std::pow(bf.ratio(), j) - 1.0);
  return s;
}

double sup_prefactor(int n) {
  const double q = static_cast<double>(n) / (n - 1);
  return std::pow(q, 2.0 * n * (n - 1));
}

Masses masses(const Field& u, const BallFamily& bf) {
  Masses out;
  const auto s = exponents(bf);
  for (int j = 0; j <= bf.j_max; ++j) {
    const Ball b = bf.level(j);
    const double p = s[j] + 1.0;
    double log_a;
    double a;
    if (s[j] < kLogSpaceExponent) {
      const double integral = lp_on(u, b, p);
      a = std::max(1.0, integral);
      log_a = std::log(a);
    } else {
      log_a = std::max(0.0, log_lp_on(u, b, p));
      a = std::exp(log_a);
    }
    out.a.push_back(a);
    out.log_a.push_back(log_a);
  }
  return out;
}

RecursionCheck verify_recursion(const Field& u, const BallFamily& bf) {
  const Masses m = masses(u, bf);
  const auto s = exponents(bf);
  const Radii r = radii(bf);
  const double q = (bf.n - 1.0) / bf.n;
  const double log_ratio = std::log(bf.ratio());

  RecursionCheck out;
  std::vector<double> c;
  for (int j = 0; j <= bf.j_max; ++j) {
    double cj = std::numeric_limits<double>::quiet_NaN();
    if (j < bf.j_max) {
      cj = std::exp(q * m.log_a[j + 1] - 2.0 * j * log_ratio - m.log_a[j]);
      c.push_back(cj);
    }
    out.levels.push_back(MoserLevel{j, r.levels[j], s[j], m.a[j], m.log_a[j], cj});
  }
  out.c_max = *std::max_element(c.begin(), c.end());
  const std::size_t half = c.size() / 2;
  const double head = *std::max_element(c.begin(), c.begin() + std::max<std::size_t>(half, 1));
  double tail = 0.0;
  for (std::size_t k = half; k < c.size(); ++k) tail = std::max(tail, c[k]);
  out.pass = std::isfinite(out.c_max) && tail <= 1.05 * head;
  return out;
}

SupBound sup_bound(const RecursionCheck& check, const Field& u, const BallFamily& bf) {
  const double p = bf.ratio();
  const double norm = std::pow(lp_integral(u, p), 1.0 / p);
  SupBound out;
  out.predicted = std::pow(check.c_max, bf.n - 1) * sup_prefactor(bf.n) * std::max(1.0, norm);
  out.observed = sup_on(u, bf.limit_ball());
  out.pass = out.predicted >= out.observed;
  return out;
}

double cutoff(const BallFamily& bf, int j, const Eigen::Vector2d& x) {
  const double outer = bf.level(j).radius;
  const double inner = bf.level(j + 1).radius;
  const double r = (x - bf.center).norm();
  return std::clamp((outer - r) / (outer - inner), 0.0, 1.0);
}

double cutoff_slope(const BallFamily& bf, int j, const Eigen::Vector2d& x) {
  const double outer = bf.level(j).radius;
  const double inner = bf.level(j + 1).radius;
  const double r = (x - bf.center).norm();
  return (r > inner && r < outer) ? 1.0 / (outer - inner) : 0.0;
}

CaccioppoliMeasurement caccioppoli_check(const Field& u, const BallFamily& bf, int j, double s) {
  if (s < 0.0) throw std::invalid_argument("Caccioppoli exponent must be >= 0");
  const Grid2& g = u.grid();
  const double q = bf.ratio();
  double lhs = 0.0;
  double mass = 0.0;
  double transition = 0.0;
  for (Eigen::Index c : ball_cells(g, bf.level(j))) {
    const int i = static_cast<int>(c % g.nx);
    const int jj = static_cast<int>(c / g.nx);
    const Eigen::Vector2d x = g.center(i, jj);
    const double eta = cutoff(bf, j, x);
    const double slope = cutoff_slope(bf, j, x);
    const double m = u.values().row(c).norm();
    lhs += std::pow(m, (s + 1.0) * q) * std::pow(eta, 2.0 * q);
    mass += std::pow(m, s) * eta * eta;
    transition += std::pow(m, s + 1.0) * eta * slope;
  }
  const double area = g.cell_area();
  CaccioppoliMeasurement out{j, s, std::pow(lhs * area, 1.0 / q), (mass + transition) * area, 0.0, true};
  if (out.bracket > 0.0) {
    out.c = out.lhs / ((s + 1.0) * out.bracket);
  } else if (out.lhs > 0.0) {
    out.valid = false;
    out.c = std::numeric_limits<double>::infinity();
  }
  return out;
}

double masked_square_integral(const Field& f, const Mask& region, const Ball& b) {
  double sum = 0.0;
  for (Eigen::Index c : ball_cells(f.grid(), b)) {
    if (!region.member(c)) sum += f.values().row(c).squaredNorm();
  }
  return sum * f.grid().cell_area();
}

RadiusChoice select_radius(const Field& f, const Mask& region, double lambda, const Eigen::Vector2d& x0) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
  const Grid2& g = f.grid();
  const Eigen::Vector2d lo = g.origin;
  const Eigen::Vector2d hi = g.origin + Eigen::Vector2d(g.width(), g.height());
  const double dist = std::min({x0.x() - lo.x(), hi.x() - x0.x(), x0.y() - lo.y(), hi.y() - x0.y()});
  if (!(dist > 0.0)) throw GeometryError("centre is not an interior point");

  const double eps0 = 1.0 / (16.0 * lambda * lambda);
  auto integral = [&](double r) { return masked_square_integral(f, region, Ball{x0, r}); };

  double pass_r = dist / 2.0;
  double pass_i = integral(pass_r);
  if (pass_i < eps0) return {pass_r, eps0, pass_i};

  double fail_r = pass_r;
  while (true) {
    pass_r /= 2.0;
    if (pass_r < 3.0 * g.h) throw std::domain_error("no admissible radius above 3h: data too singular");
    pass_i = integral(pass_r);
    if (pass_i < eps0) break;
    fail_r = pass_r;
  }
  for (int k = 0; k < 40; ++k) {
    const double mid = 0.5 * (pass_r + fail_r);
    const double value = integral(mid);
    if (value < eps0) {
      pass_r = mid;
      pass_i = value;
    } else {
      fail_r = mid;
    }
  }
  return {pass_r, eps0, pass_i};
}

MoserReport analyze(const Field& u, const BallFamily& bf, const std::vector<double>& s_values,
                    std::optional<double> epsilon0) {
  bf.validate(u.grid());
  MoserReport report;
  report.family = bf;
  report.recursion = verify_recursion(u, bf);
  report.bound = sup_bound(report.recursion, u, bf);
  report.epsilon0 = epsilon0;
  for (double s : s_values) {
    for (int j = 0; j < bf.j_max; ++j) report.caccioppoli.push_back(caccioppoli_check(u, bf, j, s));
  }
  return report;
}

double relative_spread(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo <= 0.0) return *hi > *lo ? std::numeric_limits<double>::infinity() : 0.0;
  return (*hi - *lo) / *lo;
}

nlohmann::json to_json(const MoserReport& report) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& l : report.recursion.levels) {
    levels.push_back({{"j", l.j},
                      {"R", l.radius},
                      {"s", l.s},
                      {"a", number_or_null(l.a)},
                      {"log_a", l.log_a},
                      {"c", number_or_null(l.c)}});
  }
  nlohmann::json cacc = nlohmann::json::array();
  for (const auto& c : report.caccioppoli) {
    cacc.push_back({{"j", c.j},
                    {"s", c.s},
                    {"lhs", c.lhs},
                    {"bracket", c.bracket},
                    {"c", number_or_null(c.c)},
                    {"valid", c.valid}});
  }
  const BallFamily& bf = report.family;
  nlohmann::json out = {
      {"center", {bf.center.x(), bf.center.y()}},
      {"R0", bf.R0},
      {"R_inf", bf.limit_ball().radius},
      {"n", bf.n},
      {"j_max", bf.j_max},
      {"levels", levels},
      {"c_max", number_or_null(report.recursion.c_max)},
      {"recursion_pass", report.recursion.pass},
      {"predicted_sup", number_or_null(report.bound.predicted)},
      {"observed_sup", report.bound.observed},
      {"sup_bound_pass", report.bound.pass},
      {"caccioppoli", cacc},
      {"thresholds",
       {{"recursion_tail_ratio", 1.05},
        {"note", "numeric pass thresholds are engineering choices; the analytic constants are existential"}}}};
  out["epsilon0"] = report.epsilon0 ? nlohmann::json(*report.epsilon0) : nlohmann::json(nullptr);
  return out;
}

std::string levels_csv(const MoserReport& report) {
  std::ostringstream os;
  os << "j,R_j,s_j,a_j,c_j\n";
  for (const auto& l : report.recursion.levels) {
    os << l.j << ',' << fmt(l.radius) << ',' << fmt(l.s) << ',' << fmt(l.a) << ','
       << (std::isnan(l.c) ? std::string() : fmt(l.c)) << '\n';
  }
  return os.str();
}

}  // namespace lingrow
