#include "lingrow/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace lingrow {

namespace {

constexpr double kOriginCutoff = 1e-8;
constexpr double kSeriesCutoff = 0.1;

void require_argument(double t) {
  if (!std::isfinite(t) || t < 0.0) {
    throw std::invalid_argument("radial profile argument must be finite and >= 0");
  }
}

void validate_mu(double mu) {
  if (!std::isfinite(mu) || !(mu > 1.0)) {
    throw std::invalid_argument("mu must be a finite number > 1");
  }
}

// Taylor series of the double primitive of (1+t)^-mu around t = 0:
//   sum_k binom(-mu, k) r^(k+2) / ((k+1)(k+2)).
double phi_series(double mu, double r) {
  double coeff = 1.0;
  double power = r * r;
  double sum = 0.0;
  for (int k = 0; k < 80; ++k) {
    const double term = coeff * power / ((k + 1.0) * (k + 2.0));
    sum += term;
    if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
    coeff *= (-mu - k) / (k + 1.0);
    power *= r;
  }
  return sum;
}

// ((1+r)^eps - 1) / eps, continuous at eps = 0.
double relative_power_growth(double eps, double log1p_r) {
  if (eps == 0.0) return log1p_r;
  return std::expm1(eps * log1p_r) / eps;
}

double phi_eval(double mu, double r) {
  if (r < kSeriesCutoff) return phi_series(mu, r);
  const double growth = relative_power_growth(2.0 - mu, std::log1p(r));
  return (r - growth) / (mu - 1.0);
}

double phi_d1(double mu, double r) { return -std::expm1((1.0 - mu) * std::log1p(r)) / (mu - 1.0); }

double phi_d2(double mu, double r) { return std::exp(-mu * std::log1p(r)); }

double ms_eval(double t) { return t * t / (std::hypot(1.0, t) + 1.0); }
double ms_d1(double t) { return t / std::hypot(1.0, t); }
double ms_d2(double t) {
  const double s = std::hypot(1.0, t);
  return 1.0 / (s * s * s);
}

double frobenius_dot(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a.array() * b.array()).sum();
}

}  // namespace

RadialProfile RadialProfile::phi_mu(double mu) {
  validate_mu(mu);
  RadialProfile p;
  p.kind_ = ProfileKind::PhiMu;
  p.mu_ = mu;
  return p;
}

RadialProfile RadialProfile::minimal_surface() {
  RadialProfile p;
  p.kind_ = ProfileKind::MinimalSurface;
  return p;
}

RadialProfile RadialProfile::combined(double delta, double mu, const RadialProfile& base) {
  validate_mu(mu);
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("combined profile needs delta in (0, 1)");
  }
  if (base.kind() == ProfileKind::Combined) {
    throw std::invalid_argument("combined profiles cannot be nested");
  }
  RadialProfile p;
  p.kind_ = ProfileKind::Combined;
  p.mu_ = mu;
  p.delta_ = delta;
  p.base_ = std::make_shared<const RadialProfile>(base);
  return p;
}

const RadialProfile& RadialProfile::base() const {
  if (!base_) throw std::logic_error("profile has no base");
  return *base_;
}

std::string RadialProfile::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case ProfileKind::PhiMu:
      os << "phi_mu(mu=" << mu_ << ")";
      break;
    case ProfileKind::MinimalSurface:
      os << "minimal_surface";
      break;
    case ProfileKind::Combined:
      os << delta_ << "*phi_mu(mu=" << mu_ << ") + " << base_->describe();
      break;
  }
  return os.str();
}

double profile_eval(const RadialProfile& p, double t) {
  require_argument(t);
  switch (p.kind()) {
    case ProfileKind::PhiMu:
      return phi_eval(p.mu(), t);
    case ProfileKind::MinimalSurface:
      return ms_eval(t);
    case ProfileKind::Combined:
      return p.delta() * phi_eval(p.mu(), t) + profile_eval(p.base(), t);
  }
  return 0.0;
}

double profile_d1(const RadialProfile& p, double t) {
  require_argument(t);
  switch (p.kind()) {
    case ProfileKind::PhiMu:
      return phi_d1(p.mu(), t);
    case ProfileKind::MinimalSurface:
      return ms_d1(t);
    case ProfileKind::Combined:
      return p.delta() * phi_d1(p.mu(), t) + profile_d1(p.base(), t);
  }
  return 0.0;
}

double profile_d2(const RadialProfile& p, double t) {
  require_argument(t);
  switch (p.kind()) {
    case ProfileKind::PhiMu:
      return phi_d2(p.mu(), t);
    case ProfileKind::MinimalSurface:
      return ms_d2(t);
    case ProfileKind::Combined:
      return p.delta() * phi_d2(p.mu(), t) + profile_d2(p.base(), t);
  }
  return 0.0;
}

double profile_d1_over_t(const RadialProfile& p, double t) {
  require_argument(t);
  if (t < kOriginCutoff) return profile_d2(p, 0.0);
  return profile_d1(p, t) / t;
}

Eigen::MatrixXd density_grad(const RadialProfile& p, const Eigen::MatrixXd& P) {
  if (!P.allFinite()) throw std::invalid_argument("density_grad: non-finite argument");
  const double norm = P.norm();
  if (norm == 0.0) return Eigen::MatrixXd::Zero(P.rows(), P.cols());
  return (profile_d1_over_t(p, norm)) * P;
}

double density_hess_quadform(const RadialProfile& p, const Eigen::MatrixXd& P,
                             const Eigen::MatrixXd& Q) {
  if (!P.allFinite() || !Q.allFinite()) {
    throw std::invalid_argument("density_hess_quadform: non-finite argument");
  }
  const double q2 = Q.squaredNorm();
  const double norm = P.norm();
  if (norm < kOriginCutoff) return profile_d2(p, 0.0) * q2;
  const double radial = frobenius_dot(P, Q) / norm;
  const double radial2 = radial * radial;
  const double tangential2 = std::max(0.0, q2 - radial2);
  return profile_d1_over_t(p, norm) * tangential2 + profile_d2(p, norm) * radial2;
}

double recession_slope(const RadialProfile& p) {
  switch (p.kind()) {
    case ProfileKind::PhiMu:
      return 1.0 / (p.mu() - 1.0);
    case ProfileKind::MinimalSurface:
      return 1.0;
    case ProfileKind::Combined:
      return p.delta() / (p.mu() - 1.0) + recession_slope(p.base());
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Certification

bool ConditionReport::all_pass() const {
  return std::all_of(conditions.begin(), conditions.end(),
                     [](const ConditionResult& c) { return c.pass; });
}

const ConditionResult& ConditionReport::condition(const std::string& name) const {
  for (const auto& c : conditions) {
    if (c.name == name) return c;
  }
  throw std::out_of_range("no condition named " + name);
}

std::vector<double> certification_grid(double t_max, int samples) {
  if (!(t_max > 0.0) || samples < 100) {
    throw std::invalid_argument("certification needs t_max > 0 and at least 100 samples");
  }
  const int cluster = samples / 5;
  const int logged = samples - 1 - cluster;
  std::vector<double> t;
  t.reserve(samples);
  t.push_back(0.0);
  const double cluster_top = std::min(1.0, t_max);
  for (int k = 1; k <= cluster; ++k) t.push_back(cluster_top * (k - 0.5) / cluster);
  const double lo = std::log(t_max * 1e-6);
  const double hi = std::log(t_max);
  for (int k = 0; k < logged; ++k) {
    t.push_back(std::exp(lo + (hi - lo) * k / (logged - 1)));
  }
  t.back() = t_max;
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

namespace {

// Asymptotic decay exponent of m(t) estimated from the last two samples,
// rounded to one decimal.
double estimate_decay_exponent(const std::vector<double>& t, const std::vector<double>& m) {
  const std::size_t n = t.size();
  const double slope =
      -(std::log(m[n - 1]) - std::log(m[n - 2])) / (std::log1p(t[n - 1]) - std::log1p(t[n - 2]));
  return std::round(slope * 10.0) / 10.0;
}

double certified_mu(const RadialProfile& p, const std::vector<double>& t) {
  switch (p.kind()) {
    case ProfileKind::PhiMu:
      return p.mu();
    case ProfileKind::Combined:
      return std::min(p.mu(), certified_mu(p.base(), t));
    case ProfileKind::MinimalSurface: {
      std::vector<double> m(t.size());
      for (std::size_t i = 0; i < t.size(); ++i) {
        m[i] = std::min(profile_d1_over_t(p, t[i]), profile_d2(p, t[i]));
      }
      return estimate_decay_exponent(t, m);
    }
  }
  return 0.0;
}

ConditionResult make_result(std::string name) {
  ConditionResult r;
  r.name = std::move(name);
  return r;
}

void record(ConditionResult& r, double violation, double where) {
  if (violation > r.worst_violation) {
    r.worst_violation = violation;
    r.location = where;
  }
}

}  // namespace

ConditionReport certify_conditions(const RadialProfile& p, double t_max, int samples,
                                   double tolerance) {
  const std::vector<double> t = certification_grid(t_max, samples);
  const std::size_t count = t.size();

  std::vector<double> f(count), d1(count), d2(count), d1t(count);
  for (std::size_t i = 0; i < count; ++i) {
    f[i] = profile_eval(p, t[i]);
    d1[i] = profile_d1(p, t[i]);
    d2[i] = profile_d2(p, t[i]);
    d1t[i] = profile_d1_over_t(p, t[i]);
  }

  ConditionReport report;
  report.profile = p.describe();
  report.t_max = t_max;
  report.samples = static_cast<int>(count);
  report.tolerance = tolerance;
  GrowthConstants& nu = report.constants;

  // F(0) = 0 and F'(0) = 0.
  auto a1 = make_result("vanishes_at_origin");
  record(a1, std::abs(profile_eval(p, 0.0)), 0.0);
  a1.pass = a1.worst_violation <= tolerance;
  auto a2 = make_result("flat_at_origin");
  record(a2, std::abs(profile_d1(p, 0.0)), 0.0);
  a2.pass = a2.worst_violation <= tolerance;

  // Linear growth: upper slope from the recession function, lower line from a
  // two-pass fit anchored at the tangent slope in t = 1.
  auto a3 = make_result("linear_growth");
  nu.nu3 = recession_slope(p);
  nu.nu4 = 0.0;
  for (std::size_t i = 0; i < count; ++i) nu.nu4 = std::max(nu.nu4, f[i] - nu.nu3 * t[i]);
  const double anchor = std::min(1.0, t_max);
  const double tangent = profile_d1(p, anchor);
  const double f_anchor = profile_eval(p, anchor);
  nu.nu2 = std::max(0.0, tangent * anchor - f_anchor);
  for (std::size_t i = 0; i < count; ++i) nu.nu2 = std::max(nu.nu2, tangent * t[i] - f[i]);
  nu.nu1 = (f_anchor + nu.nu2) / anchor;
  for (std::size_t i = 0; i < count; ++i) {
    if (t[i] >= anchor) nu.nu1 = std::min(nu.nu1, (f[i] + nu.nu2) / t[i]);
  }
  for (std::size_t i = 0; i < count; ++i) {
    record(a3, (nu.nu1 * t[i] - nu.nu2) - f[i], t[i]);
    record(a3, f[i] - (nu.nu3 * t[i] + nu.nu4), t[i]);
  }
  a3.pass = a3.worst_violation <= tolerance && nu.nu1 > 0.0 && nu.nu1 <= nu.nu3 + tolerance;
  if (!(nu.nu1 > 0.0)) a3.note = "lower slope is not positive";

  // Convexity of the profile.
  auto a4 = make_result("convex_profile");
  for (std::size_t i = 0; i < count; ++i) record(a4, -d2[i], t[i]);
  a4.pass = a4.worst_violation <= tolerance;

  // F'' (1+t) must stay bounded. On a finite sample this is a tail
  // test: the maximum over t >= t_max/10 may not exceed the maximum over the
  // remaining samples by more than 5%.
  auto a5 = make_result("curvature_decay");
  {
    double head = 0.0;
    double tail = 0.0;
    double tail_at = t_max;
    for (std::size_t i = 0; i < count; ++i) {
      const double g = d2[i] * (1.0 + t[i]);
      if (t[i] >= t_max / 10.0) {
        if (g > tail) {
          tail = g;
          tail_at = t[i];
        }
      } else {
        head = std::max(head, g);
      }
    }
    record(a5, tail - 1.05 * head, tail_at);
    a5.pass = std::isfinite(tail) && std::isfinite(head) && a5.worst_violation <= tolerance;
    a5.note = "tail test on F''(t)(1+t), ratio 1.05";
  }

  // 0 <= F' <= recession slope, which bounds F'(t)/t (1+t).
  auto a7 = make_result("slope_bound");
  for (std::size_t i = 0; i < count; ++i) {
    record(a7, -d1[i], t[i]);
    record(a7, d1[i] - nu.nu3, t[i]);
  }
  a7.pass = a7.worst_violation <= tolerance;
  a7.note = "0 <= F'(t) <= F^inf slope; F'(t)/t <= nu5/(1+t)";

  nu.nu5 = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    nu.nu5 = std::max(nu.nu5, std::max(d2[i], d1t[i]) * (1.0 + t[i]));
  }

  // mu-ellipticity: min(F'/t, F'') (1+t)^mu bounded below.
  auto a6 = make_result("mu_ellipticity");
  {
    const double mu = certified_mu(p, t);
    double nu6 = std::numeric_limits<double>::infinity();
    double where = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const double scaled = std::min(d1t[i], d2[i]) * std::pow(1.0 + t[i], mu);
      if (scaled < nu6) {
        nu6 = scaled;
        where = t[i];
      }
    }
    a6.location = where;
    if (mu > 1.0 && nu6 > tolerance) {
      a6.pass = true;
      nu.nu6 = nu6;
      nu.mu_certified = mu;
    } else {
      a6.worst_violation = std::max(tolerance - nu6, mu > 1.0 ? 0.0 : 1.0 - mu);
      a6.note = "no positive nu6 with mu > 1 on the sample";
    }
  }

  // Matrix-level checks with random directions: growth sandwich and Hessian
  // corridor 0 <= D^2F(P)(Q,Q) <= nu5 |Q|^2 / (1+|P|).
  auto sandwich = make_result("growth_sandwich");
  auto corridor = make_result("hessian_corridor");
  {
    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> normal;
    for (std::size_t i = 0; i < count; ++i) {
      const int rows = 1 + static_cast<int>(i % 3);
      Eigen::MatrixXd P(rows, 2), Q(rows, 2);
      for (Eigen::Index k = 0; k < P.size(); ++k) {
        P.data()[k] = normal(rng);
        Q.data()[k] = normal(rng);
      }
      const double pn = P.norm();
      if (pn > 0.0) P *= t[i] / pn;
      const double norm = P.norm();
      const double value = profile_eval(p, norm);
      record(sandwich, (nu.nu1 * norm - nu.nu2) - value, norm);
      record(sandwich, value - (nu.nu3 * norm + nu.nu4), norm);

      const double q = density_hess_quadform(p, P, Q);
      const double upper = nu.nu5 * Q.squaredNorm() / (1.0 + norm);
      record(corridor, -q, norm);
      record(corridor, q - upper * (1.0 + 1e-12), norm);
    }
    sandwich.pass = sandwich.worst_violation <= tolerance;
    corridor.pass = corridor.worst_violation <= tolerance;
  }

  report.conditions = {a1, a2, a3, a4, a5, a6, a7, sandwich, corridor};
  for (const auto& c : report.conditions) {
    report.worst_violation = std::max(report.worst_violation, c.worst_violation);
  }
  return report;
}

// ---------------------------------------------------------------------------
// JSON

RadialProfile profile_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
    throw std::invalid_argument("profile description needs a string 'kind'");
  }
  const std::string kind = j["kind"].get<std::string>();
  auto number = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_number()) {
      throw std::invalid_argument(std::string("profile description needs a numeric '") + key +
                                  "'");
    }
    return j[key].get<double>();
  };
  if (kind == "phi_mu") return RadialProfile::phi_mu(number("mu"));
  if (kind == "minimal_surface") return RadialProfile::minimal_surface();
  if (kind == "combined") {
    if (!j.contains("base")) throw std::invalid_argument("combined profile needs a 'base'");
    return RadialProfile::combined(number("delta"), number("mu"), profile_from_json(j["base"]));
  }
  throw std::invalid_argument("unknown profile kind '" + kind + "'");
}

nlohmann::json profile_to_json(const RadialProfile& p) {
  switch (p.kind()) {
    case ProfileKind::PhiMu:
      return {{"kind", "phi_mu"}, {"mu", p.mu()}};
    case ProfileKind::MinimalSurface:
      return {{"kind", "minimal_surface"}};
    case ProfileKind::Combined:
      return {{"kind", "combined"},
              {"delta", p.delta()},
              {"mu", p.mu()},
              {"base", profile_to_json(p.base())}};
  }
  return {};
}

nlohmann::json to_json(const ConditionReport& report) {
  nlohmann::json conditions = nlohmann::json::object();
  for (const auto& c : report.conditions) {
    nlohmann::json entry = {{"pass", c.pass},
                            {"worst_violation", c.worst_violation},
                            {"location", c.location}};
    if (!c.note.empty()) entry["note"] = c.note;
    conditions[c.name] = entry;
  }
  const GrowthConstants& nu = report.constants;
  nlohmann::json constants = {{"nu1", nu.nu1}, {"nu2", nu.nu2}, {"nu3", nu.nu3},
                              {"nu4", nu.nu4}, {"nu5", nu.nu5}};
  constants["nu6"] = nu.nu6 ? nlohmann::json(*nu.nu6) : nlohmann::json(nullptr);
  constants["mu_certified"] =
      nu.mu_certified ? nlohmann::json(*nu.mu_certified) : nlohmann::json(nullptr);
  return {{"profile", report.profile},
          {"t_max", report.t_max},
          {"samples", report.samples},
          {"tolerance", report.tolerance},
          {"conditions", conditions},
          {"constants", constants},
          {"worst_violation", report.worst_violation},
          {"all_pass", report.all_pass()}};
}

}  // namespace lingrow
