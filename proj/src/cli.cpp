#include "lingrow/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace lingrow::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------- helpers

[[noreturn]] void fail(const std::string& what) { throw ConfigError(what); }

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) fail(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) fail("unknown key '" + key + "' in " + where);
  }
}

double number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_number()) fail(where + " needs a numeric '" + key + "'");
  return j[key].get<double>();
}

double number_or(const json& j, const char* key, double fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  return number(j, key, where);
}

int integer_or(const json& j, const char* key, int fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) fail(where + ": '" + key + "' must be an integer");
  return j[key].get<int>();
}

std::string string_of(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_string()) fail(where + " needs a string '" + key + "'");
  return j[key].get<std::string>();
}

Eigen::Vector2d point(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 2 || !j[key][0].is_number() ||
      !j[key][1].is_number()) {
    fail(where + ": '" + key + "' must be a pair of numbers");
  }
  return {j[key][0].get<double>(), j[key][1].get<double>()};
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum Stream : std::uint64_t { kStreamData = 1, kStreamMinimality = 2 };

template <class Fn>
void parallel_for(int count, Fn fn) {
  const int workers = std::min(worker_threads(), count);
  std::vector<std::exception_ptr> errors(count);
  auto body = [&](int k) {
    try {
      fn(k);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  if (workers <= 1) {
    for (int k = 0; k < count; ++k) body(k);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int k = w; k < count; k += workers) body(k);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------- sources

double scalar_source(const json& spec, double x, double y, const std::string& type) {
  if (type == "constant") return number(spec, "value", "constant source");
  if (type == "affine") {
    return number_or(spec, "c", 0.0, "affine source") + number_or(spec, "gx", 0.0, "affine source") * x +
           number_or(spec, "gy", 0.0, "affine source") * y;
  }
  // spike: min(cap, scale |x - center|^-exponent), the cap at the centre itself
  const Eigen::Vector2d c = point(spec, "center", "spike source");
  const double exponent = number_or(spec, "exponent", 0.5, "spike source");
  const double cap = number_or(spec, "cap", 100.0, "spike source");
  const double scale = number_or(spec, "scale", 1.0, "spike source");
  const double r = (Eigen::Vector2d(x, y) - c).norm();
  return r > 0.0 ? std::min(cap, scale * std::pow(r, -exponent)) : cap;
}

Field replicate_into_ghost_layer(const Field& interior) {
  const Grid2& g = interior.grid();
  Field out(g.with_ghost_layer(), interior.channels());
  for (int c = 0; c < interior.channels(); ++c) {
    for (int j = -1; j <= g.ny; ++j) {
      for (int i = -1; i <= g.nx; ++i) {
        out(i + 1, j + 1, c) = interior(std::clamp(i, 0, g.nx - 1), std::clamp(j, 0, g.ny - 1), c);
      }
    }
  }
  return out;
}

void add_noise(Field& f, const json& spec, std::uint64_t seed) {
  if (!spec.contains("noise")) return;
  const double sigma = number(spec, "noise", "field source");
  if (!(sigma >= 0.0)) fail("noise must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, sigma);
  for (Eigen::Index c = 0; c < f.values().cols(); ++c) {
    for (Eigen::Index r = 0; r < f.values().rows(); ++r) f.values()(r, c) += gauss(rng);
  }
}

Field file_field(const json& spec, const std::string& type, const Grid2& grid, int channels,
                 const fs::path& base_dir, bool allow_ghost) {
  const fs::path path = resolve(base_dir, string_of(spec, "path", type + " source"));
  if (!fs::exists(path)) fail("input file does not exist: " + path.string());
  const Grid2 ghost = grid.with_ghost_layer();
  if (type == "pgm") {
    if (channels != 1) fail("pgm sources are single-channel");
    const double lo = number(spec, "lo", "pgm source");
    const double hi = number(spec, "hi", "pgm source");
    const PgmImage img = read_pgm(path);
    if (allow_ghost && img.width == ghost.nx && img.height == ghost.ny) return field_from_pgm(img, ghost, lo, hi);
    const Field interior = field_from_pgm(img, grid, lo, hi);
    return allow_ghost ? replicate_into_ghost_layer(interior) : interior;
  }
  const std::string text = read_text(path);
  if (allow_ghost) {
    try {
      return field_from_csv(text, ghost, channels);
    } catch (const FormatError&) {
      return replicate_into_ghost_layer(field_from_csv(text, grid, channels));
    }
  }
  return field_from_csv(text, grid, channels);
}

Field generated_field(const json& spec, const Grid2& grid, int channels, const fs::path& base_dir,
                      std::uint64_t seed);

// One source per channel (array) or one source for every channel.
Field channel_field(const json& spec, const Grid2& grid, int channels, const fs::path& base_dir,
                    std::uint64_t seed) {
  if (spec.is_array()) {
    if (static_cast<int>(spec.size()) != channels) fail("need one field source per channel");
    Field out(grid, channels);
    for (int c = 0; c < channels; ++c) {
      out.values().col(c) = generated_field(spec[c], grid, 1, base_dir, mix(seed, c)).values().col(0);
    }
    return out;
  }
  return generated_field(spec, grid, channels, base_dir, seed);
}

Field generated_field(const json& spec, const Grid2& grid, int channels, const fs::path& base_dir,
                      std::uint64_t seed) {
  const std::string type = string_of(spec, "type", "field source");
  Field out(grid, channels);
  if (type == "constant" || type == "affine" || type == "spike") {
    if (type == "constant") check_keys(spec, {"type", "value", "noise"}, "constant source");
    if (type == "affine") check_keys(spec, {"type", "c", "gx", "gy", "noise"}, "affine source");
    if (type == "spike") {
      check_keys(spec, {"type", "center", "exponent", "cap", "scale", "noise"}, "spike source");
    }
    const Field one = Field::sample_scalar(grid, [&](double x, double y) { return scalar_source(spec, x, y, type); });
    for (int c = 0; c < channels; ++c) out.values().col(c) = one.values().col(0);
  } else if (type == "uniform") {
    check_keys(spec, {"type", "lo", "hi", "noise"}, "uniform source");
    const double lo = number(spec, "lo", "uniform source");
    const double hi = number(spec, "hi", "uniform source");
    if (!(hi >= lo)) fail("uniform source needs hi >= lo");
    std::mt19937_64 rng(mix(seed, 101));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (Eigen::Index c = 0; c < out.values().cols(); ++c) {
      for (Eigen::Index r = 0; r < out.values().rows(); ++r) out.values()(r, c) = dist(rng);
    }
  } else if (type == "sum") {
    check_keys(spec, {"type", "terms", "noise"}, "sum source");
    if (!spec.contains("terms") || !spec["terms"].is_array() || spec["terms"].empty()) {
      fail("sum source needs a non-empty 'terms' array");
    }
    out.values().setZero();
    for (std::size_t k = 0; k < spec["terms"].size(); ++k) {
      out.values() += channel_field(spec["terms"][k], grid, channels, base_dir, mix(seed, 200 + k)).values();
    }
  } else {
    fail("unknown field source type '" + type + "'");
  }
  add_noise(out, spec, seed);
  return out;
}

Field boundary_field(const json& spec, const Grid2& grid, int channels, const fs::path& base_dir,
                     std::uint64_t seed) {
  if (spec.is_object() && spec.contains("type") && spec["type"].is_string()) {
    const std::string type = spec["type"].get<std::string>();
    if (type == "pgm" || type == "csv") {
      check_keys(spec, {"type", "path", "lo", "hi", "noise"}, type + " source");
      Field f = file_field(spec, type, grid, channels, base_dir, true);
      add_noise(f, spec, seed);
      return f;
    }
  }
  return channel_field(spec, grid.with_ghost_layer(), channels, base_dir, seed);
}

// ---------------------------------------------------------------- config

SolverConfig parse_solver(const json& j) {
  check_keys(j, {"residual_tol", "max_iters", "armijo_slope", "backtrack", "delta_schedule", "mu", "method"},
             "solver");
  SolverConfig s;
  if (j.contains("residual_tol")) s.residual_tol = number(j, "residual_tol", "solver");
  s.max_iters = integer_or(j, "max_iters", s.max_iters, "solver");
  s.armijo_slope = number_or(j, "armijo_slope", s.armijo_slope, "solver");
  s.backtrack = number_or(j, "backtrack", s.backtrack, "solver");
  s.mu = number_or(j, "mu", s.mu, "solver");
  if (j.contains("delta_schedule")) {
    if (!j["delta_schedule"].is_array()) fail("solver.delta_schedule must be an array");
    s.delta_schedule.clear();
    for (const auto& d : j["delta_schedule"]) {
      if (!d.is_number()) fail("solver.delta_schedule must hold numbers");
      s.delta_schedule.push_back(d.get<double>());
    }
  }
  if (j.contains("method")) {
    const std::string m = string_of(j, "method", "solver");
    if (m == "newton") {
      s.method = DescentMethod::Newton;
    } else if (m == "diagonal_gradient") {
      s.method = DescentMethod::DiagonalGradient;
    } else {
      fail("solver.method must be 'newton' or 'diagonal_gradient'");
    }
  }
  return s;
}

Problem parse_problem(const json& j, const Grid2& grid, const RadialProfile& density, const fs::path& base,
                      std::uint64_t seed) {
  const std::string kind = string_of(j, "kind", "problem");
  if (density.kind() == ProfileKind::Combined) fail("the problem density must not be 'combined'");
  const std::uint64_t data_seed = mix(seed, kStreamData);
  if (kind == "dirichlet") {
    check_keys(j, {"kind", "channels", "u0"}, "problem");
    const int channels = integer_or(j, "channels", 1, "problem");
    if (channels < 1) fail("problem.channels must be >= 1");
    if (!j.contains("u0")) fail("dirichlet problem needs 'u0'");
    Field u0 = boundary_field(j["u0"], grid, channels, base, data_seed);
    if (!u0.all_finite()) fail("u0 has non-finite values");
    return DirichletProblem(grid, std::move(u0), density);
  }
  if (kind == "fidelity") {
    check_keys(j, {"kind", "channels", "f", "mask", "lambda"}, "problem");
    if (integer_or(j, "channels", 1, "problem") != 1) fail("fidelity problems are single-channel");
    if (!j.contains("f")) fail("fidelity problem needs 'f'");
    Field f = [&] {
      const json& spec = j["f"];
      if (spec.is_object() && spec.contains("type") && spec["type"].is_string() &&
          (spec["type"] == "pgm" || spec["type"] == "csv")) {
        check_keys(spec, {"type", "path", "lo", "hi", "noise"}, "f source");
        Field out = file_field(spec, spec["type"].get<std::string>(), grid, 1, base, false);
        add_noise(out, spec, data_seed);
        return out;
      }
      return channel_field(spec, grid, 1, base, data_seed);
    }();
    Mask region = j.contains("mask") ? build_mask(j["mask"], grid, base) : Mask(grid);
    const double lambda = number(j, "lambda", "problem");
    if (!(lambda > 0.0)) fail("problem.lambda must be > 0");
    return FidelityProblem(grid, std::move(f), std::move(region), lambda, density);
  }
  fail("problem.kind must be 'dirichlet' or 'fidelity'");
}

MoserSettings parse_moser(const json& j) {
  check_keys(j, {"center", "R0", "n", "j_max", "s_values"}, "moser");
  MoserSettings m;
  m.center = point(j, "center", "moser");
  if (j.contains("R0") && !(j["R0"].is_string() && j["R0"] == "auto")) m.R0 = number(j, "R0", "moser");
  m.n = integer_or(j, "n", m.n, "moser");
  m.j_max = integer_or(j, "j_max", m.j_max, "moser");
  if (m.n < 2) fail("moser.n must be >= 2");
  if (m.j_max < 3) fail("moser.j_max must be >= 3");
  if (j.contains("s_values")) {
    if (!j["s_values"].is_array()) fail("moser.s_values must be an array");
    m.s_values.clear();
    for (const auto& s : j["s_values"]) {
      if (!s.is_number() || s.get<double>() < 0.0) fail("moser.s_values must hold numbers >= 0");
      m.s_values.push_back(s.get<double>());
    }
  }
  return m;
}

OutputSettings parse_output(const json& j) {
  check_keys(j, {"pgm", "maxval", "lo", "hi", "csv_fields"}, "output");
  OutputSettings o;
  if (j.contains("pgm")) {
    const std::string enc = string_of(j, "pgm", "output");
    if (enc == "binary") {
      o.encoding = PgmEncoding::Binary;
    } else if (enc == "ascii") {
      o.encoding = PgmEncoding::Ascii;
    } else {
      fail("output.pgm must be 'binary' or 'ascii'");
    }
  }
  o.maxval = integer_or(j, "maxval", o.maxval, "output");
  if (o.maxval != 255 && o.maxval != 65535) fail("output.maxval must be 255 or 65535");
  if (j.contains("lo") != j.contains("hi")) fail("output.lo and output.hi go together");
  if (j.contains("lo")) {
    o.lo = number(j, "lo", "output");
    o.hi = number(j, "hi", "output");
    if (!(*o.hi > *o.lo)) fail("output needs hi > lo");
  }
  if (j.contains("csv_fields")) {
    if (!j["csv_fields"].is_boolean()) fail("output.csv_fields must be a boolean");
    o.csv_fields = j["csv_fields"].get<bool>();
  }
  return o;
}

// ---------------------------------------------------------------- artifacts

std::string fmt(double v) { return format_double(v); }

json grid_json(const Grid2& g) {
  return {{"nx", g.nx}, {"ny", g.ny}, {"h", g.h}, {"origin", {g.origin.x(), g.origin.y()}}};
}

double data_sup(const Problem& p) {
  if (const auto* d = std::get_if<DirichletProblem>(&p)) return d->u0.magnitude().maxCoeff();
  return std::get<FidelityProblem>(p).f.magnitude().maxCoeff();
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

struct SolveOutcome {
  SolveTrace trace;
  std::optional<std::string> failure;
  double failed_delta = 0.0;
  double failed_residual = 0.0;

  bool converged() const { return !failure.has_value(); }
};

SolveOutcome solve(const RunConfig& cfg, std::ostream& log) {
  SolveOutcome out;
  try {
    out.trace = continuation_solve(*cfg.problem, cfg.solver);
  } catch (const ContinuationError& e) {
    out.trace = e.partial();
    out.failure = e.what();
    out.failed_delta = e.delta();
    out.failed_residual = e.residual();
  }
  for (const auto& e : out.trace.entries) {
    log << "solve: delta=" << e.delta << " iterations=" << e.iterations << " residual=" << fmt(e.residual)
        << "\n";
  }
  if (out.failure) log << "solve: " << *out.failure << "\n";
  return out;
}

std::string entry_stem(std::size_t k) { return "u_delta_" + std::to_string(k); }

bool plain_energy_nonincreasing(const SolveTrace& t) {
  for (std::size_t k = 1; k < t.entries.size(); ++k) {
    const double prev = t.entries[k - 1].plain_energy;
    if (t.entries[k].plain_energy > prev + 1e-8 * std::max(1.0, std::abs(prev))) return false;
  }
  return true;
}

json write_solve_artifacts(const RunConfig& cfg, const SolveOutcome& outcome, const fs::path& out_dir) {
  const Problem& p = *cfg.problem;
  const Ball interior = interior_ball(cfg);
  const auto& entries = outcome.trace.entries;

  double lo = cfg.output.lo.value_or(0.0);
  double hi = cfg.output.hi.value_or(1.0);
  if (!cfg.output.lo && !entries.empty()) {
    lo = entries.front().solution.values().minCoeff();
    hi = entries.front().solution.values().maxCoeff();
    for (const auto& e : entries) {
      lo = std::min(lo, e.solution.values().minCoeff());
      hi = std::max(hi, e.solution.values().maxCoeff());
    }
    if (!(hi > lo)) hi = lo + 1.0;
  }

  std::string csv = "delta,energy,plain_energy,residual,iters,tv,interior_sup\n";
  json list = json::array();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const TraceEntry& e = entries[k];
    const double sup = sup_on(e.solution, interior);
    csv += fmt(e.delta) + ',' + fmt(e.energy) + ',' + fmt(e.plain_energy) + ',' + fmt(e.residual) + ',' +
           std::to_string(e.iterations) + ',' + fmt(e.tv) + ',' + fmt(sup) + '\n';
    json pgms = json::array();
    const int channels = e.solution.channels();
    for (int c = 0; c < channels; ++c) {
      const std::string name = entry_stem(k) + (channels > 1 ? "_c" + std::to_string(c) : "") + ".pgm";
      write_pgm(out_dir / name, pgm_from_field(e.solution, lo, hi, cfg.output.maxval, c), cfg.output.encoding);
      pgms.push_back(name);
    }
    json item = {{"delta", e.delta},           {"energy", e.energy}, {"plain_energy", e.plain_energy},
                 {"residual", e.residual},     {"iterations", e.iterations},
                 {"tv", e.tv},                 {"interior_sup", sup}, {"pgm", pgms}};
    if (cfg.output.csv_fields) {
      const std::string name = entry_stem(k) + ".csv";
      write_text(out_dir / name, field_to_csv(e.solution));
      item["csv"] = name;
    }
    list.push_back(item);
  }
  write_text(out_dir / "summary.csv", csv);

  json problem = {{"grid", grid_json(problem_grid(p))}, {"channels", problem_channels(p)}};
  if (const auto* f = std::get_if<FidelityProblem>(&p)) {
    problem["kind"] = "fidelity";
    problem["lambda"] = f->lambda;
    problem["region_cells"] = f->region.count();
  } else {
    problem["kind"] = "dirichlet";
  }
  problem["data_sup"] = data_sup(p);
  json schedule = json::array();
  for (double d : cfg.solver.delta_schedule) schedule.push_back(d);
  json trace = {
      {"problem", problem},
      {"density", profile_to_json(problem_density(p))},
      {"solver",
       {{"mu", cfg.solver.mu},
        {"method", cfg.solver.method == DescentMethod::Newton ? "newton" : "diagonal_gradient"},
        {"residual_tol", cfg.solver.tolerance_for(p)},
        {"max_iters", cfg.solver.max_iters},
        {"delta_schedule", schedule}}},
      {"interior_ball", {{"center", {interior.center.x(), interior.center.y()}}, {"radius", interior.radius}}},
      {"pgm_range", {lo, hi}},
      {"entries", list},
      {"converged", outcome.converged()},
      {"plain_energy_nonincreasing", plain_energy_nonincreasing(outcome.trace)}};
  trace["failure"] = outcome.failure
                         ? json{{"delta", outcome.failed_delta},
                                {"residual", outcome.failed_residual},
                                {"message", *outcome.failure}}
                         : json(nullptr);
  write_json(out_dir / "trace.json", trace);
  return trace;
}

struct MoserOutcome {
  std::vector<MoserReport> reports;
  json summary;
  bool pass = false;
};

MoserOutcome moser_artifacts(const RunConfig& cfg, const ResolvedFamily& rf, const SolveTrace& trace,
                             const fs::path& out_dir, std::ostream& log) {
  MoserOutcome out;
  const auto& entries = trace.entries;
  out.reports.resize(entries.size());
  parallel_for(static_cast<int>(entries.size()), [&](int k) {
    out.reports[k] = analyze(entries[k].solution, rf.family, cfg.moser->s_values, rf.epsilon0);
  });

  std::string sup_csv = "delta,sup_B_inf,predicted_sup,c_max\n";
  std::vector<double> c_max, sups;
  json per_delta = json::array();
  out.pass = !entries.empty();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const MoserReport& r = out.reports[k];
    json doc = to_json(r);
    doc["delta"] = entries[k].delta;
    write_json(out_dir / ("moser_delta_" + std::to_string(k) + ".json"), doc);
    write_text(out_dir / ("moser_delta_" + std::to_string(k) + ".csv"), levels_csv(r));
    sup_csv += fmt(entries[k].delta) + ',' + fmt(r.bound.observed) + ',' + fmt(r.bound.predicted) + ',' +
               fmt(r.recursion.c_max) + '\n';
    c_max.push_back(r.recursion.c_max);
    sups.push_back(r.bound.observed);
    per_delta.push_back({{"delta", entries[k].delta},
                         {"recursion_pass", r.recursion.pass},
                         {"sup_bound_pass", r.bound.pass},
                         {"c_max", r.recursion.c_max},
                         {"observed_sup", r.bound.observed},
                         {"predicted_sup", r.bound.predicted}});
    out.pass = out.pass && r.pass();
    log << "moser: delta=" << entries[k].delta << " c_max=" << fmt(r.recursion.c_max)
        << " sup=" << fmt(r.bound.observed) << " predicted=" << fmt(r.bound.predicted)
        << (r.pass() ? " pass" : " FAIL") << "\n";
  }
  write_text(out_dir / "sup_vs_delta.csv", sup_csv);

  // Spread across delta of each Caccioppoli constant, keyed by (s, j).
  json cacc = json::array();
  double worst_cacc = 0.0;
  if (!out.reports.empty()) {
    const auto& first = out.reports.front().caccioppoli;
    for (std::size_t m = 0; m < first.size(); ++m) {
      std::vector<double> values;
      for (const auto& r : out.reports) values.push_back(r.caccioppoli[m].c);
      const double spread = relative_spread(values);
      worst_cacc = std::max(worst_cacc, spread);
      cacc.push_back({{"s", first[m].s}, {"j", first[m].j}, {"spread_across_delta", spread}});
    }
  }
  const double boundary = data_sup(*cfg.problem);
  const double sup_max = sups.empty() ? 0.0 : *std::max_element(sups.begin(), sups.end());
  out.summary = {{"family",
                  {{"center", {rf.family.center.x(), rf.family.center.y()}},
                   {"R0", rf.family.R0},
                   {"R_inf", rf.family.limit_ball().radius},
                   {"n", rf.family.n},
                   {"j_max", rf.family.j_max}}},
                 {"per_delta", per_delta},
                 {"c_max_spread", relative_spread(c_max)},
                 {"sup_spread", relative_spread(sups)},
                 {"data_sup", boundary},
                 {"sup_to_data_ratio", boundary > 0.0 ? sup_max / boundary : 0.0},
                 {"caccioppoli", cacc},
                 {"caccioppoli_worst_spread", worst_cacc},
                 {"pass", out.pass},
                 {"thresholds",
                  {{"c_max_spread", 0.25},
                   {"sup_spread", 0.10},
                   {"caccioppoli_spread", 0.50},
                   {"note", "numeric pass thresholds are engineering choices; the analytic constants are existential"}}}};
  out.summary["epsilon0"] = rf.epsilon0 ? json(*rf.epsilon0) : json(nullptr);
  write_json(out_dir / "moser_summary.json", out.summary);
  return out;
}

ConditionReport density_artifacts(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  const ConditionReport report =
      certify_conditions(cfg.density, cfg.certify.t_max, cfg.certify.samples, cfg.certify.tolerance);
  write_json(out_dir / "density_report.json", to_json(report));
  for (const auto& c : report.conditions) {
    log << "density: " << c.name << (c.pass ? " pass" : " FAIL") << "\n";
  }
  return report;
}

void require_problem(const RunConfig& cfg) {
  if (!cfg.problem) fail("this command needs 'grid' and 'problem' sections");
}

int cmd_density_check(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  return density_artifacts(cfg, out, log).all_pass() ? kExitOk : kExitCheckFailed;
}

int cmd_solve(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  require_problem(cfg);
  const SolveOutcome outcome = solve(cfg, log);
  write_solve_artifacts(cfg, outcome, out);
  return outcome.converged() ? kExitOk : kExitCheckFailed;
}

int cmd_moser(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  require_problem(cfg);
  if (!cfg.moser) fail("the moser command needs a 'moser' section");
  const ResolvedFamily rf = resolve_family(cfg);
  const SolveOutcome outcome = solve(cfg, log);
  write_solve_artifacts(cfg, outcome, out);
  const MoserOutcome m = moser_artifacts(cfg, rf, outcome.trace, out, log);
  return outcome.converged() && m.pass ? kExitOk : kExitCheckFailed;
}

int cmd_full_report(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  require_problem(cfg);
  std::optional<ResolvedFamily> rf;
  if (cfg.moser) rf = resolve_family(cfg);

  const ConditionReport density = density_artifacts(cfg, out, log);
  const SolveOutcome outcome = solve(cfg, log);
  const json trace = write_solve_artifacts(cfg, outcome, out);

  json report = {{"density", {{"profile", density.profile}, {"all_pass", density.all_pass()}}},
                 {"solve",
                  {{"converged", outcome.converged()},
                   {"levels", outcome.trace.entries.size()},
                   {"plain_energy_nonincreasing", trace["plain_energy_nonincreasing"]}}}};
  bool pass = density.all_pass() && outcome.converged();

  if (rf) {
    const MoserOutcome m = moser_artifacts(cfg, *rf, outcome.trace, out, log);
    report["moser"] = m.summary;
    pass = pass && m.pass;
  } else {
    report["moser"] = nullptr;
  }

  const auto& entries = outcome.trace.entries;
  std::vector<MinimalityReport> audits(entries.size());
  parallel_for(static_cast<int>(entries.size()), [&](int k) {
    const auto r = RegularizationState::for_problem(*cfg.problem, entries[k].delta, cfg.solver.mu);
    audits[k] = verify_minimality(*cfg.problem, r, entries[k].solution, cfg.minimality.trials,
                                  cfg.minimality.amplitude, mix(cfg.seed, kStreamMinimality + k));
  });
  json minimality = json::array();
  for (std::size_t k = 0; k < audits.size(); ++k) {
    minimality.push_back({{"delta", entries[k].delta},
                          {"trials", audits[k].trials},
                          {"worst_margin", audits[k].worst_margin},
                          {"failures", audits[k].failures},
                          {"pass", audits[k].pass}});
    pass = pass && audits[k].pass;
    log << "minimality: delta=" << entries[k].delta << " worst_margin=" << fmt(audits[k].worst_margin)
        << (audits[k].pass ? " pass" : " FAIL") << "\n";
  }
  report["minimality"] = minimality;
  report["seed"] = cfg.seed;
  report["pass"] = pass;
  write_json(out / "report.json", report);
  return pass ? kExitOk : kExitCheckFailed;
}

}  // namespace

// ---------------------------------------------------------------- public

std::optional<Command> parse_command(std::string_view name) {
  if (name == "density-check") return Command::DensityCheck;
  if (name == "solve") return Command::Solve;
  if (name == "moser") return Command::Moser;
  if (name == "full-report") return Command::FullReport;
  return std::nullopt;
}

std::string_view command_name(Command c) {
  switch (c) {
    case Command::DensityCheck:
      return "density-check";
    case Command::Solve:
      return "solve";
    case Command::Moser:
      return "moser";
    case Command::FullReport:
      return "full-report";
  }
  return "";
}

Field build_field(const json& spec, const Grid2& grid, int channels, const fs::path& base_dir,
                  std::uint64_t seed) {
  if (spec.is_object() && spec.contains("type") && spec["type"].is_string() &&
      (spec["type"] == "pgm" || spec["type"] == "csv")) {
    check_keys(spec, {"type", "path", "lo", "hi", "noise"}, "field source");
    Field f = file_field(spec, spec["type"].get<std::string>(), grid, channels, base_dir, false);
    add_noise(f, spec, seed);
    return f;
  }
  return channel_field(spec, grid, channels, base_dir, seed);
}

Mask build_mask(const json& spec, const Grid2& grid, const fs::path& base_dir) {
  const std::string type = string_of(spec, "type", "mask");
  Mask m(grid);
  if (type == "none") {
    check_keys(spec, {"type"}, "mask");
  } else if (type == "rect" || type == "disk") {
    const bool rect = type == "rect";
    if (rect) {
      check_keys(spec, {"type", "lo", "hi"}, "mask");
    } else {
      check_keys(spec, {"type", "center", "radius"}, "mask");
    }
    const Eigen::Vector2d a = point(spec, rect ? "lo" : "center", "mask");
    const Eigen::Vector2d b = rect ? point(spec, "hi", "mask") : Eigen::Vector2d::Zero();
    const double radius = rect ? 0.0 : number(spec, "radius", "mask");
    for (int j = 0; j < grid.ny; ++j) {
      for (int i = 0; i < grid.nx; ++i) {
        const Eigen::Vector2d x = grid.center(i, j);
        const bool in = rect ? (x.x() > a.x() && x.x() < b.x() && x.y() > a.y() && x.y() < b.y())
                             : (x - a).norm() < radius;
        m.set(i, j, in);
      }
    }
  } else if (type == "pgm") {
    check_keys(spec, {"type", "path"}, "mask");
    const fs::path path = resolve(base_dir, string_of(spec, "path", "mask"));
    if (!fs::exists(path)) fail("input file does not exist: " + path.string());
    m = mask_from_pgm(read_pgm(path), grid);
  } else {
    fail("unknown mask type '" + type + "'");
  }
  m.validate();
  return m;
}

RunConfig parse_config(const json& doc, const fs::path& base_dir, std::optional<std::uint64_t> seed) {
  check_keys(doc, {"density", "certify", "grid", "problem", "solver", "moser", "minimality", "output", "seed"},
             "configuration");
  RunConfig cfg;
  cfg.source = doc;
  try {
    if (doc.contains("seed")) {
      if (!doc["seed"].is_number_unsigned()) fail("seed must be a non-negative integer");
      cfg.seed = doc["seed"].get<std::uint64_t>();
    }
    if (seed) cfg.seed = *seed;
    if (!doc.contains("density")) fail("configuration needs a 'density' section");
    cfg.density = profile_from_json(doc["density"]);
    if (doc.contains("certify")) {
      const json& c = doc["certify"];
      check_keys(c, {"t_max", "samples", "tolerance"}, "certify");
      cfg.certify.t_max = number_or(c, "t_max", cfg.certify.t_max, "certify");
      cfg.certify.samples = integer_or(c, "samples", cfg.certify.samples, "certify");
      cfg.certify.tolerance = number_or(c, "tolerance", cfg.certify.tolerance, "certify");
      if (!(cfg.certify.t_max > 0.0) || cfg.certify.samples < 100 || !(cfg.certify.tolerance >= 0.0)) {
        fail("certify needs t_max > 0, samples >= 100, tolerance >= 0");
      }
    }
    if (doc.contains("solver")) cfg.solver = parse_solver(doc["solver"]);
    if (doc.contains("problem") != doc.contains("grid")) fail("'grid' and 'problem' go together");
    if (doc.contains("grid")) {
      const json& g = doc["grid"];
      check_keys(g, {"nx", "ny", "h", "origin"}, "grid");
      const int nx = integer_or(g, "nx", 0, "grid");
      const int ny = integer_or(g, "ny", 0, "grid");
      const double h = number(g, "h", "grid");
      const Eigen::Vector2d origin = g.contains("origin") ? point(g, "origin", "grid") : Eigen::Vector2d::Zero();
      const Grid2 grid(nx, ny, h, origin);
      cfg.problem = parse_problem(doc["problem"], grid, cfg.density, base_dir, cfg.seed);
      cfg.solver.validate(*cfg.problem);
    }
    if (doc.contains("moser")) cfg.moser = parse_moser(doc["moser"]);
    if (doc.contains("minimality")) {
      const json& m = doc["minimality"];
      check_keys(m, {"trials", "amplitude"}, "minimality");
      cfg.minimality.trials = integer_or(m, "trials", cfg.minimality.trials, "minimality");
      cfg.minimality.amplitude = number_or(m, "amplitude", cfg.minimality.amplitude, "minimality");
      if (cfg.minimality.trials < 0 || !(cfg.minimality.amplitude >= 0.0)) fail("minimality settings must be >= 0");
    }
    if (doc.contains("output")) cfg.output = parse_output(doc["output"]);
  } catch (const ConfigError&) {
    throw;
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

RunConfig load_config(const fs::path& path, std::optional<std::uint64_t> seed) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  return parse_config(doc, path.parent_path(), seed);
}

ResolvedFamily resolve_family(const RunConfig& cfg) {
  if (!cfg.moser || !cfg.problem) fail("a moser section needs a problem");
  const MoserSettings& m = *cfg.moser;
  const Grid2& grid = problem_grid(*cfg.problem);
  ResolvedFamily out;
  out.family.center = m.center;
  out.family.n = m.n;
  out.family.j_max = m.j_max;
  const auto* fid = std::get_if<FidelityProblem>(&*cfg.problem);
  if (m.R0) {
    out.family.R0 = *m.R0;
    if (fid) out.epsilon0 = 1.0 / (16.0 * fid->lambda * fid->lambda);
  } else {
    if (!fid) fail("moser.R0 is required for dirichlet problems");
    const Eigen::Vector2d lo = grid.origin;
    const Eigen::Vector2d hi = grid.origin + Eigen::Vector2d(grid.width(), grid.height());
    if (!(m.center.x() > lo.x() && m.center.x() < hi.x() && m.center.y() > lo.y() && m.center.y() < hi.y())) {
      throw GeometryError("moser centre is not an interior point");
    }
    const RadiusChoice rc = select_radius(fid->f, fid->region, fid->lambda, m.center);
    out.family.R0 = rc.R0;
    out.epsilon0 = rc.epsilon0;
  }
  out.family.validate(grid);
  return out;
}

Ball interior_ball(const RunConfig& cfg) {
  const Grid2& g = problem_grid(*cfg.problem);
  if (cfg.moser) {
    try {
      return resolve_family(cfg).family.limit_ball();
    } catch (const std::exception&) {
      // fall through to the default ball
    }
  }
  const Eigen::Vector2d mid = g.origin + 0.5 * Eigen::Vector2d(g.width(), g.height());
  return Ball{mid, 0.25 * std::min(g.width(), g.height())};
}

int worker_threads() {
  if (const char* env = std::getenv("LINGROW_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(std::min(v, 256L));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

int run(Command command, const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  try {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) {
      log << "error: cannot create output directory " << out_dir.string() << "\n";
      return kExitBadInput;
    }
    switch (command) {
      case Command::DensityCheck:
        return cmd_density_check(cfg, out_dir, log);
      case Command::Solve:
        return cmd_solve(cfg, out_dir, log);
      case Command::Moser:
        return cmd_moser(cfg, out_dir, log);
      case Command::FullReport:
        return cmd_full_report(cfg, out_dir, log);
    }
  } catch (const GeometryError& e) {
    log << "geometry error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const ConfigError& e) {
    log << "configuration error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::domain_error& e) {
    log << "check failed: " << e.what() << "\n";
    return kExitCheckFailed;
  }
  return kExitBadInput;
}

}  // namespace lingrow::cli
