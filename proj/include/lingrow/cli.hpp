#pragma once

// Batch driver: JSON run configuration, field and mask sources, and the
// density-check / solve / moser / full-report commands.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lingrow/io.hpp"
#include "lingrow/moser.hpp"
#include "lingrow/solver.hpp"

namespace lingrow::cli {

/// Malformed or inadmissible configuration; maps to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Command { DensityCheck, Solve, Moser, FullReport };

std::optional<Command> parse_command(std::string_view name);
std::string_view command_name(Command c);

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitBadInput = 2;

struct CertifySettings {
  double t_max = 100.0;
  int samples = 1000;
  double tolerance = 1e-10;
};

struct MoserSettings {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  std::optional<double> R0;  // unset: chosen by select_radius (fidelity only)
  int n = 2;
  int j_max = 6;
  std::vector<double> s_values = {0.0, 1.0, 3.0};
};

struct MinimalitySettings {
  int trials = 100;
  double amplitude = 0.1;
};

struct OutputSettings {
  PgmEncoding encoding = PgmEncoding::Binary;
  int maxval = 65535;
  std::optional<double> lo;  // PGM range; unset: min/max over the trace
  std::optional<double> hi;
  bool csv_fields = true;    // per-delta full-precision CSV next to each PGM
};

struct RunConfig {
  RadialProfile density = RadialProfile::minimal_surface();
  CertifySettings certify;
  std::optional<Problem> problem;
  SolverConfig solver;
  std::optional<MoserSettings> moser;
  MinimalitySettings minimality;
  OutputSettings output;
  std::uint64_t seed = 0;
  nlohmann::json source;  // the configuration as read
};

/// Relative paths inside the document resolve against base_dir. A given
/// seed overrides the "seed" entry. Throws ConfigError.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                       std::optional<std::uint64_t> seed = std::nullopt);
RunConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed = std::nullopt);

/// Evaluates a field source on `grid`. Sources: constant, affine, spike,
/// uniform, sum, pgm, csv; any of them may add seeded Gaussian "noise".
Field build_field(const nlohmann::json& spec, const Grid2& grid, int channels,
                  const std::filesystem::path& base_dir, std::uint64_t seed);
/// Mask sources: none, rect, disk, pgm.
Mask build_mask(const nlohmann::json& spec, const Grid2& grid, const std::filesystem::path& base_dir);

/// The ball family of the moser section; R0 from select_radius when unset.
/// Throws GeometryError for inadmissible balls.
struct ResolvedFamily {
  BallFamily family;
  std::optional<double> epsilon0;
};
ResolvedFamily resolve_family(const RunConfig& cfg);

/// B_inf of the configured family, else the ball of radius min(width,
/// height)/4 about the domain centre.
Ball interior_ball(const RunConfig& cfg);

/// Runs one command, writing artifacts below out_dir and progress lines to
/// log. Returns the process exit code.
int run(Command command, const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

/// Number of worker threads for per-delta analyses: LINGROW_THREADS when
/// set to a positive integer, else the hardware concurrency.
int worker_threads();

}  // namespace lingrow::cli
