#pragma once

// Flat key = value experiment configuration.
//
//   seed = 7
//   phantom = shepp_logan
//   height = 128
//   width = 128
//   mask = point2d
//   acceleration = 4
//   snr_db = 40          # "inf" for noiseless
//   algorithm = dgec
//
// Lines starting with '#' or ';' are comments. Unknown keys are an error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <cctype>
#include <set>
#include <sstream>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "dgec/forward_model.hpp"
#include "dgec/gec.hpp"

namespace dgec {

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class Algorithm { kDgec, kEc, kAmp, kPnpPgd, kPrAdmm };

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "dgec") return Algorithm::kDgec;
  if (s == "ec") return Algorithm::kEc;
  if (s == "amp") return Algorithm::kAmp;
  if (s == "pnp_pgd") return Algorithm::kPnpPgd;
  if (s == "pr_admm") return Algorithm::kPrAdmm;
  throw ArgumentError("unknown algorithm '" + s + "' (expected dgec, ec, amp, pnp_pgd or pr_admm)");
}

inline const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kDgec: return "dgec";
    case Algorithm::kEc: return "ec";
    case Algorithm::kAmp: return "amp";
    case Algorithm::kPnpPgd: return "pnp_pgd";
    case Algorithm::kPrAdmm: return "pr_admm";
  }
  return "?";
}

enum class DenoiserKind { kSoftThreshold, kExternal };

struct ExperimentConfig {
  std::optional<std::uint64_t> seed;  // mandatory before running; may come from --seed

  // problem
  PhantomKind phantom = PhantomKind::kSheppLogan;
  std::size_t height = 128;
  std::size_t width = 128;
  std::size_t coils = 1;
  double coil_smoothness = 0.6;
  double coil_support = 0.0;  // ellipse semi-axis fraction; 0 = whole grid
  MaskKind mask = MaskKind::kPoint2d;
  double acceleration = 4.0;
  std::optional<double> density_exponent;  // default 8 (point) or 4 (line)
  std::size_t calib_size = 16;
  double snr_db = 40.0;

  // solver
  Algorithm algorithm = Algorithm::kDgec;
  SolverConfig solver{.init_mode = InitMode::kBhyPlusNoise};
  std::size_t calibration_samples = 8;
  PhantomKind calibration_phantom = PhantomKind::kPiecewiseSmooth;

  // denoiser
  DenoiserKind denoiser = DenoiserKind::kSoftThreshold;
  double lambda = 1.0;
  std::string endpoint;
  int noise_channels = 1;
  int endpoint_timeout_ms = 30000;

  // baselines
  double amp_beta_scale = 1.0;
  double pgd_step = 1.0;
  double admm_penalty = 1.0;
  double baseline_threshold = 0.02;

  // io
  std::filesystem::path input_dir;  // from cmd_simulate; empty = simulate in memory
  std::filesystem::path out_dir = "out";

  double mask_density_exponent() const { return density_exponent.value_or(mask == MaskKind::kPoint2d ? 8.0 : 4.0); }

  void validate() const {
    if (height == 0 || width == 0) throw ArgumentError("height and width must be positive");
    if (coils == 0) throw ArgumentError("coils must be at least 1");
    if (!(acceleration >= 1.0)) throw ArgumentError("acceleration must be >= 1");
    if (std::isnan(snr_db)) throw ArgumentError("snr_db must be a number or inf");
    if (!(lambda >= 0.0)) throw ArgumentError("lambda must be nonnegative");
    if (noise_channels < 1 || noise_channels > 255) throw ArgumentError("noise_channels must lie in [1, 255]");
    if (denoiser == DenoiserKind::kExternal && endpoint.empty()) {
      throw ArgumentError("denoiser = external needs an endpoint");
    }
    if (!(pgd_step >= 0.0) || !(admm_penalty > 0.0) || !(baseline_threshold >= 0.0) || !(amp_beta_scale > 0.0)) {
      throw ArgumentError("baseline parameters out of range");
    }
    if (solver.init_mode == InitMode::kBhyPlusNoise && calibration_samples == 0) {
      throw ArgumentError("init_mode = bhy_plus_noise needs calibration_samples >= 1");
    }
    const std::size_t block = std::size_t{1} << solver.depth;
    if (height % block != 0 || width % block != 0) {
      throw ShapeError("height and width must be divisible by 2^depth = " + std::to_string(block));
    }
    solver.validate();
  }
};

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (in.fail() || !(in >> std::ws).eof()) throw ConfigError("key '" + key + "': cannot parse '" + text + "'");
  return v;
}

inline double parse_real(const std::string& key, const std::string& text) {
  if (text == "inf" || text == "+inf" || text == "infinity") return std::numeric_limits<double>::infinity();
  return parse_number<double>(key, text);
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + text + "'");
}

}  // namespace detail

/// Applies one key = value pair. Throws ConfigError for unknown keys or bad values.
inline void apply_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_number;
  using detail::parse_real;
  auto enum_value = [&](auto parser) {
    try {
      return parser(value);
    } catch (const ArgumentError& e) {
      throw ConfigError("key '" + key + "': " + e.what());
    }
  };
  SolverConfig& s = cfg.solver;
  if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "phantom") cfg.phantom = enum_value(parse_phantom_kind);
  else if (key == "height") cfg.height = parse_number<std::size_t>(key, value);
  else if (key == "width") cfg.width = parse_number<std::size_t>(key, value);
  else if (key == "coils") cfg.coils = parse_number<std::size_t>(key, value);
  else if (key == "coil_smoothness") cfg.coil_smoothness = parse_real(key, value);
  else if (key == "coil_support") cfg.coil_support = parse_real(key, value);
  else if (key == "mask") cfg.mask = enum_value(parse_mask_kind);
  else if (key == "acceleration") cfg.acceleration = parse_real(key, value);
  else if (key == "density_exponent") cfg.density_exponent = parse_real(key, value);
  else if (key == "calib_size") cfg.calib_size = parse_number<std::size_t>(key, value);
  else if (key == "snr_db") cfg.snr_db = parse_real(key, value);
  else if (key == "algorithm") cfg.algorithm = enum_value(parse_algorithm);
  else if (key == "max_iters") s.max_iters = parse_number<int>(key, value);
  else if (key == "cg_iters") s.cg_iters = parse_number<int>(key, value);
  else if (key == "damping_rho") s.damping_rho = parse_real(key, value);
  else if (key == "depth") s.depth = parse_number<int>(key, value);
  else if (key == "clip_low") s.clip_low = parse_real(key, value);
  else if (key == "clip_high") s.clip_high = parse_real(key, value);
  else if (key == "init_mode") s.init_mode = enum_value(parse_init_mode);
  else if (key == "init_inflation") s.init_inflation = parse_real(key, value);
  else if (key == "tolerance") s.tolerance = parse_real(key, value);
  else if (key == "f1_trace") s.f1_trace = enum_value(parse_trace_mode);
  else if (key == "f2_divergence") s.f2_divergence = enum_value(parse_divergence_mode);
  else if (key == "threads") s.threads = parse_number<int>(key, value);
  else if (key == "auto_tune") s.auto_tune = parse_bool(key, value);
  else if (key == "calibration_samples") cfg.calibration_samples = parse_number<std::size_t>(key, value);
  else if (key == "calibration_phantom") cfg.calibration_phantom = enum_value(parse_phantom_kind);
  else if (key == "denoiser") {
    if (value == "soft_threshold") cfg.denoiser = DenoiserKind::kSoftThreshold;
    else if (value == "external") cfg.denoiser = DenoiserKind::kExternal;
    else throw ConfigError("key 'denoiser': expected soft_threshold or external, got '" + value + "'");
  }
  else if (key == "lambda") cfg.lambda = parse_real(key, value);
  else if (key == "endpoint") cfg.endpoint = value;
  else if (key == "noise_channels") cfg.noise_channels = parse_number<int>(key, value);
  else if (key == "endpoint_timeout_ms") cfg.endpoint_timeout_ms = parse_number<int>(key, value);
  else if (key == "amp_beta_scale") cfg.amp_beta_scale = parse_real(key, value);
  else if (key == "pgd_step") cfg.pgd_step = parse_real(key, value);
  else if (key == "admm_penalty") cfg.admm_penalty = parse_real(key, value);
  else if (key == "baseline_threshold") cfg.baseline_threshold = parse_real(key, value);
  else if (key == "input_dir") cfg.input_dir = value;
  else if (key == "out_dir") cfg.out_dir = value;
  else throw ConfigError("unknown key '" + key + "'");
}

inline ExperimentConfig parse_config(std::istream& in, ExperimentConfig cfg = {}) {
  // Trailing "  # note" comments are dropped here; the ini reader keeps them.
  std::ostringstream cleaned;
  for (std::string line; std::getline(in, line);) {
    for (std::size_t i = 1; i < line.size(); ++i) {
      if ((line[i] == '#' || line[i] == ';') && std::isspace(static_cast<unsigned char>(line[i - 1]))) {
        line.erase(i);
        break;
      }
    }
    cleaned << line << '\n';
  }
  std::istringstream src(cleaned.str());
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(src, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  for (const auto& [key, node] : tree) {
    if (!node.empty()) throw ConfigError("sections are not supported (found [" + key + "])");
    apply_config_value(cfg, key, node.data());
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in);
}

}  // namespace dgec
