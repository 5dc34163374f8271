#pragma once

// Command implementations behind the dgec tool. Each writes its files under
// cfg.out_dir and returns a short human-readable report.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dgec/experiment.hpp"

namespace dgec {

inline std::uint64_t require_seed(const ExperimentConfig& cfg) {
  if (!cfg.seed) throw ConfigError("a seed is required (config key 'seed' or --seed)");
  return *cfg.seed;
}

/// Seed of trial k: the master seed itself for a single trial, derived seeds otherwise.
inline std::vector<std::uint64_t> trial_seeds(std::uint64_t master, std::size_t trials) {
  if (trials == 0) throw ArgumentError("trials must be at least 1");
  if (trials == 1) return {master};
  std::vector<std::uint64_t> out;
  for (std::size_t k = 0; k < trials; ++k) out.push_back(derive_seed(master, Stream::kTrial, {k}));
  return out;
}

/// Runs fn(k) for k in [0, n) on up to `workers` threads; results stay in index order.
template <class T, class Fn>
std::vector<T> run_indexed(std::size_t n, std::size_t workers, Fn&& fn) {
  std::vector<T> out(n);
  std::vector<std::exception_ptr> errors(n);
  workers = std::max<std::size_t>(1, std::min(workers, n));
  std::size_t next = 0;
  std::mutex m;
  auto worker = [&] {
    for (;;) {
      std::size_t k;
      {
        std::lock_guard<std::mutex> lock(m);
        if (next >= n) return;
        k = next++;
      }
      try {
        out[k] = fn(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

inline std::string cmd_mask_gen(const ExperimentConfig& cfg) {
  cfg.validate();
  const SamplingMask mask = make_mask(cfg, require_seed(cfg));
  std::filesystem::create_directories(cfg.out_dir);
  save_msk1(cfg.out_dir / "mask.msk", mask);
  std::ostringstream os;
  os << "mask.msk: " << mask.height << "x" << mask.width << " " << mask_kind_name(mask.kind) << " R="
     << mask.acceleration.num << "/" << mask.acceleration.den << " samples=" << mask.count() << "\n";
  return os.str();
}

inline std::string cmd_simulate(const ExperimentConfig& cfg) {
  const Problem p = build_problem(cfg, require_seed(cfg));
  save_problem(p, cfg.out_dir);
  std::ostringstream os;
  os << "simulated " << p.fm->height() << "x" << p.fm->width() << " coils=" << p.fm->coils.coils()
     << " samples/coil=" << p.fm->samples_per_coil() << " gamma_w=" << csv_number(p.meas.gamma_w) << " into "
     << cfg.out_dir.string() << "\n";
  return os.str();
}

struct RecoverReport {
  std::vector<std::uint64_t> seeds;
  std::vector<RunOutput> runs;
};

/// Runs `trials` independent recoveries (concurrently when the solver is
/// single-threaded) and writes diagnostics.csv, summary.csv and recon*.cim.
inline RecoverReport cmd_recover(const ExperimentConfig& cfg, std::size_t trials = 1) {
  cfg.validate();
  RecoverReport rep;
  rep.seeds = trial_seeds(require_seed(cfg), trials);
  std::optional<Problem> loaded;
  if (!cfg.input_dir.empty()) loaded = load_problem(cfg);
  const std::size_t workers = cfg.solver.threads > 1 ? 1 : std::max(1u, std::thread::hardware_concurrency());
  rep.runs = run_indexed<RunOutput>(trials, workers, [&](std::size_t k) {
    const Problem p = loaded ? *loaded : build_problem(cfg, rep.seeds[k]);
    return run_algorithm(cfg, p, rep.seeds[k]);
  });

  std::filesystem::create_directories(cfg.out_dir);
  const std::optional<std::size_t> no_trial;
  {
    std::ofstream os(cfg.out_dir / "diagnostics.csv", std::ios::binary);
    for (std::size_t k = 0; k < trials; ++k) {
      write_diagnostics_csv(os, rep.runs[k], trials > 1 ? std::optional<std::size_t>(k) : no_trial, k == 0);
    }
    if (!os) throw FormatError("cannot write diagnostics.csv");
  }
  {
    std::ofstream os(cfg.out_dir / "summary.csv", std::ios::binary);
    write_csv_row(os, {"trial", "seed", "algorithm", "iterations", "converged", "psnr", "ssim", "zero_filled_psnr"});
    for (std::size_t k = 0; k < trials; ++k) {
      const RunOutput& r = rep.runs[k];
      write_csv_row(os, {std::to_string(k), std::to_string(rep.seeds[k]), algorithm_name(cfg.algorithm),
                         std::to_string(r.rows.size()), r.converged ? "1" : "0", csv_number(r.psnr), csv_number(r.ssim),
                         csv_number(r.zero_filled_psnr)});
    }
    if (!os) throw FormatError("cannot write summary.csv");
  }
  for (std::size_t k = 0; k < trials; ++k) {
    const std::string name = trials == 1 ? std::string("recon.cim") : indexed_name("recon", k);
    save_cim1(cfg.out_dir / name, rep.runs[k].image);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Denoiser protocol conformance

struct ConformanceCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ConformanceReport {
  std::vector<ConformanceCheck> checks;
  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const ConformanceCheck& c) { return c.passed; });
  }
};

/// A small well-formed request: 16x16, K = 2, one subband, fixed contents.
inline std::vector<std::uint8_t> sample_request_frame(std::uint64_t seed = 1) {
  DenoiseRequest req;
  req.height = 16;
  req.width = 16;
  req.gammas = {4.0};
  Rng rng(seed);
  req.u = complex_gaussian(256, 1.0, rng);
  req.noise = {complex_gaussian(256, 0.25, rng), complex_gaussian(256, 0.25, rng)};
  return encode_request(req);
}

/// Sends one golden request (from `fixture` when given), then malformed
/// frames, then the golden request again on the same connection.
inline ConformanceReport cmd_denoise_test(const std::string& endpoint, const std::filesystem::path& fixture = {},
                                          int timeout_ms = 10000) {
  ConformanceReport rep;
  const std::vector<std::uint8_t> golden = fixture.empty() ? sample_request_frame() : read_bytes(fixture);
  const DnzHeader gh = decode_header(golden.data(), golden.size());
  if (!gh.magic_ok()) throw FormatError("fixture is not a DNZ1 request");
  const std::size_t pixels = gh.pixels();
  DenoiserClient client(Endpoint::parse(endpoint), timeout_ms);

  auto check_ok = [&](const std::string& name) {
    ConformanceCheck c{name, false, ""};
    try {
      const auto resp = client.roundtrip(golden, pixels);
      const bool header = resp.size() >= 5 && std::memcmp(resp.data(), "DNZ1", 4) == 0 && resp[4] == 0;
      bool finite = header && resp.size() == 5 + pixels * 8;
      if (finite) {
        wire::Reader rd(resp.data() + 5, resp.size() - 5);
        finite = wire::get_image_payload(rd, pixels).allFinite();
      }
      c.passed = header && finite;
      c.detail = !header ? "status " + std::to_string(resp.size() >= 5 ? resp[4] : -1) : (finite ? "ok" : "bad payload");
    } catch (const std::exception& e) {
      c.detail = e.what();
    }
    rep.checks.push_back(c);
  };
  auto check_status1 = [&](const std::string& name, const std::vector<std::uint8_t>& frame) {
    ConformanceCheck c{name, false, ""};
    try {
      const auto resp = client.roundtrip(frame, 0);
      c.passed = resp.size() == 5 && std::memcmp(resp.data(), "DNZ1", 4) == 0 && resp[4] == 1;
      c.detail = "status " + std::to_string(resp[4]);
    } catch (const std::exception& e) {
      c.detail = e.what();
    }
    rep.checks.push_back(c);
  };

  check_ok("golden request");
  std::vector<std::uint8_t> bad_magic(kDnzHeaderSize, 0);
  std::memcpy(bad_magic.data(), "XNZ1", 4);
  check_status1("bad magic", bad_magic);
  // Header-only frames: zero dimensions with no announced body, and an
  // unknown op (whose body a server cannot size, so none is sent).
  std::vector<std::uint8_t> zero_dims(golden.begin(), golden.begin() + kDnzHeaderSize);
  std::fill(zero_dims.begin() + 5, zero_dims.end(), 0);
  check_status1("zero dimensions", zero_dims);
  std::vector<std::uint8_t> bad_op(golden.begin(), golden.begin() + kDnzHeaderSize);
  bad_op[4] = 0x7f;
  check_status1("unknown op", bad_op);
  check_ok("golden request after errors");
  return rep;
}

}  // namespace dgec
