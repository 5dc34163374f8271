// dgec: mask generation, simulation, recovery and verification.
//
// Exit codes:
//   0  success
//   1  a verification or conformance check failed
//   2  command-line usage error
//   3  invalid configuration or arguments
//   4  missing or malformed input/output file
//   5  solver or numerical failure
//   6  external denoiser unreachable or misbehaving
//   7  unexpected internal error

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dgec/commands.hpp"
#include "dgec/suites.hpp"

namespace {

enum Exit : int {
  kOk = 0,
  kCheckFailed = 1,
  kUsage = 2,
  kConfig = 3,
  kIo = 4,
  kSolver = 5,
  kDenoiser = 6,
  kInternal = 7,
};

int report(const char* category, int code, const std::string& what) {
  std::cerr << "error[" << category << "]: " << what << "\n";
  return code;
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t trials = 1;
  std::string endpoint;
  std::vector<std::string> overrides;
  std::string suite;
  std::string fixture;
};

dgec::ExperimentConfig resolve_config(const Options& o) {
  dgec::ExperimentConfig cfg;
  if (!o.config.empty()) cfg = dgec::load_config(o.config);
  for (const std::string& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw dgec::ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
    dgec::apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seed = o.seed;
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (!o.endpoint.empty()) {
    cfg.endpoint = o.endpoint;
    cfg.denoiser = dgec::DenoiserKind::kExternal;
  }
  return cfg;
}

int run_verify(const Options& o) {
  const std::uint64_t seed = o.seed.value_or(1);
  bool ok = true;
  std::ofstream csv;
  if (!o.out.empty()) {
    std::filesystem::create_directories(o.out);
    csv.open(std::filesystem::path(o.out) / "verify.csv", std::ios::binary);
    dgec::write_csv_row(csv, {"id", "name", "passed", "seconds", "detail"});
  }
  dgec::run_suite(o.suite, seed, {}, [&](const dgec::CheckResult& r) {
    std::cout << dgec::format_result(r) << std::endl;
    ok = ok && r.passed;
    if (csv.is_open()) {
      dgec::write_csv_row(csv, {std::to_string(r.id), r.name, r.passed ? "1" : "0", dgec::csv_number(r.seconds),
                                "\"" + r.detail + "\""});
    }
  });
  std::cout << (ok ? "suite " + o.suite + ": PASS" : "suite " + o.suite + ": FAIL") << "\n";
  return ok ? kOk : kCheckFailed;
}

int run_denoise_test(const Options& o) {
  std::string endpoint = o.endpoint;
  if (endpoint.empty() && !o.config.empty()) endpoint = resolve_config(o).endpoint;
  if (endpoint.empty()) throw dgec::ConfigError("denoise-test needs --endpoint HOST:PORT or stdio:CMD");
  const dgec::ConformanceReport rep = dgec::cmd_denoise_test(endpoint, o.fixture);
  for (const auto& c : rep.checks) std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
  return rep.passed() ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wavelet-domain D-GEC reconstruction for undersampled MRI"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config, "Experiment configuration (key = value)")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Master seed (overrides the config)");
  app.add_option("--out", o.out, "Output directory (overrides the config)");
  app.add_option("--trials", o.trials, "Independent seeds run concurrently; CSVs merged in seed order")
      ->check(CLI::PositiveNumber);
  app.add_option("--endpoint", o.endpoint, "External denoiser, HOST:PORT or stdio:CMD");
  app.add_option("--set", o.overrides, "Override one config key, KEY=VALUE (repeatable)");

  auto* mask = app.add_subcommand("mask-gen", "Write a sampling mask (mask.msk)");
  auto* simulate = app.add_subcommand("simulate", "Write phantom, coils, mask and noisy k-space");
  auto* recover = app.add_subcommand("recover", "Reconstruct and write diagnostics.csv, summary.csv, recon.cim");
  auto* verify = app.add_subcommand("verify", "Run a verification suite");
  verify->add_option("suite", o.suite, "transforms | appendix | solver | all")
      ->required()
      ->check(CLI::IsMember(dgec::suite_names()));
  auto* dtest = app.add_subcommand("denoise-test", "Check an external denoiser for DNZ1 conformance");
  dtest->add_option("--fixture", o.fixture, "Request frame to use as the golden request")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*mask) {
      std::cout << dgec::cmd_mask_gen(resolve_config(o));
    } else if (*simulate) {
      std::cout << dgec::cmd_simulate(resolve_config(o));
    } else if (*recover) {
      const dgec::ExperimentConfig cfg = resolve_config(o);
      const dgec::RecoverReport rep = dgec::cmd_recover(cfg, o.trials);
      for (std::size_t k = 0; k < rep.runs.size(); ++k) {
        const auto& r = rep.runs[k];
        std::cout << dgec::algorithm_name(cfg.algorithm) << " seed " << rep.seeds[k] << ": " << r.rows.size()
                  << " iterations, psnr " << dgec::csv_number(r.psnr) << " dB (zero-filled "
                  << dgec::csv_number(r.zero_filled_psnr) << " dB), ssim " << dgec::csv_number(r.ssim) << "\n";
      }
    } else if (*verify) {
      return run_verify(o);
    } else if (*dtest) {
      return run_denoise_test(o);
    }
    return kOk;
  } catch (const dgec::ConfigError& e) {
    return report("config", kConfig, e.what());
  } catch (const dgec::FormatError& e) {
    return report("io", kIo, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return report("io", kIo, e.what());
  } catch (const dgec::TransportError& e) {
    return report("denoiser", kDenoiser, e.what());
  } catch (const dgec::TimeoutError& e) {
    return report("denoiser", kDenoiser, e.what());
  } catch (const dgec::ProtocolError& e) {
    return report("denoiser", kDenoiser, e.what());
  } catch (const dgec::RemoteShapeError& e) {
    return report("denoiser", kDenoiser, e.what());
  } catch (const dgec::RemoteInternalError& e) {
    return report("denoiser", kDenoiser, e.what());
  } catch (const dgec::NumericalError& e) {
    return report("solver", kSolver, e.what());
  } catch (const dgec::ArgumentError& e) {
    return report("config", kConfig, e.what());
  } catch (const dgec::ShapeError& e) {
    return report("config", kConfig, e.what());
  } catch (const std::exception& e) {
    return report("internal", kInternal, e.what());
  }
}
