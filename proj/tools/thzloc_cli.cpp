#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "oracles/checks.hpp"
#include "thzloc/geometry.hpp"
#include "thzloc/harness.hpp"

namespace {

struct RunOptions {
  std::string config;
  std::string profile = "paper";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> trials;
  std::string out;
  std::string format = "csv";
  std::string summary;
  std::string cdf;
  bool timing = false;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config, "key = value config file applied over the profile");
  cmd->add_option("--profile", o.profile, "base profile")->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--workers", o.workers, "concurrent trials");
  cmd->add_option("--trials", o.trials, "trials per sweep point");
  cmd->add_option("--out", o.out, "record file (stdout when omitted)");
  cmd->add_option("--format", o.format, "record format")->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--summary", o.summary, "per-point RMSE / NMSE table (csv)");
  cmd->add_option("--cdf", o.cdf, "empirical CDFs of the position errors (csv)");
  cmd->add_flag("--timing", o.timing, "add per-trial wall time to the records");
}

thzloc::ExperimentConfig build_config(const RunOptions& o) {
  thzloc::ExperimentConfig cfg = thzloc::profile_by_name(o.profile);
  if (!o.config.empty()) cfg = thzloc::load_config(o.config, cfg);
  if (o.seed) cfg.seed = *o.seed;
  if (o.workers) cfg.workers = *o.workers;
  if (o.trials) cfg.trials = *o.trials;
  if (o.timing) cfg.record_timing = true;
  return cfg;
}

void write_records(const RunOptions& o, const std::vector<thzloc::TrialRecord>& records,
                   bool timing) {
  std::ofstream file;
  if (!o.out.empty()) {
    file.open(o.out, std::ios::binary);
    if (!file) throw thzloc::ConfigError("cannot open " + o.out);
  }
  std::ostream& os = o.out.empty() ? std::cout : file;
  if (o.format == "json") {
    thzloc::write_json(os, records, timing);
  } else {
    thzloc::write_csv(os, records, timing);
  }
  if (!o.summary.empty()) {
    std::ofstream s(o.summary, std::ios::binary);
    thzloc::write_summary_csv(s, thzloc::summarize(records));
  }
  if (!o.cdf.empty()) {
    std::ofstream c(o.cdf, std::ios::binary);
    thzloc::write_cdf_csv(c, records, {"cdl_pos", "cdl_pos_coarse", "pdl_pos"});
  }
}

int run(const RunOptions& o, bool ce, bool cdl, bool pdl) {
  thzloc::ExperimentConfig cfg = build_config(o);
  cfg.run_ce = ce;
  cfg.run_cdl = cdl;
  cfg.run_pdl = pdl;
  write_records(o, thzloc::run_experiment(cfg), cfg.record_timing);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Near-field THz channel estimation and localization simulator"};
  app.require_subcommand(1);

  std::size_t n = 256;
  double fc = 100e9, bandwidth = 10e9, theta = 0.5, hbar = 0.1;
  std::size_t subcarriers = 2048;

  auto* rayleigh = app.add_subcommand("rayleigh", "classical and effective Rayleigh distances");
  rayleigh->add_option("--n", n, "array elements (half-wavelength spacing)");
  rayleigh->add_option("--fc", fc, "carrier frequency in Hz");
  rayleigh->add_option("--theta", theta, "sine-angle");
  rayleigh->add_option("--hbar", hbar, "beamforming-loss threshold");

  auto* squint = app.add_subcommand("squint", "apparent-angle spread across the band");
  squint->add_option("--n", n, "array elements");
  squint->add_option("--fc", fc, "center frequency in Hz");
  squint->add_option("--bandwidth", bandwidth, "bandwidth in Hz");
  squint->add_option("--subcarriers", subcarriers, "subcarrier count");
  squint->add_option("--theta", theta, "sine-angle at the center frequency");

  RunOptions opts;
  auto* run_ce = app.add_subcommand("run-ce", "channel estimation only");
  auto* run_cdl = app.add_subcommand("run-cdl", "complete-dictionary localization with estimation");
  auto* run_pdl = app.add_subcommand("run-pdl", "partial-dictionary localization only");
  auto* sweep = app.add_subcommand("sweep", "every estimator and localizer over the sweep");
  for (CLI::App* cmd : {run_ce, run_cdl, run_pdl, sweep}) add_run_options(cmd, opts);

  bool monte_carlo = false;
  std::string only_module;
  auto* oracle = app.add_subcommand("oracle-check", "library results against independent oracles");
  oracle->add_flag("--monte-carlo", monte_carlo, "include the slow statistical checks");
  oracle->add_option("--module", only_module, "restrict to one module");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*rayleigh) {
      // Zero bandwidth puts the single subcarrier exactly on fc.
      const thzloc::SubcarrierGrid grid(fc, 0.0, 1);
      const thzloc::ArrayGeometry array(n, thzloc::half_wavelength(grid), 0.0, thzloc::Point2::Zero());
      const double classical = thzloc::classical_rayleigh(array.aperture(), grid.center_wavelength());
      const thzloc::EffectiveRayleigh eff = thzloc::effective_rayleigh(array, grid, 0, theta, hbar);
      std::printf("aperture_m %.6f\nclassical_m %.6f\neffective_m %.6f\nepsilon %.6f\n",
                  array.aperture(), classical, eff.distance, eff.epsilon);
      return 0;
    }
    if (*squint) {
      const thzloc::SubcarrierGrid grid(fc, bandwidth, subcarriers);
      const double spread = thzloc::squint_spread(grid, theta);
      std::printf("f_low_hz %.6e\nf_high_hz %.6e\nspread %.6f\nresolution %.6f\nbins %.4f\n",
                  grid.frequency(0), grid.frequency(grid.size() - 1), spread,
                  1.0 / static_cast<double>(n), spread * static_cast<double>(n));
      return 0;
    }
    if (*run_ce) return run(opts, true, false, false);
    if (*run_cdl) return run(opts, true, true, false);
    if (*run_pdl) return run(opts, false, false, true);
    if (*sweep) return run(opts, true, true, true);
    if (*oracle) {
      int failed = 0;
      for (const auto& c : thzloc::oracle::derived_checks()) {
        if (c.monte_carlo && !monte_carlo) continue;
        if (!only_module.empty() && c.module != only_module) continue;
        thzloc::oracle::Outcome r;
        try {
          r = c.run();
        } catch (const std::exception& e) {
          r = {false, std::string("threw: ") + e.what()};
        }
        std::printf("%s [%s] %s: %s\n", r.pass ? "PASS" : "FAIL", c.module.c_str(), c.name.c_str(),
                    r.detail.c_str());
        std::fflush(stdout);
        if (!r.pass) ++failed;
      }
      return failed == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
