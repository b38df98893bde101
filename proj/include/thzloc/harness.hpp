#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "thzloc/cdl.hpp"
#include "thzloc/channel.hpp"
#include "thzloc/pdl.hpp"
#include "thzloc/sounding.hpp"

namespace thzloc {

struct ExperimentConfig {
  std::string profile = "paper";

  // Scene.
  double bs_x = -10.0 * std::sqrt(2.0);
  double bs_y = 0.0;
  double ris_x = 10.0 * std::sqrt(2.0);
  double ris_y = 0.0;
  double bs_orientation = kPi / 4.0;
  double ris_orientation = kPi / 4.0;
  std::string ue_mode = "random";  // random | fixed
  double ue_x = 5.96;
  double ue_y = -10.1;
  double sector_radius = 100.0;
  std::size_t clusters_bs = 3;
  std::size_t clusters_ris = 3;
  std::size_t paths_per_cluster = 6;
  double scattering_area = 3.0;

  // Arrays and grid.
  std::size_t n_bs = 256;
  std::size_t n_ris = 256;
  std::size_t n_rf = 4;
  double fc = 100e9;
  double bandwidth = 10e9;
  std::size_t subcarriers = 2048;
  std::size_t decimation = 32;

  // Sounding.
  std::size_t p_nris_cdl = 16;
  std::size_t p_ris_cdl = 32;
  std::size_t p_nris_pdl = 8;
  std::size_t p_ris_pdl = 16;
  std::string ris_combiner = "spread";  // center | spread
  std::string ris_phase_policy = "per-trial";  // per-trial | fixed
  double power_dbm = 30.0;
  double noise_density_dbm_hz = -174.0;

  // Dictionaries and algorithms.
  std::size_t rings = 10;
  std::size_t redundancy = 2;
  double hbar = 0.1;
  std::size_t omp_n_select = 6;
  double omp_stop_ratio = 0.85;
  std::size_t omp_max_iters = 20;
  std::size_t pgd_max_iters = 20;
  double pgd_stop_step = 1e-7;
  std::size_t phd_candidates = 41;
  double phd_stop_span = 2e-5;
  std::string gain_mode = "ls";  // ls | friis
  std::size_t pdl_rays = 64;
  std::size_t pdl_levels = 3;
  std::size_t pdl_zoom = 10;

  // What to run.
  bool run_ce = true;
  bool run_cdl = true;
  bool run_pdl = true;

  // Sweep.
  std::string sweep_axis = "power";  // power | n_bs | n_ris | bandwidth
  std::vector<double> sweep_values{30.0};
  std::size_t trials = 1;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  bool record_timing = false;

  void validate() const;
  OmpConfig omp() const;
  // Copy with the sweep value at index i applied.
  ExperimentConfig at_sweep(std::size_t i) const;
};

ExperimentConfig desk_profile();
ExperimentConfig paper_profile();
ExperimentConfig profile_by_name(const std::string& name);

// key = value lines; '#' starts a comment. Unknown keys throw ConfigError.
void apply_config_text(ExperimentConfig& cfg, const std::string& text);
void apply_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
ExperimentConfig load_config(const std::string& path, const ExperimentConfig& base);
std::string config_to_text(const ExperimentConfig& cfg);

// Metric columns of a trial, in output order. NaN marks a value that was not produced.
const std::vector<std::string>& metric_names();
// Per-trial PDL internals (delays, hyperbola, branch), written but not summarized.
const std::vector<std::string>& diagnostic_names();

struct TrialRecord {
  std::size_t sweep_index = 0;
  double sweep_value = 0.0;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  double ue_x = 0.0;
  double ue_y = 0.0;
  std::map<std::string, double> metrics;
  std::string failure;  // empty when every stage ran
  double seconds = 0.0;

  double metric(const std::string& name) const;
};

// Immutable per-sweep-point state shared by every trial of that point.
class ExperimentContext {
 public:
  explicit ExperimentContext(const ExperimentConfig& cfg);

  const ExperimentConfig& config() const { return cfg_; }
  const ArrayGeometry& bs() const { return bs_; }
  const ArrayGeometry& ris() const { return ris_; }
  const SubcarrierGrid& full_grid() const { return full_; }
  const SubcarrierGrid& ce_grid() const { return ce_; }
  const SceneConfig& scene_config() const { return scene_; }
  const PolarDictionary& fsprd_bs() const { return *fsprd_bs_; }
  const PolarDictionary& fsprd_ris() const { return *fsprd_ris_; }
  const PolarDictionary& ptm_bs() const { return *ptm_bs_; }
  const PolarDictionary& ptm_ris() const { return *ptm_ris_; }
  const BsRisChannel& h_br() const { return *h_br_; }
  const BsRisChannel& h_br_full() const { return *h_br_full_; }
  const CMatrixSeq& w_ris_cdl() const { return w_ris_cdl_; }
  const CMatrixSeq& w_ris_pdl() const { return w_ris_pdl_; }

  OmpConfig omp() const;
  CdlConfig cdl() const;
  PdlConfig pdl() const;

 private:
  ExperimentConfig cfg_;
  ArrayGeometry bs_;
  ArrayGeometry ris_;
  SubcarrierGrid full_;
  SubcarrierGrid ce_;
  SceneConfig scene_;
  std::optional<PolarDictionary> fsprd_bs_;
  std::optional<PolarDictionary> fsprd_ris_;
  std::optional<PolarDictionary> ptm_bs_;
  std::optional<PolarDictionary> ptm_ris_;
  std::optional<BsRisChannel> h_br_;
  std::optional<BsRisChannel> h_br_full_;
  CMatrixSeq w_ris_cdl_;
  CMatrixSeq w_ris_pdl_;
};

std::uint64_t trial_seed(std::uint64_t master, std::size_t sweep_index, std::size_t trial);

// power_dbm overrides the context's transmit power, so one context can serve a power sweep.
TrialRecord run_trial(const ExperimentContext& ctx, std::size_t sweep_index, double sweep_value,
                      std::size_t trial, std::optional<double> power_dbm = std::nullopt);

// Every (sweep point, trial) record in (sweep, trial) order, whatever the worker count.
std::vector<TrialRecord> run_experiment(const ExperimentConfig& cfg);

void write_csv(std::ostream& os, const std::vector<TrialRecord>& records, bool timing);
void write_json(std::ostream& os, const std::vector<TrialRecord>& records, bool timing);

struct MetricSummary {
  std::string metric;
  std::size_t samples = 0;
  std::optional<double> value;  // RMSE for errors, dB of the linear mean for NMSE
};

struct CdfPoint {
  double value = 0.0;
  double quantile = 0.0;
};

struct PointSummary {
  std::size_t sweep_index = 0;
  double sweep_value = 0.0;
  std::vector<MetricSummary> metrics;

  std::optional<double> get(const std::string& metric) const;
};

double rmse(const std::vector<double>& errors);
// 10 log10 of the mean of the linear values.
double mean_nmse_db(const std::vector<double>& nmse_db_values);
std::vector<CdfPoint> empirical_cdf(std::vector<double> samples);

std::vector<PointSummary> summarize(const std::vector<TrialRecord>& records);
void write_summary_csv(std::ostream& os, const std::vector<PointSummary>& summary);
// Empirical CDF of |value| per sweep point for each listed metric.
void write_cdf_csv(std::ostream& os, const std::vector<TrialRecord>& records,
                   const std::vector<std::string>& metrics);

}  // namespace thzloc
