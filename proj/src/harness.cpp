#include "thzloc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "thzloc/rng.hpp"

namespace thzloc {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kFullChannelCacheBytes = 512.0 * 1024.0 * 1024.0;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": '" + v + "'");
  }
  if (used != v.size()) throw ConfigError("bad number for " + key + ": '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad flag for " + key + ": '" + v + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  return out;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

std::string join_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_number(v[i]);
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

template <typename T>
Field field(T ExperimentConfig::*member) {
  Field f;
  if constexpr (std::is_same_v<T, double>) {
    f.set = [member](ExperimentConfig& c, const std::string& v) { c.*member = parse_double("", v); };
    f.get = [member](const ExperimentConfig& c) { return format_number(c.*member); };
  } else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
    f.set = [member](ExperimentConfig& c, const std::string& v) {
      std::size_t used = 0;
      unsigned long long x = 0;
      try {
        x = std::stoull(v, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != v.size() || v.front() == '-') {
        throw ConfigError("expected a nonnegative integer, got '" + v + "'");
      }
      c.*member = static_cast<T>(x);
    };
    f.get = [member](const ExperimentConfig& c) { return std::to_string(c.*member); };
  } else if constexpr (std::is_same_v<T, bool>) {
    f.set = [member](ExperimentConfig& c, const std::string& v) { c.*member = parse_bool("", v); };
    f.get = [member](const ExperimentConfig& c) { return std::string(c.*member ? "true" : "false"); };
  } else if constexpr (std::is_same_v<T, std::string>) {
    f.set = [member](ExperimentConfig& c, const std::string& v) { c.*member = v; };
    f.get = [member](const ExperimentConfig& c) { return c.*member; };
  } else {
    f.set = [member](ExperimentConfig& c, const std::string& v) { c.*member = parse_list("", v); };
    f.get = [member](const ExperimentConfig& c) { return join_list(c.*member); };
  }
  return f;
}

// Ordered so that config_to_text is stable.
const std::vector<std::pair<std::string, Field>>& fields() {
  using C = ExperimentConfig;
  static const std::vector<std::pair<std::string, Field>> table{
      {"profile", field(&C::profile)},
      {"bs_x", field(&C::bs_x)},
      {"bs_y", field(&C::bs_y)},
      {"ris_x", field(&C::ris_x)},
      {"ris_y", field(&C::ris_y)},
      {"bs_orientation", field(&C::bs_orientation)},
      {"ris_orientation", field(&C::ris_orientation)},
      {"ue_mode", field(&C::ue_mode)},
      {"ue_x", field(&C::ue_x)},
      {"ue_y", field(&C::ue_y)},
      {"sector_radius", field(&C::sector_radius)},
      {"clusters_bs", field(&C::clusters_bs)},
      {"clusters_ris", field(&C::clusters_ris)},
      {"paths_per_cluster", field(&C::paths_per_cluster)},
      {"scattering_area", field(&C::scattering_area)},
      {"n_bs", field(&C::n_bs)},
      {"n_ris", field(&C::n_ris)},
      {"n_rf", field(&C::n_rf)},
      {"fc", field(&C::fc)},
      {"bandwidth", field(&C::bandwidth)},
      {"subcarriers", field(&C::subcarriers)},
      {"decimation", field(&C::decimation)},
      {"p_nris_cdl", field(&C::p_nris_cdl)},
      {"p_ris_cdl", field(&C::p_ris_cdl)},
      {"p_nris_pdl", field(&C::p_nris_pdl)},
      {"p_ris_pdl", field(&C::p_ris_pdl)},
      {"ris_combiner", field(&C::ris_combiner)},
      {"ris_phase_policy", field(&C::ris_phase_policy)},
      {"power_dbm", field(&C::power_dbm)},
      {"noise_density_dbm_hz", field(&C::noise_density_dbm_hz)},
      {"rings", field(&C::rings)},
      {"redundancy", field(&C::redundancy)},
      {"hbar", field(&C::hbar)},
      {"omp_n_select", field(&C::omp_n_select)},
      {"omp_stop_ratio", field(&C::omp_stop_ratio)},
      {"omp_max_iters", field(&C::omp_max_iters)},
      {"pgd_max_iters", field(&C::pgd_max_iters)},
      {"pgd_stop_step", field(&C::pgd_stop_step)},
      {"phd_candidates", field(&C::phd_candidates)},
      {"phd_stop_span", field(&C::phd_stop_span)},
      {"gain_mode", field(&C::gain_mode)},
      {"pdl_rays", field(&C::pdl_rays)},
      {"pdl_levels", field(&C::pdl_levels)},
      {"pdl_zoom", field(&C::pdl_zoom)},
      {"run_ce", field(&C::run_ce)},
      {"run_cdl", field(&C::run_cdl)},
      {"run_pdl", field(&C::run_pdl)},
      {"sweep_axis", field(&C::sweep_axis)},
      {"sweep_values", field(&C::sweep_values)},
      {"trials", field(&C::trials)},
      {"seed", field(&C::seed)},
      {"workers", field(&C::workers)},
      {"record_timing", field(&C::record_timing)},
  };
  return table;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void ExperimentConfig::validate() const {
  require(n_bs >= 2 && n_ris >= 2, "array sizes must be at least 2");
  require(n_rf >= 1, "n_rf must be positive");
  require(fc > 0.0 && bandwidth > 0.0 && bandwidth < 2.0 * fc, "invalid carrier or bandwidth");
  require(subcarriers >= 1 && decimation >= 1, "subcarrier counts must be positive");
  require(subcarriers % decimation == 0, "decimation must divide the subcarrier count");
  require(p_nris_cdl >= 1 && p_ris_cdl >= 1 && p_nris_pdl >= 1 && p_ris_pdl >= 1,
          "slot counts must be positive");
  require(rings >= 1 && redundancy >= 1, "dictionary sizes must be positive");
  require(hbar > 0.0 && hbar < 1.0, "hbar must lie in (0, 1)");
  require(sector_radius > 0.0, "sector radius must be positive");
  require(paths_per_cluster >= 1, "paths_per_cluster must be positive");
  require(ue_mode == "random" || ue_mode == "fixed", "ue_mode must be random or fixed");
  require(ris_combiner == "center" || ris_combiner == "spread", "ris_combiner must be center or spread");
  require(ris_phase_policy == "per-trial" || ris_phase_policy == "fixed",
          "ris_phase_policy must be per-trial or fixed");
  require(gain_mode == "ls" || gain_mode == "friis", "gain_mode must be ls or friis");
  require(sweep_axis == "power" || sweep_axis == "n_bs" || sweep_axis == "n_ris" ||
              sweep_axis == "bandwidth",
          "sweep_axis must be power, n_bs, n_ris or bandwidth");
  require(!sweep_values.empty(), "sweep_values must not be empty");
  require(workers >= 1, "workers must be positive");
  require(pdl_rays >= 1 && pdl_zoom >= 1, "PDL search sizes must be positive");
  omp().validate();
}

ExperimentConfig ExperimentConfig::at_sweep(std::size_t i) const {
  ExperimentConfig c = *this;
  const double v = sweep_values.at(i);
  if (sweep_axis == "power") {
    c.power_dbm = v;
  } else if (sweep_axis == "bandwidth") {
    c.bandwidth = v;
  } else {
    if (v < 2.0 || v != std::floor(v)) throw ConfigError("array-size sweep values must be integers");
    (sweep_axis == "n_bs" ? c.n_bs : c.n_ris) = static_cast<std::size_t>(v);
  }
  return c;
}

ExperimentConfig paper_profile() { return {}; }

ExperimentConfig desk_profile() {
  ExperimentConfig c;
  c.profile = "desk";
  c.n_bs = 64;
  c.n_ris = 64;
  c.rings = 4;
  c.sweep_values = {15.0, 25.0, 35.0, 45.0};
  c.trials = 50;
  return c;
}

ExperimentConfig profile_by_name(const std::string& name) {
  if (name == "desk") return desk_profile();
  if (name == "paper") return paper_profile();
  throw ConfigError("unknown profile '" + name + "'");
}

void apply_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, f] : fields()) {
    if (name != key) continue;
    try {
      f.set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(key + ": " + e.what());
    }
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_text(ExperimentConfig& cfg, const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key == "profile") {
      // A profile line resets every field, so it only makes sense first.
      cfg = profile_by_name(trim(line.substr(eq + 1)));
      continue;
    }
    apply_config_value(cfg, key, trim(line.substr(eq + 1)));
  }
}

ExperimentConfig load_config(const std::string& path, const ExperimentConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg = base;
  apply_config_text(cfg, ss.str());
  return cfg;
}

std::string config_to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [name, f] : fields()) out += name + " = " + f.get(cfg) + "\n";
  return out;
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{
      "nmse_bu_gmmv",       "nmse_bu_psomp",  "nmse_bu_la",          "nmse_bu_genie",
      "nmse_ru_gmmv",       "nmse_ru_psomp",  "nmse_ru_la",          "nmse_ru_genie",
      "cdl_theta_bu_coarse", "cdl_theta_bu",  "cdl_theta_ru_coarse", "cdl_theta_ru",
      "cdl_r_bu",           "cdl_pos_coarse", "cdl_pos",             "cdl_fallback",
      "pdl_tdoa",           "pdl_theta_bu",   "pdl_r_bu",            "pdl_pos",
      "pdl_fallback"};
  return names;
}

const std::vector<std::string>& diagnostic_names() {
  static const std::vector<std::string> names{"pdl_tau_nris", "pdl_tau_ris", "pdl_delay_low_confidence",
                                              "pdl_hyp_a",    "pdl_hyp_b",   "pdl_branch"};
  return names;
}

double TrialRecord::metric(const std::string& name) const {
  const auto it = metrics.find(name);
  return it == metrics.end() ? kNan : it->second;
}

ExperimentContext::ExperimentContext(const ExperimentConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  full_ = SubcarrierGrid(cfg.fc, cfg.bandwidth, cfg.subcarriers);
  ce_ = full_.decimated(cfg.decimation);
  const double d = half_wavelength(full_);
  bs_ = ArrayGeometry(cfg.n_bs, d, cfg.bs_orientation, {cfg.bs_x, cfg.bs_y}, Handedness::kStandard);
  ris_ = ArrayGeometry(cfg.n_ris, d, cfg.ris_orientation, {cfg.ris_x, cfg.ris_y},
                       Handedness::kMirrored);
  scene_.bs = bs_;
  scene_.ris = ris_;
  scene_.sector_radius = cfg.sector_radius;
  if (cfg.ue_mode == "fixed") scene_.fixed_ue = Point2(cfg.ue_x, cfg.ue_y);
  scene_.clusters_bs = cfg.clusters_bs;
  scene_.clusters_ris = cfg.clusters_ris;
  scene_.paths_per_cluster = cfg.paths_per_cluster;
  scene_.scattering_area = cfg.scattering_area;

  if (cfg.run_ce || cfg.run_cdl) {
    fsprd_bs_ = build_fsprd(bs_, ce_, cfg.rings, cfg.redundancy, cfg.hbar);
    fsprd_ris_ = build_fsprd(ris_, ce_, cfg.rings, cfg.redundancy, cfg.hbar);
    h_br_.emplace(bs_, ris_, ce_, true);
    const RisCombinerMode mode =
        cfg.ris_combiner == "spread" ? RisCombinerMode::kSpread : RisCombinerMode::kCenterFrequency;
    w_ris_cdl_ = build_w_ris(cfg.p_ris_cdl, bs_, ris_, ce_, cfg.n_rf, mode);
  }
  if (cfg.run_ce) {
    ptm_bs_ = build_ptm(bs_, ce_, cfg.rings, cfg.redundancy, cfg.hbar);
    ptm_ris_ = build_ptm(ris_, ce_, cfg.rings, cfg.redundancy, cfg.hbar);
  }
  if (cfg.run_pdl) {
    const RisCombinerMode mode =
        cfg.ris_combiner == "spread" ? RisCombinerMode::kSpread : RisCombinerMode::kCenterFrequency;
    w_ris_pdl_ = build_w_ris(cfg.p_ris_pdl, bs_, ris_, full_, cfg.n_rf, mode);
    // Cache the full-band BS/RIS channel only while it stays modest in memory.
    const double bytes = 16.0 * static_cast<double>(cfg.n_bs * cfg.n_ris * cfg.subcarriers);
    h_br_full_.emplace(bs_, ris_, full_, bytes <= kFullChannelCacheBytes);
  }
}

OmpConfig ExperimentContext::omp() const { return cfg_.omp(); }

CdlConfig ExperimentContext::cdl() const {
  CdlConfig c;
  c.pgd.max_iters = cfg_.pgd_max_iters;
  c.pgd.stop_step = cfg_.pgd_stop_step;
  c.phd.candidates = cfg_.phd_candidates;
  c.phd.stop_span = cfg_.phd_stop_span;
  c.phd.redundancy = cfg_.redundancy;
  c.gain_mode = cfg_.gain_mode == "friis" ? GainMode::kFriis : GainMode::kLeastSquares;
  return c;
}

PdlConfig ExperimentContext::pdl() const {
  PdlConfig c;
  c.search.tau_max = 2.0 * cfg_.sector_radius / kSpeedOfLight;
  c.search.levels = cfg_.pdl_levels;
  c.search.zoom = cfg_.pdl_zoom;
  c.rays = cfg_.pdl_rays;
  c.pgd = cdl().pgd;
  c.gain_mode = cdl().gain_mode;
  return c;
}

std::uint64_t trial_seed(std::uint64_t master, std::size_t sweep_index, std::size_t trial) {
  return derive_seed({master, static_cast<std::uint64_t>(sweep_index),
                      static_cast<std::uint64_t>(trial)});
}

namespace {

CVectorSeq scaled(const CVectorSeq& v, double factor) {
  CVectorSeq out = v;
  for (CVector& x : out) x *= factor;
  return out;
}

double angle_error(double theta_hat, double theta) {
  return std::asin(std::clamp(theta_hat, -1.0, 1.0)) - std::asin(std::clamp(theta, -1.0, 1.0));
}

void note_failure(TrialRecord& rec, const std::string& stage, const std::string& what) {
  if (!rec.failure.empty()) rec.failure += "; ";
  rec.failure += stage + ": " + what;
}

CVectorSeq subset(const CVectorSeq& full, std::size_t step) {
  CVectorSeq out;
  for (std::size_t m = 0; m < full.size(); m += step) out.push_back(full[m]);
  return out;
}

SoundingFrame make_frame(const ExperimentContext& ctx, std::size_t p_nris, std::size_t p_ris,
                         const CMatrixSeq& w_ris, double power_dbm, std::uint64_t seed,
                         std::uint64_t phase_seed) {
  const ExperimentConfig& c = ctx.config();
  SoundingFrame f;
  f.w_nris = build_w_nris(p_nris, c.n_bs, c.n_rf, seed, true);
  f.w_ris = w_ris;
  f.ris_phases = build_ris_phases(p_ris, c.n_ris, phase_seed);
  f.pilot_amp = pilot_amplitude(power_dbm, c.subcarriers);
  f.noise_power = subcarrier_noise_power(c.noise_density_dbm_hz, c.bandwidth, c.subcarriers);
  return f;
}

}  // namespace

OmpConfig ExperimentConfig::omp() const {
  OmpConfig o;
  o.n_select = omp_n_select;
  o.stop_ratio = omp_stop_ratio;
  o.max_iters = omp_max_iters;
  return o;
}

TrialRecord run_trial(const ExperimentContext& ctx, std::size_t sweep_index, double sweep_value,
                      std::size_t trial, std::optional<double> power_dbm) {
  const auto start = std::chrono::steady_clock::now();
  const ExperimentConfig& cfg = ctx.config();
  TrialRecord rec;
  rec.sweep_index = sweep_index;
  rec.sweep_value = sweep_value;
  rec.trial = trial;
  rec.seed = trial_seed(cfg.seed, sweep_index, trial);
  for (const std::string& n : metric_names()) rec.metrics[n] = kNan;
  const std::uint64_t s = rec.seed;
  const double power = power_dbm.value_or(cfg.power_dbm);
  const std::uint64_t phase_base = cfg.ris_phase_policy == "fixed" ? cfg.seed : s;

  try {
    const Scene scene = draw_scene(ctx.scene_config(), derive_seed({s, 1}));
    rec.ue_x = scene.ue.x();
    rec.ue_y = scene.ue.y();
    const bool need_full = cfg.run_pdl;
    const SubcarrierGrid& syn_grid = need_full ? ctx.full_grid() : ctx.ce_grid();
    const ChannelRealization bu = synthesize_channel(scene, Link::kDirect, syn_grid, derive_seed({s, 2}));
    const ChannelRealization ru =
        synthesize_channel(scene, Link::kReflected, syn_grid, derive_seed({s, 3}));
    const PolarPoint truth_bu = ctx.bs().polar_of(scene.ue);
    const PolarPoint truth_ru = ctx.ris().polar_of(scene.ue);

    if (cfg.run_ce || cfg.run_cdl) {
      const CVectorSeq h_bu = need_full ? subset(bu.per_subcarrier, cfg.decimation) : bu.per_subcarrier;
      const CVectorSeq h_ru = need_full ? subset(ru.per_subcarrier, cfg.decimation) : ru.per_subcarrier;
      const SoundingFrame frame = make_frame(ctx, cfg.p_nris_cdl, cfg.p_ris_cdl, ctx.w_ris_cdl(), power,
                                             derive_seed({s, 4}), derive_seed({phase_base, 5}));
      const PilotObservation obs = receive(h_bu, h_ru, ctx.h_br(), frame, derive_seed({s, 6}));
      const CMatrix w_nris = frame.stacked_nris();
      const Sensing sens_nris = Sensing::shared(w_nris);
      const Sensing sens_ris = Sensing::per_subcarrier(frame.stacked_ris_all(ctx.h_br()));
      const OmpConfig omp = ctx.omp();
      // Shared by the GMMV and LA runs of this trial.
      std::vector<RVector> norms_bu;
      std::vector<RVector> norms_ris;
      if (omp.normalize_columns) {
        norms_bu = sensed_column_norms(sens_nris, ctx.fsprd_bs());
        norms_ris = sensed_column_norms(sens_ris, ctx.fsprd_ris());
      }
      OmpConfig omp_bu = omp;
      OmpConfig omp_ris = omp;
      if (omp.normalize_columns) {
        omp_bu.column_norms = &norms_bu;
        omp_ris.column_norms = &norms_ris;
      }
      // Estimates carry the pilot amplitude.
      const double inv_amp = 1.0 / frame.pilot_amp;

      if (cfg.run_ce) {
        auto guarded = [&](const std::string& name, auto&& fn) {
          try {
            rec.metrics[name] = fn();
          } catch (const Error& e) {
            note_failure(rec, name, e.what());
          }
        };
        guarded("nmse_bu_gmmv", [&] {
          return nmse_db(h_bu, scaled(gmmv_omp(obs.y_nris, sens_nris, ctx.fsprd_bs(), omp_bu).h_hat, inv_amp));
        });
        guarded("nmse_ru_gmmv", [&] {
          return nmse_db(h_ru, scaled(gmmv_omp(obs.y_ris, sens_ris, ctx.fsprd_ris(), omp_ris).h_hat, inv_amp));
        });
        guarded("nmse_bu_psomp", [&] {
          return nmse_db(h_bu, scaled(gmmv_omp(obs.y_nris, sens_nris, ctx.ptm_bs(), omp).h_hat, inv_amp));
        });
        guarded("nmse_ru_psomp", [&] {
          return nmse_db(h_ru, scaled(gmmv_omp(obs.y_ris, sens_ris, ctx.ptm_ris(), omp).h_hat, inv_amp));
        });
        guarded("nmse_bu_genie", [&] {
          return nmse_db(h_bu, scaled(genie_ls(obs.y_nris, sens_nris, ctx.fsprd_bs(), bu.paths).h_hat, inv_amp));
        });
        guarded("nmse_ru_genie", [&] {
          return nmse_db(h_ru, scaled(genie_ls(obs.y_ris, sens_ris, ctx.fsprd_ris(), ru.paths).h_hat, inv_amp));
        });
      }

      try {
        const JointResult joint =
            joint_sense(obs.y_nris, w_nris, obs.y_ris, sens_ris, ctx.fsprd_bs(), ctx.fsprd_ris(),
                        ctx.bs(), ctx.ris(), ctx.ce_grid(), omp, ctx.cdl(),
                        omp.normalize_columns ? &norms_bu : nullptr,
                        omp.normalize_columns ? &norms_ris : nullptr);
        if (cfg.run_ce) {
          rec.metrics["nmse_bu_la"] = nmse_db(h_bu, scaled(joint.bu.h_hat, inv_amp));
          rec.metrics["nmse_ru_la"] = nmse_db(h_ru, scaled(joint.ru.h_hat, inv_amp));
        }
        if (cfg.run_cdl) {
          if (joint.location) {
            const LocationEstimate& loc = *joint.location;
            if (loc.coarse) {
              rec.metrics["cdl_theta_bu_coarse"] = angle_error(loc.coarse->theta_bu, truth_bu.theta);
              rec.metrics["cdl_theta_ru_coarse"] = angle_error(loc.coarse->theta_ru, truth_ru.theta);
              rec.metrics["cdl_pos_coarse"] = (loc.coarse->ue - scene.ue).norm();
            }
            rec.metrics["cdl_theta_bu"] = angle_error(loc.fix.theta_bu, truth_bu.theta);
            rec.metrics["cdl_theta_ru"] = angle_error(loc.fix.theta_ru, truth_ru.theta);
            rec.metrics["cdl_r_bu"] = loc.fix.r_bu - truth_bu.range;
            rec.metrics["cdl_pos"] = (loc.fix.ue - scene.ue).norm();
            rec.metrics["cdl_fallback"] = loc.fallback ? 1.0 : 0.0;
            if (loc.fallback) note_failure(rec, "cdl refinement", loc.note);
          } else {
            note_failure(rec, "cdl", joint.location_error);
          }
        }
      } catch (const Error& e) {
        note_failure(rec, "joint", e.what());
      }
    }

    if (cfg.run_pdl) {
      try {
        const SoundingFrame frame = make_frame(ctx, cfg.p_nris_pdl, cfg.p_ris_pdl, ctx.w_ris_pdl(), power,
                                               derive_seed({s, 7}), derive_seed({phase_base, 8}));
        const PilotObservation obs =
            receive(bu.per_subcarrier, ru.per_subcarrier, ctx.h_br_full(), frame, derive_seed({s, 9}));
        PdlInputs in;
        in.y_nris = &obs.y_nris;
        in.y_ris = &obs.y_ris;
        in.frame = &frame;
        in.full_grid = &ctx.full_grid();
        in.decimation = cfg.decimation;
        in.bs = &ctx.bs();
        in.ris = &ctx.ris();
        in.sector = &ctx.scene_config();
        const PdlResult res = pdl(in, ctx.pdl());
        const double d_bu = (scene.ue - ctx.bs().reference()).norm();
        const double d_ru = (scene.ue - ctx.ris().reference()).norm();
        rec.metrics["pdl_tdoa"] = res.hyperbola.tdoa * kSpeedOfLight - (d_bu - d_ru);
        rec.metrics["pdl_tau_nris"] = res.delay_nris.tau;
        rec.metrics["pdl_tau_ris"] = res.delay_ris.tau;
        rec.metrics["pdl_delay_low_confidence"] =
            (res.delay_nris.low_confidence || res.delay_ris.low_confidence) ? 1.0 : 0.0;
        rec.metrics["pdl_hyp_a"] = res.hyperbola.a;
        rec.metrics["pdl_hyp_b"] = res.hyperbola.b;
        rec.metrics["pdl_branch"] = res.hyperbola.branch == Branch::kNearBs    ? -1.0
                                    : res.hyperbola.branch == Branch::kNearRis ? 1.0
                                                                               : 0.0;
        const LocationEstimate& loc = res.location;
        rec.metrics["pdl_theta_bu"] = angle_error(loc.fix.theta_bu, truth_bu.theta);
        rec.metrics["pdl_r_bu"] = loc.fix.r_bu - truth_bu.range;
        rec.metrics["pdl_pos"] = (loc.fix.ue - scene.ue).norm();
        rec.metrics["pdl_fallback"] = loc.fallback ? 1.0 : 0.0;
        if (loc.fallback) note_failure(rec, "pdl refinement", loc.note);
      } catch (const Error& e) {
        note_failure(rec, "pdl", e.what());
      }
    }
  } catch (const Error& e) {
    note_failure(rec, "scene", e.what());
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::vector<TrialRecord> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::size_t points = cfg.sweep_values.size();
  std::vector<TrialRecord> records(points * cfg.trials);
  if (cfg.trials == 0) return records;

  // Power only changes the frame amplitude, so one context serves the whole sweep.
  std::vector<std::optional<ExperimentContext>> contexts(points);
  for (std::size_t i = 0; i < points; ++i) {
    if (cfg.sweep_axis == "power" && i > 0) continue;
    contexts[i].emplace(cfg.at_sweep(i));
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t job = next++; job < records.size(); job = next++) {
      const std::size_t i = job / cfg.trials;
      const std::size_t t = job % cfg.trials;
      if (cfg.sweep_axis == "power") {
        records[job] = run_trial(*contexts[0], i, cfg.sweep_values[i], t, cfg.sweep_values[i]);
      } else {
        records[job] = run_trial(*contexts[i], i, cfg.sweep_values[i], t);
      }
    }
  };
  const std::size_t n = std::min(cfg.workers, records.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n; ++w) pool.emplace_back(worker);
  worker();
  for (std::thread& th : pool) th.join();
  return records;
}

void write_csv(std::ostream& os, const std::vector<TrialRecord>& records, bool timing) {
  os << "sweep_index,sweep_value,trial,seed,ue_x,ue_y";
  for (const std::string& n : metric_names()) os << ',' << n;
  for (const std::string& n : diagnostic_names()) os << ',' << n;
  if (timing) os << ",seconds";
  os << ",failure\n";
  for (const TrialRecord& r : records) {
    os << r.sweep_index << ',' << format_number(r.sweep_value) << ',' << r.trial << ',' << r.seed
       << ',' << format_number(r.ue_x) << ',' << format_number(r.ue_y);
    for (const std::string& n : metric_names()) os << ',' << format_number(r.metric(n));
    for (const std::string& n : diagnostic_names()) os << ',' << format_number(r.metric(n));
    if (timing) os << ',' << format_number(r.seconds);
    std::string f = r.failure;
    std::replace(f.begin(), f.end(), '"', '\'');
    os << ",\"" << f << "\"\n";
  }
}

void write_json(std::ostream& os, const std::vector<TrialRecord>& records, bool timing) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const TrialRecord& r : records) {
    nlohmann::ordered_json j;
    j["sweep_index"] = r.sweep_index;
    j["sweep_value"] = r.sweep_value;
    j["trial"] = r.trial;
    j["seed"] = r.seed;
    j["ue"] = {r.ue_x, r.ue_y};
    nlohmann::ordered_json m;
    for (const std::string& n : metric_names()) {
      const double v = r.metric(n);
      m[n] = std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v);
    }
    j["metrics"] = std::move(m);
    nlohmann::ordered_json d;
    for (const std::string& n : diagnostic_names()) {
      const double v = r.metric(n);
      d[n] = std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v);
    }
    j["diagnostics"] = std::move(d);
    if (timing) j["seconds"] = r.seconds;
    j["failure"] = r.failure.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(r.failure);
    arr.push_back(std::move(j));
  }
  os << arr.dump(2) << '\n';
}

double rmse(const std::vector<double>& errors) {
  if (errors.empty()) throw DomainError("no samples");
  double s = 0.0;
  for (double e : errors) s += e * e;
  return std::sqrt(s / static_cast<double>(errors.size()));
}

double mean_nmse_db(const std::vector<double>& nmse_db_values) {
  if (nmse_db_values.empty()) throw DomainError("no samples");
  double s = 0.0;
  for (double v : nmse_db_values) s += std::pow(10.0, v / 10.0);
  return 10.0 * std::log10(s / static_cast<double>(nmse_db_values.size()));
}

std::vector<CdfPoint> empirical_cdf(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  std::vector<CdfPoint> out;
  out.reserve(samples.size());
  const double n = static_cast<double>(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    out.push_back({samples[k], static_cast<double>(k + 1) / n});
  }
  return out;
}

std::optional<double> PointSummary::get(const std::string& metric) const {
  for (const MetricSummary& m : metrics) {
    if (m.metric == metric) return m.value;
  }
  return std::nullopt;
}

std::vector<PointSummary> summarize(const std::vector<TrialRecord>& records) {
  std::vector<PointSummary> out;
  std::map<std::size_t, std::vector<const TrialRecord*>> groups;
  for (const TrialRecord& r : records) groups[r.sweep_index].push_back(&r);
  for (const auto& [index, group] : groups) {
    PointSummary p;
    p.sweep_index = index;
    p.sweep_value = group.front()->sweep_value;
    for (const std::string& n : metric_names()) {
      std::vector<double> v;
      for (const TrialRecord* r : group) {
        const double x = r->metric(n);
        if (std::isfinite(x)) v.push_back(x);
      }
      MetricSummary m{n, v.size(), std::nullopt};
      if (!v.empty()) {
        if (n.rfind("nmse_", 0) == 0) {
          m.value = mean_nmse_db(v);
        } else if (n.size() > 9 && n.compare(n.size() - 9, 9, "_fallback") == 0) {
          double s = 0.0;
          for (double x : v) s += x;
          m.value = s / static_cast<double>(v.size());
        } else {
          m.value = rmse(v);
        }
      }
      p.metrics.push_back(std::move(m));
    }
    out.push_back(std::move(p));
  }
  return out;
}

void write_cdf_csv(std::ostream& os, const std::vector<TrialRecord>& records,
                   const std::vector<std::string>& metrics) {
  os << "sweep_index,sweep_value,metric,value,quantile\n";
  std::map<std::size_t, std::vector<const TrialRecord*>> groups;
  for (const TrialRecord& r : records) groups[r.sweep_index].push_back(&r);
  for (const auto& [index, group] : groups) {
    for (const std::string& n : metrics) {
      std::vector<double> v;
      for (const TrialRecord* r : group) {
        const double x = r->metric(n);
        if (std::isfinite(x)) v.push_back(std::abs(x));
      }
      for (const CdfPoint& c : empirical_cdf(std::move(v))) {
        os << index << ',' << format_number(group.front()->sweep_value) << ',' << n << ','
           << format_number(c.value) << ',' << format_number(c.quantile) << '\n';
      }
    }
  }
}

void write_summary_csv(std::ostream& os, const std::vector<PointSummary>& summary) {
  os << "sweep_index,sweep_value,metric,samples,value\n";
  for (const PointSummary& p : summary) {
    for (const MetricSummary& m : p.metrics) {
      os << p.sweep_index << ',' << format_number(p.sweep_value) << ',' << m.metric << ','
         << m.samples << ',' << (m.value ? format_number(*m.value) : std::string("missing")) << '\n';
    }
  }
}

}  // namespace thzloc
