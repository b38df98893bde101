// Acceptance run: one PASS/FAIL line per criterion.
//   thzloc_acceptance <path to thzloc_cli> [criterion numbers...]

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>

#include "oracles/oracles.hpp"
#include "thzloc/cdl.hpp"
#include "thzloc/channel.hpp"
#include "thzloc/dictionary.hpp"
#include "thzloc/estimation.hpp"
#include "thzloc/harness.hpp"
#include "thzloc/pdl.hpp"
#include "thzloc/rng.hpp"
#include "thzloc/sounding.hpp"

using namespace thzloc;

namespace {

std::string g_cli;

struct Verdict {
  bool pass = false;
  std::string detail;
};

template <typename... Args>
std::string cat(const Args&... args) {
  std::ostringstream os;
  os.precision(6);
  (os << ... << args);
  return os.str();
}

// Runs a command and returns its standard output.
std::string capture(const std::string& cmd) {
  std::array<char, 4096> buf{};
  std::string out;
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
  if (!pipe) throw std::runtime_error("cannot run " + cmd);
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe.get()) != nullptr) out += buf.data();
  return out;
}

std::map<std::string, double> parse_pairs(const std::string& text) {
  std::map<std::string, double> out;
  std::istringstream is(text);
  std::string key;
  double value = 0.0;
  while (is >> key >> value) out[key] = value;
  return out;
}

CMatrix stack(const CMatrixSeq& slots) {
  CMatrix w(static_cast<Eigen::Index>(slots.size()) * slots.front().rows(), slots.front().cols());
  for (std::size_t p = 0; p < slots.size(); ++p) {
    w.middleRows(static_cast<Eigen::Index>(p) * slots[p].rows(), slots[p].rows()) = slots[p];
  }
  return w;
}

ArrayGeometry bs_array(std::size_t n, const SubcarrierGrid& grid) {
  return {n, half_wavelength(grid), kPi / 4.0, Point2(-10.0 * std::sqrt(2.0), 0.0), Handedness::kStandard};
}

ArrayGeometry ris_array(std::size_t n, const SubcarrierGrid& grid) {
  return {n, half_wavelength(grid), kPi / 4.0, Point2(10.0 * std::sqrt(2.0), 0.0), Handedness::kMirrored};
}

// ----------------------------------------------------------------------------

Verdict effective_rayleigh_reproduction() {
  const auto v = parse_pairs(capture(g_cli + " rayleigh --n 256 --fc 1e11 --theta 0.5 --hbar 0.1"));
  const double eps = v.at("epsilon"), z = v.at("effective_m"), classical = v.at("classical_m");
  const bool ok = eps >= 0.36 && eps <= 0.44 && z >= 26.5 && z <= 32.5 &&
                  std::abs(classical - 98.3) <= 0.001 * 98.3;
  return {ok, cat("epsilon ", eps, ", Z_eff ", z, " m, classical ", classical, " m")};
}

Verdict beam_squint_magnitude() {
  const auto v = parse_pairs(capture(g_cli + " squint --n 256 --fc 1e11 --bandwidth 1e10 --theta 0.5"));
  const double spread = v.at("spread"), bins = v.at("bins");
  const bool ok = std::abs(spread - 0.05) <= 0.002 && std::abs(bins - 12.8) <= 1.0;
  return {ok, cat("spread ", spread, ", ", bins, " resolution bins")};
}

Verdict exact_recovery() {
  const SubcarrierGrid grid(100e9, 10e9, 16);
  const ArrayGeometry a = bs_array(32, grid);
  const PolarDictionary dict = build_fsprd(a, grid, 4, 1);
  const CMatrix w = stack(build_w_nris(4, 32, 4, 5, false));
  const Sensing sensing = Sensing::shared(w);
  std::size_t missed = 0, shallow = 0;
  double worst = -1e9;
  for (std::uint64_t t = 0; t < 100; ++t) {
    Rng rng(derive_seed({3, t}));
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, dict.size() - 1)(rng);
    CVectorSeq h, y;
    for (std::size_t m = 0; m < grid.size(); ++m) {
      h.push_back(complex_normal(rng) * dict.atom(k, m));
      y.push_back(w * h.back());
    }
    const EstimationResult r = gmmv_omp(y, sensing, dict, OmpConfig{});
    if (r.support.empty() || r.support.front() != k) ++missed;
    const double e = nmse_db(h, r.h_hat);
    worst = std::max(worst, e);
    if (e > -100.0) ++shallow;
  }
  return {missed == 0 && shallow == 0,
          cat(100 - missed, "/100 first picks on the generating column, ", 100 - shallow,
              "/100 at or below -100 dB (worst ", worst, " dB)")};
}

Verdict projector_equivalence() {
  const SubcarrierGrid grid(100e9, 10e9, 32);
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 20; ++t) {
    Rng rng(derive_seed({4, t}));
    // 8 combined rows of a noise-free 10-path delay profile (full row rank).
    CMatrix y = CMatrix::Zero(8, 32);
    for (int path = 0; path < 10; ++path) {
      const double tau = 40e-9 * uniform01(rng);
      CVector gain(8);
      for (Eigen::Index i = 0; i < 8; ++i) gain(i) = complex_normal(rng);
      y += gain * delay_vector(grid, tau).adjoint();
    }
    const CMatrix g = denoised_autocorr(y, 0.0);
    const CMatrix p = NoiseProjector(g, 8).dense();
    worst = std::max(worst, (p - oracle::evd_noise_projector(g, 8)).norm());
  }
  return {worst < 1e-8, cat("worst ||P_G - P_EVD||_F ", worst)};
}

Verdict gradient_correctness() {
  const SubcarrierGrid grid(100e9, 10e9, 16);
  const ArrayGeometry a = bs_array(64, grid);
  const CMatrix w = stack(build_w_nris(8, 64, 4, 9, true));
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 20; ++t) {
    Rng rng(derive_seed({5, t}));
    const double theta_true = -0.8 + 1.6 * uniform01(rng);
    const double r_true = 4.0 + 30.0 * uniform01(rng);
    CVectorSeq y;
    for (std::size_t m = 0; m < grid.size(); ++m) {
      y.push_back(w * near_steering(a, grid, m, theta_true, r_true) * complex_normal(rng));
    }
    const double theta = std::clamp(theta_true + 0.05 * (uniform01(rng) - 0.5), -0.95, 0.95);
    const double r = r_true * (0.8 + 0.4 * uniform01(rng));
    const RelativePhaseLoss loss(relative_phase_transform(y), w, a, grid, r);
    const double g = loss.gradient(theta);
    const double fd = oracle::central_difference([&](double x) { return loss.value(x); }, theta, 1e-6);
    worst = std::max(worst, std::abs(g - fd) / std::max(std::abs(g), 1e-300));
  }
  return {worst < 1e-5, cat("worst relative error ", worst, " over 20 points")};
}

Verdict dictionary_asymmetry() {
  const SubcarrierGrid grid(100e9, 10e9, 16);
  const ArrayGeometry a = bs_array(256, grid);
  const PolarDictionary fsprd = build_fsprd(a, grid, 2, 8);
  const PolarDictionary ptm = build_ptm(a, grid, 2, 8);
  std::size_t hit_fsprd = 0, hit_ptm = 0;
  for (std::uint64_t t = 0; t < 50; ++t) {
    Rng rng(derive_seed({6, t}));
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, fsprd.size() - 1)(rng);
    RVector score_f = RVector::Zero(static_cast<Eigen::Index>(fsprd.size()));
    RVector score_p = score_f;
    for (std::size_t m = 0; m < grid.size(); ++m) {
      const CVector h = fsprd.atom(k, m) * complex_normal(rng);
      score_f += fsprd.correlate(m, h).cwiseAbs2();
      score_p += ptm.correlate(m, h).cwiseAbs2();
    }
    Eigen::Index best_f = 0, best_p = 0;
    score_f.maxCoeff(&best_f);
    score_p.maxCoeff(&best_p);
    if (static_cast<std::size_t>(best_f) == k) ++hit_fsprd;
    if (static_cast<std::size_t>(best_p) == k) ++hit_ptm;
  }
  return {hit_fsprd == 50 && hit_ptm < 25,
          cat("argmax on the generating column: FSPRD ", hit_fsprd, "/50, PTM ", hit_ptm, "/50")};
}

// Shared by the trend and determinism criteria.
std::vector<TrialRecord> g_desk_records;
std::string g_desk_csv;

ExperimentConfig desk_seed7() {
  ExperimentConfig c = desk_profile();
  c.seed = 7;
  return c;
}

Verdict trend_reproduction() {
  g_desk_records = run_experiment(desk_seed7());
  std::ostringstream csv;
  write_csv(csv, g_desk_records, false);
  g_desk_csv = csv.str();

  const std::vector<PointSummary> s = summarize(g_desk_records);
  const PointSummary& top = s.back();
  auto get = [](const PointSummary& p, const char* name) { return p.get(name).value_or(std::nan("")); };
  const double bu_g = get(top, "nmse_bu_gmmv"), bu_p = get(top, "nmse_bu_psomp");
  const double ru_g = get(top, "nmse_ru_gmmv"), ru_p = get(top, "nmse_ru_psomp");
  const bool a = bu_g <= bu_p - 3.0 && ru_g <= ru_p - 3.0;

  bool b = true;
  std::string b_detail;
  for (const PointSummary& p : s) {
    const double la = get(p, "nmse_bu_la"), gm = get(p, "nmse_bu_gmmv");
    if (!(la <= gm)) b = false;
    b_detail += cat(" ", p.sweep_value, "dBm:", la, "/", gm);
  }
  const double t_pgd = get(top, "cdl_theta_bu"), t_coarse = get(top, "cdl_theta_bu_coarse");
  const bool c = t_pgd <= t_coarse / 5.0;
  const double pos_cdl = get(top, "cdl_pos"), pos_pdl = get(top, "pdl_pos");
  const bool d = pos_cdl <= pos_pdl;

  std::size_t failed = 0;
  for (const TrialRecord& r : g_desk_records) failed += r.failure.empty() ? 0 : 1;

  std::cout << "  7(a) " << (a ? "PASS" : "FAIL") << " NMSE at " << top.sweep_value << " dBm: h_BU GMMV "
            << bu_g << " vs PSOMP " << bu_p << " dB; h_RU GMMV " << ru_g << " vs PSOMP " << ru_p << " dB\n";
  std::cout << "  7(b) " << (b ? "PASS" : "FAIL") << " h_BU NMSE LA/GMMV per point:" << b_detail << "\n";
  std::cout << "  7(c) " << (c ? "PASS" : "FAIL") << " RMSE theta_BU coarse " << t_coarse << " rad, after PGD "
            << t_pgd << " rad\n";
  std::cout << "  7(d) " << (d ? "PASS" : "FAIL") << " position RMSE CDL " << pos_cdl << " m, PDL " << pos_pdl
            << " m\n";
  return {a && b && c && d, cat(g_desk_records.size(), " records, ", failed, " with a stage failure")};
}

Verdict geometry_round_trips() {
  const SubcarrierGrid grid(100e9, 10e9, 2);
  SceneConfig cfg;
  cfg.bs = bs_array(64, grid);
  cfg.ris = ris_array(64, grid);
  const double r_br = (cfg.ris.reference() - cfg.bs.reference()).norm();
  double worst_lines = 0.0, worst_hyp = 0.0;
  std::size_t scenes = 0;
  for (std::uint64_t s = 0; scenes < 1000; ++s) {
    const Point2 ue = draw_scene(cfg, derive_seed({8, s})).ue;
    ++scenes;
    const PolarPoint pb = cfg.bs.polar_of(ue), pr = cfg.ris.polar_of(ue);
    const Fix f = intersect_lines(pb.theta, pr.theta, cfg.bs, cfg.ris);
    worst_lines = std::max(worst_lines, (f.ue - ue).norm());
    const Hyperbola h = tdoa_hyperbola(pb.range / kSpeedOfLight, (pr.range + r_br) / kSpeedOfLight, r_br,
                                       cfg.bs.reference(), cfg.ris.reference());
    const RayFix rf = line_hyperbola_intersect(pb.theta, h, cfg.bs);
    worst_hyp = std::max(worst_hyp, (rf.ue - ue).norm());
  }
  return {worst_lines <= 1e-9 && worst_hyp <= 1e-9,
          cat(scenes, " scenes, worst error: lines ", worst_lines, " m, line/hyperbola ", worst_hyp, " m")};
}

Verdict determinism() {
  if (g_desk_csv.empty()) {
    std::ostringstream csv;
    write_csv(csv, run_experiment(desk_seed7()), false);
    g_desk_csv = csv.str();
  }
  const std::filesystem::path out = std::filesystem::temp_directory_path() / "thzloc_acceptance_sweep.csv";
  capture(g_cli + " sweep --profile desk --seed 7 --out " + out.string());
  std::ifstream f(out, std::ios::binary);
  const std::string cli((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::filesystem::remove(out);
  const bool same = !cli.empty() && cli == g_desk_csv;
  return {same, cat("CLI sweep ", cli.size(), " bytes, independent run ", g_desk_csv.size(), " bytes, ",
                    same ? "identical" : "different")};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;  // 0: no runtime bound
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: thzloc_acceptance <thzloc_cli> [criteria...]\n";
    return 2;
  }
  g_cli = argv[1];
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::stoi(argv[i]));

  const std::vector<Criterion> criteria{
      {1, "effective Rayleigh reproduction", 5.0, effective_rayleigh_reproduction},
      {2, "beam-squint magnitude", 1.0, beam_squint_magnitude},
      {3, "exact-recovery oracle", 30.0, exact_recovery},
      {4, "projector oracle equivalence", 10.0, projector_equivalence},
      {5, "gradient correctness", 5.0, gradient_correctness},
      {6, "dictionary asymmetry", 60.0, dictionary_asymmetry},
      {7, "trend reproduction at desk scale", 1800.0, trend_reproduction},
      {8, "geometry round trips", 10.0, geometry_round_trips},
      {9, "determinism", 0.0, determinism},
  };

  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && only.count(c.id) == 0) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.limit_s <= 0.0 || secs < c.limit_s;
    const bool pass = v.pass && in_time;
    std::cout << "criterion " << c.id << " " << (pass ? "PASS" : "FAIL") << " " << c.name << ": " << v.detail
              << " (" << cat(secs) << " s" << (c.limit_s > 0.0 ? cat(", limit ", c.limit_s, " s") : "")
              << ")" << std::endl;
    if (!pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
