#include "oracles/checks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "oracles/oracles.hpp"
#include "thzloc/cdl.hpp"
#include "thzloc/channel.hpp"
#include "thzloc/dictionary.hpp"
#include "thzloc/estimation.hpp"
#include "thzloc/geometry.hpp"
#include "thzloc/harness.hpp"
#include "thzloc/pdl.hpp"
#include "thzloc/rng.hpp"
#include "thzloc/sounding.hpp"

namespace thzloc::oracle {

namespace {

template <typename... Parts>
std::string cat(const Parts&... parts) {
  std::ostringstream os;
  os.precision(6);
  (os << ... << parts);
  return os.str();
}

Outcome verdict(bool pass, std::string detail) { return {pass, std::move(detail)}; }

const Point2 kBs(-10.0 * std::sqrt(2.0), 0.0);
const Point2 kRis(10.0 * std::sqrt(2.0), 0.0);
const Point2 kUe(5.96, -10.1);

struct Layout {
  SubcarrierGrid grid;
  ArrayGeometry bs;
  ArrayGeometry ris;
};

Layout layout(std::size_t n, std::size_t m, double bandwidth = 10e9) {
  Layout l;
  l.grid = SubcarrierGrid(100e9, bandwidth, m);
  const double d = half_wavelength(l.grid);
  l.bs = ArrayGeometry(n, d, kPi / 4.0, kBs, Handedness::kStandard);
  l.ris = ArrayGeometry(n, d, kPi / 4.0, kRis, Handedness::kMirrored);
  return l;
}

double max_abs_diff(const CVector& a, const CVector& b) { return (a - b).cwiseAbs().maxCoeff(); }

// Noise-free single LoS path toward the given array. With flat set, every subcarrier keeps the
// center-frequency Friis magnitude, which makes the relative-phase model exact for odd N.
CVectorSeq los_channel(const ArrayGeometry& array, const SubcarrierGrid& grid, double theta,
                       double range, bool flat = false) {
  const double center = std::abs(los_gain(SubcarrierGrid(grid.center_frequency(), 0.0, 1), 0, range, {}, 0.0));
  CVectorSeq h;
  for (std::size_t m = 0; m < grid.size(); ++m) {
    Complex g = los_gain(grid, m, range, {}, -grid.wavenumber(m) * range);
    if (flat) g *= center / std::abs(g);
    h.push_back(g * near_steering(array, grid, m, theta, range));
  }
  return h;
}

// Rescales a single-path realization to its center-subcarrier magnitude.
CVectorSeq flat_magnitude(const ChannelRealization& ch) {
  const CVector& g = ch.paths.front().gains;
  const double center = std::abs(g(g.size() / 2));
  CVectorSeq h = ch.per_subcarrier;
  for (std::size_t m = 0; m < h.size(); ++m) h[m] *= center / std::abs(g(static_cast<Eigen::Index>(m)));
  return h;
}

CVectorSeq combine(const CMatrix& w, const CVectorSeq& h) {
  CVectorSeq y;
  for (const CVector& x : h) y.push_back(w * x);
  return y;
}

// Pilots of a single delay tau seen through a fixed random combiner row set.
CMatrix single_delay_pilots(const SubcarrierGrid& grid, double tau, std::size_t rows, Rng& rng) {
  CVector w(static_cast<Eigen::Index>(rows));
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = complex_normal(rng);
  CMatrix y(w.size(), static_cast<Eigen::Index>(grid.size()));
  for (std::size_t m = 0; m < grid.size(); ++m) {
    y.col(static_cast<Eigen::Index>(m)) = w * std::polar(1.0, -2.0 * kPi * grid.frequency(m) * tau);
  }
  return y;
}

SceneConfig los_scene(const Layout& l, const Point2& ue) {
  SceneConfig s;
  s.bs = l.bs;
  s.ris = l.ris;
  s.fixed_ue = ue;
  s.clusters_bs = 0;
  s.clusters_ris = 0;
  return s;
}

// ----------------------------------------------------------------------------- geometry

Outcome two_element_steering() {
  const SubcarrierGrid grid(100e9, 0.0, 1);
  const ArrayGeometry a(2, half_wavelength(grid), 0.0, Point2::Zero());
  const CVector lib = far_steering(a, grid, 0, 0.5);
  CVector hand(2);
  hand << std::polar(1.0 / std::sqrt(2.0), -kPi / 4.0), std::polar(1.0 / std::sqrt(2.0), kPi / 4.0);
  const CVector ref = planar_steering(2, a.spacing(), grid.wavenumber(0), 0.5);
  const double e = std::max(max_abs_diff(lib, hand), max_abs_diff(lib, ref));
  return verdict(e < 1e-12, cat("max deviation ", e));
}

Outcome far_limit_of_near_steering() {
  const Layout l = layout(64, 1);
  const double k = l.grid.center_wavenumber();
  const double c = std::abs(near_steering_at(l.bs, k, 0.3, 1e6).dot(far_steering_at(l.bs, k, 0.3)));
  return verdict(c >= 1.0 - 1e-6, cat("|b^H a| = ", c));
}

Outcome near_steering_from_coordinates() {
  double worst = 0.0;
  Rng rng(11);
  for (std::size_t n : {std::size_t{3}, std::size_t{64}, std::size_t{256}}) {
    const Layout l = layout(n, 1);
    const double k = l.grid.center_wavenumber();
    for (int t = 0; t < 10; ++t) {
      const double theta = n == 3 && t == 0 ? 0.0 : -0.9 + 1.8 * uniform01(rng);
      const double r = n == 3 && t == 0 ? 5.0 : 2.0 + 80.0 * uniform01(rng);
      const CVector lib = near_steering_at(l.bs, k, theta, r);
      const CVector ref = spherical_steering(n, l.bs.spacing(), k, theta, r);
      worst = std::max(worst, max_abs_diff(lib, ref));
    }
  }
  return verdict(worst < 1e-9, cat("max deviation ", worst));
}

Outcome effective_rayleigh_scan() {
  const Layout l = layout(256, 1);
  const double k = l.grid.wavenumber(0);
  const EffectiveRayleigh lib = effective_rayleigh(l.bs, l.grid, 0, 0.5, 0.1);
  const double z = scan_crossing(
      [&](double r) { return planar_mismatch(256, l.bs.spacing(), k, 0.5, r); },
      classical_rayleigh(l.bs.aperture(), l.grid.center_wavelength()), l.bs.aperture(), 20000, 0.1);
  return verdict(std::abs(lib.distance - z) < 0.02,
                 cat("library ", lib.distance, " m, scan ", z, " m"));
}

// ----------------------------------------------------------------------------- channel

Outcome los_dominates_each_nlos_path() {
  const Layout l = layout(64, 16);
  SceneConfig cfg;
  cfg.bs = l.bs;
  cfg.ris = l.ris;
  std::size_t violations = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Scene scene = draw_scene(cfg, s);
    const ChannelRealization ch = synthesize_channel(scene, Link::kDirect, l.grid, s);
    const auto los = std::find_if(ch.paths.begin(), ch.paths.end(), [](auto& p) { return p.is_los; });
    for (const PathComponent& p : ch.paths) {
      if (p.is_los) continue;
      for (Eigen::Index m = 0; m < p.gains.size(); ++m) {
        if (std::norm(p.gains(m)) >= std::norm(los->gains(m))) ++violations;
      }
    }
  }
  return verdict(violations == 0, cat(violations, " NLoS gains at or above the LoS gain"));
}

Outcome bs_ris_channel_is_nearly_rank_one() {
  const Layout l = layout(64, 1);
  const CMatrix h = bs_ris_matrix(l.bs, l.ris, l.grid.center_wavenumber());
  Eigen::JacobiSVD<CMatrix> svd(h);
  const double ratio = svd.singularValues()(1) / svd.singularValues()(0);
  return verdict(ratio < 0.1, cat("sigma2/sigma1 = ", ratio));
}

// ----------------------------------------------------------------------------- dictionary

Outcome ptm_decorrelates_at_band_edge() {
  const Layout l = layout(256, 16);
  const PolarDictionary fsprd = build_fsprd(l.bs, l.grid, 1, 2, 0.1);
  const PolarDictionary ptm = build_ptm(l.bs, l.grid, 1, 2, 0.1);
  const std::size_t k = exhaustive_argmax(fsprd.size(), [&](std::size_t j) {
    return -std::abs(fsprd.params(j).theta - 0.5);
  });
  const double c = std::abs(ptm.atom(k, 0).dot(fsprd.atom(k, 0)));
  return verdict(c < 0.5, cat("|<PTM, FSPRD>| at the lower band edge = ", c));
}

Outcome appended_atom_beats_grid() {
  const Layout l = layout(64, 16);
  const PolarDictionary base = build_fsprd(l.bs, l.grid, 4, 2, 0.1);
  const double theta = 0.3217, r = 7.3;
  const auto [dict, idx] = append_atom(base, theta, r);
  std::size_t losses = 0;
  for (std::size_t m = 0; m < l.grid.size(); ++m) {
    const CVector h = spherical_steering(64, l.bs.spacing(), l.grid.wavenumber(m), theta, r);
    const std::size_t best =
        exhaustive_argmax(dict.size(), [&](std::size_t j) { return std::abs(dict.atom(j, m).dot(h)); });
    const double top = std::abs(dict.atom(best, m).dot(h));
    if (std::abs(dict.atom(idx, m).dot(h)) < top - 1e-12) ++losses;
  }
  return verdict(losses == 0, cat(losses, " subcarriers where a grid column correlates better"));
}

Outcome index_map_at_paper_size() {
  const Layout l = layout(256, 2);
  const PolarDictionary d = build_fsprd(l.bs, l.grid, 10, 2, 0.1, true);
  const double theta = grid_params(d, 5120).theta;
  const double expect = (2.0 * 512.0 - 1.0) / 512.0 - 1.0;
  return verdict(d.size() == 5120 && std::abs(theta - expect) < 1e-15,
                 cat("columns ", d.size(), ", theta(5120) = ", theta));
}

// ----------------------------------------------------------------------------- sounding

Outcome spread_combiner_is_flatter() {
  const Layout l = layout(64, 64);
  auto spread_of = [&](RisCombinerMode mode) {
    const CMatrixSeq w = build_w_ris(32, l.bs, l.ris, l.grid, 4, mode);
    CMatrix stacked(4 * 32, 64);
    for (std::size_t p = 0; p < w.size(); ++p) stacked.middleRows(static_cast<Eigen::Index>(p) * 4, 4) = w[p];
    double lo = 1e300, hi = 0.0;
    for (std::size_t m = 0; m < l.grid.size(); ++m) {
      const double e = (stacked * bs_ris_matrix(l.bs, l.ris, l.grid.wavenumber(m))).squaredNorm();
      lo = std::min(lo, e);
      hi = std::max(hi, e);
    }
    return hi / lo;
  };
  const double center = spread_of(RisCombinerMode::kCenterFrequency);
  const double spread = spread_of(RisCombinerMode::kSpread);
  return verdict(spread < center, cat("max/min energy: spread ", spread, ", center ", center));
}

// ----------------------------------------------------------------------------- estimation

struct OnGrid {
  PolarDictionary dict;
  CMatrix w;
};

OnGrid desk_on_grid() {
  const Layout l = layout(32, 16);
  const CMatrixSeq slots = build_w_nris(4, 32, 4, 5, false);
  CMatrix w(16, 32);
  for (std::size_t p = 0; p < 4; ++p) w.middleRows(static_cast<Eigen::Index>(p) * 4, 4) = slots[p];
  return {build_fsprd(l.bs, l.grid, 4, 1, 0.1), w};
}

CVectorSeq on_grid_pilots(const OnGrid& g, std::size_t k, Rng& rng, CVectorSeq* h_out) {
  CVectorSeq h;
  for (std::size_t m = 0; m < g.dict.subcarriers(); ++m) h.push_back(complex_normal(rng) * g.dict.atom(k, m));
  if (h_out != nullptr) *h_out = h;
  return combine(g.w, h);
}

Outcome first_iteration_matches_exhaustive() {
  const OnGrid g = desk_on_grid();
  const Sensing sensing = Sensing::shared(g.w);
  Rng rng(21);
  std::size_t misses = 0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, g.dict.size() - 1)(rng);
    const CVectorSeq y = on_grid_pilots(g, k, rng, nullptr);
    const std::size_t ref = exhaustive_argmax(g.dict.size(), [&](std::size_t j) {
      double s = 0.0;
      for (std::size_t m = 0; m < y.size(); ++m) {
        const AtomParams& p = g.dict.params(j);
        const double wn = g.dict.atom_wavenumber(m);
        const CVector a = p.range ? spherical_steering(32, g.dict.array().spacing(), wn, p.theta, *p.range)
                                  : planar_steering(32, g.dict.array().spacing(), wn, p.theta);
        const CVector sensed = g.w * a;
        s += std::norm(sensed.dot(y[m])) / sensed.squaredNorm();
      }
      return s;
    });
    if (first_iteration_index(y, sensing, g.dict) != k || ref != k) ++misses;
  }
  return verdict(misses == 0, cat(misses, " of 20 trials missed the generating column"));
}

Outcome exact_recovery() {
  const OnGrid g = desk_on_grid();
  const Sensing sensing = Sensing::shared(g.w);
  Rng rng(31);
  std::size_t misses = 0;
  double worst = -1e300;
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, g.dict.size() - 1)(rng);
    CVectorSeq h;
    const CVectorSeq y = on_grid_pilots(g, k, rng, &h);
    const EstimationResult r = gmmv_omp(y, sensing, g.dict, OmpConfig{});
    const double nmse = nmse_db(h, r.h_hat);
    worst = std::max(worst, nmse);
    if (!r.coarse_index || *r.coarse_index != k || nmse > -100.0) ++misses;
  }
  return verdict(misses == 0, cat(misses, " of 100 failed, worst NMSE ", worst, " dB"));
}

// ----------------------------------------------------------------------------- cdl

Outcome bearings_recover_ue() {
  const Layout l = layout(64, 1);
  auto sine = [](const ArrayGeometry& a, const Point2& p) {
    return a.axis().dot((p - a.reference()).normalized());
  };
  const Fix f = intersect_lines(sine(l.bs, kUe), sine(l.ris, kUe), l.bs, l.ris);
  const double e = (f.ue - kUe).norm();
  return verdict(e < 1e-9, cat("error ", e, " m"));
}

Outcome relative_phase_removes_common_phase() {
  const Layout l = layout(64, 16);
  const CMatrixSeq slots = build_w_nris(4, 64, 4, 3, true);
  CMatrix w(16, 64);
  for (std::size_t p = 0; p < 4; ++p) w.middleRows(static_cast<Eigen::Index>(p) * 4, 4) = slots[p];
  const PolarPoint pp = l.bs.polar_of(kUe);
  CVectorSeq a, b;
  for (std::size_t m = 0; m < l.grid.size(); ++m) {
    const CVector base = w * near_steering(l.bs, l.grid, m, pp.theta, pp.range);
    a.push_back(base * std::polar(1.0, -l.grid.wavenumber(m) * 17.0));
    b.push_back(base * std::polar(1.0, -l.grid.wavenumber(m) * 41.5));
  }
  const CVectorSeq ta = relative_phase_transform(a);
  const CVectorSeq tb = relative_phase_transform(b);
  double e = 0.0;
  for (std::size_t m = 0; m < ta.size(); ++m) e = std::max(e, max_abs_diff(ta[m].tail(15), tb[m].tail(15)));
  return verdict(e < 1e-10, cat("max deviation ", e));
}

struct LossSetup {
  Layout l;
  CMatrix w;
  PolarPoint truth;
  CVectorSeq ybar;
};

LossSetup loss_setup(std::size_t n, std::size_t m_full, std::size_t decimation, bool flat = false) {
  LossSetup s;
  const Layout full = layout(n, m_full);
  s.l = full;
  s.l.grid = full.grid.decimated(decimation);
  const CMatrixSeq slots = build_w_nris(16, n, 4, 9, true);
  s.w = CMatrix(64, static_cast<Eigen::Index>(n));
  for (std::size_t p = 0; p < 16; ++p) s.w.middleRows(static_cast<Eigen::Index>(p) * 4, 4) = slots[p];
  s.truth = s.l.bs.polar_of(kUe);
  s.ybar = relative_phase_transform(
      combine(s.w, los_channel(s.l.bs, s.l.grid, s.truth.theta, s.truth.range, flat)));
  return s;
}

Outcome loss_locally_convex() {
  const LossSetup s = loss_setup(64, 64, 1);
  const RelativePhaseLoss loss(s.ybar, s.w, s.l.bs, s.l.grid, s.truth.range);
  const double step = 2.0 / (2.0 * 64.0);
  const double v0 = loss.value(s.truth.theta);
  const double vl = loss.value(s.truth.theta - step);
  const double vr = loss.value(s.truth.theta + step);
  return verdict(v0 < vl && v0 < vr, cat("v(theta) ", v0, ", neighbours ", vl, ", ", vr));
}

Outcome minimizer_ignores_range_error() {
  const LossSetup s = loss_setup(256, 2048, 32);
  const double h = 2.0 / (2.0 * 256.0);
  auto argmin = [&](double r) {
    const RelativePhaseLoss loss(s.ybar, s.w, s.l.bs, s.l.grid, r);
    return golden_section_min([&](double t) { return loss.value(t); }, s.truth.theta - h,
                              s.truth.theta + h, 1e-12);
  };
  const double t0 = argmin(s.truth.range);
  const double shift = std::max(std::abs(argmin(1.2 * s.truth.range) - t0),
                                std::abs(argmin(0.8 * s.truth.range) - t0));
  return verdict(shift < 1e-3, cat("minimizer shift ", shift));
}

Outcome pgd_matches_golden_section() {
  const LossSetup s = loss_setup(65, 64, 1, true);
  const RelativePhaseLoss loss(s.ybar, s.w, s.l.bs, s.l.grid, s.truth.range);
  const double step = 2.0 / (2.0 * 65.0);
  const PgdResult pgd = pgd_refine(loss, s.truth.theta + step, PgdConfig{});
  const double gold = golden_section_min([&](double t) { return loss.value(t); },
                                         s.truth.theta - 2.0 * step, s.truth.theta + 2.0 * step, 1e-12);
  const double e = std::abs(pgd.theta - s.truth.theta);
  return verdict(e < 1e-6 && std::abs(gold - s.truth.theta) < 1e-6,
                 cat("PGD error ", e, ", golden-section error ", std::abs(gold - s.truth.theta)));
}

Outcome gradient_matches_finite_differences() {
  const LossSetup s = loss_setup(64, 64, 1);
  Rng rng(41);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const double theta = -0.8 + 1.6 * uniform01(rng);
    const double r = 3.0 + 60.0 * uniform01(rng);
    const RelativePhaseLoss loss(s.ybar, s.w, s.l.bs, s.l.grid, r);
    const double g = loss.gradient(theta);
    const double fd = central_difference([&](double x) { return loss.value(x); }, theta, 1e-6);
    worst = std::max(worst, std::abs(g - fd) / std::max(std::abs(fd), 1e-300));
  }
  return verdict(worst < 1e-5, cat("worst relative error ", worst));
}

struct RisSetup {
  Layout l;
  CVectorSeq y;
  Sensing sensing;
  PolarPoint truth;
};

RisSetup ris_setup(std::size_t n, double theta, double range) {
  RisSetup s{layout(n, 16), {}, {}, {theta, range}};
  const BsRisChannel hbr(s.l.bs, s.l.ris, s.l.grid);
  SoundingFrame f;
  f.w_ris = build_w_ris(32, s.l.bs, s.l.ris, s.l.grid, 4, RisCombinerMode::kSpread);
  f.ris_phases = build_ris_phases(32, n, 7);
  const CVectorSeq zero(s.l.grid.size(), CVector::Zero(static_cast<Eigen::Index>(n)));
  s.y = receive_reflected(los_channel(s.l.ris, s.l.grid, theta, range), zero, hbr, f, 1);
  s.sensing = Sensing::per_subcarrier(f.stacked_ris_all(hbr));
  return s;
}

Outcome phd_level_count() {
  PhdConfig cfg;
  std::size_t k = 1;
  while (2.0 / (512.0 * std::pow(20.0, static_cast<double>(k))) >= cfg.stop_span) ++k;
  const double theta = (2.0 * 300.0 - 511.0) / 512.0;
  const RisSetup s = ris_setup(256, theta, 20.0);
  const PhdResult r = phd_refine(s.y, s.sensing, s.l.ris, s.l.grid, theta, 20.0, cfg);
  return verdict(k == 2 && r.levels == 2, cat("formula ", k, " levels, refine ran ", r.levels));
}

Outcome phd_levels_bracket_truth() {
  PhdConfig cfg;
  const double theta = (2.0 * 80.0 - 127.0) / 128.0;
  const RisSetup s = ris_setup(64, theta, 12.0);
  const PhdResult r = phd_refine(s.y, s.sensing, s.l.ris, s.l.grid, theta, 12.0, cfg);
  bool ok = std::abs(r.theta - theta) < cfg.stop_span;
  for (std::size_t lv = 1; lv < r.centers.size(); ++lv) {
    ok = ok && std::abs(r.centers[lv] - theta) <= phd_half_span(64, cfg, lv + 1) + 1e-15;
  }
  return verdict(ok, cat("final error ", std::abs(r.theta - theta), " over ", r.levels, " levels"));
}

struct CdlRun {
  LocationEstimate est;
  Point2 ue;
};

// Noise-free CDL on LoS-only pilots. With flat set, the pilots follow the CDL models exactly:
// flat magnitudes (exact for odd arrays) and no direct path in the RIS-on slots.
CdlRun cdl_noise_free(const Layout& l, const SceneConfig& cfg, bool flat, std::uint64_t seed) {
  const Scene scene = draw_scene(cfg, seed);
  const ChannelRealization bu = synthesize_channel(scene, Link::kDirect, l.grid, seed + 1);
  const ChannelRealization ru = synthesize_channel(scene, Link::kReflected, l.grid, seed + 2);
  const CVectorSeq h_bu = flat ? flat_magnitude(bu) : bu.per_subcarrier;
  const CVectorSeq h_ru = flat ? flat_magnitude(ru) : ru.per_subcarrier;
  const BsRisChannel hbr(l.bs, l.ris, l.grid);
  const std::size_t n = l.bs.size();
  SoundingFrame f;
  f.w_nris = build_w_nris(16, n, 4, seed + 3, true);
  f.w_ris = build_w_ris(32, l.bs, l.ris, l.grid, 4, RisCombinerMode::kSpread);
  f.ris_phases = build_ris_phases(32, n, seed + 4);
  PilotObservation obs = receive(h_bu, h_ru, hbr, f, seed + 5);
  // The exact model also drops the direct path from the RIS-on slots.
  if (flat) {
    const CVectorSeq none(h_bu.size(), CVector::Zero(h_bu.front().size()));
    obs.y_ris = receive(none, h_ru, hbr, f, seed + 5).y_ris;
  }
  const PolarDictionary dbs = build_fsprd(l.bs, l.grid, 4, 2, 0.1);
  const PolarDictionary dris = build_fsprd(l.ris, l.grid, 4, 2, 0.1);
  const CMatrix w = f.stacked_nris();
  const Sensing sn = Sensing::shared(w);
  const Sensing sr = Sensing::per_subcarrier(f.stacked_ris_all(hbr));
  CdlInputs in;
  in.y_nris = &obs.y_nris;
  in.w_nris = &w;
  in.y_ris = &obs.y_ris;
  in.sensing_ris = &sr;
  in.dict_bs = &dbs;
  in.dict_ris = &dris;
  in.i_nris = first_iteration_index(obs.y_nris, sn, dbs);
  in.i_ris = first_iteration_index(obs.y_ris, sr, dris);
  in.bs = &l.bs;
  in.ris = &l.ris;
  in.grid = &l.grid;
  return {cdl(in, CdlConfig{}), scene.ue};
}

Outcome cdl_noise_free_fix() {
  const Layout l = layout(65, 64);
  // UE on an RIS grid angle, so the hierarchical search can land on it exactly.
  const double theta_ru = (2.0 * 80.0 - 129.0) / 130.0;
  const CdlRun r = cdl_noise_free(l, los_scene(l, l.ris.point_at(theta_ru, 12.0)), true, 3);
  const double e = (r.est.fix.ue - r.ue).norm();
  return verdict(e < 1e-4, cat("error ", e, " m (coarse ", (r.est.coarse->ue - r.ue).norm(), " m)"));
}

Outcome cdl_refinement_not_worse() {
  const Layout l = layout(65, 64);
  SceneConfig cfg = los_scene(l, kUe);
  cfg.fixed_ue.reset();
  std::size_t worse = 0, runs = 0, failed = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    try {
      const CdlRun r = cdl_noise_free(l, cfg, true, 100 + 10 * s);
      ++runs;
      if ((r.est.fix.ue - r.ue).norm() > (r.est.coarse->ue - r.ue).norm() + 1e-9) ++worse;
    } catch (const Error&) {
      ++failed;
    }
  }
  return verdict(worse == 0 && runs > 0,
                 cat(worse, " of ", runs, " scenes got worse, ", failed, " without a coarse fix"));
}

// ----------------------------------------------------------------------------- pdl

Outcome denoised_autocorr_concentrates() {
  // Desk PDL frame: 8 slots of 4 RF chains on 64 elements.
  const CMatrixSeq w = build_w_nris(8, 64, 4, 2, false);
  SoundingFrame f;
  f.w_nris = w;
  f.noise_power = 1.0;
  const double trace = combined_noise_trace(w, 1.0);
  const CVectorSeq zero(32, CVector::Zero(64));
  CMatrix mean = CMatrix::Zero(32, 32);
  for (std::uint64_t d = 0; d < 100; ++d) {
    mean += denoised_autocorr(stack_frequency(receive_direct(zero, f, d)), trace) / 100.0;
  }
  const double bound = 0.2 * trace * std::sqrt(32.0);
  return verdict(mean.norm() < bound, cat("||mean|| ", mean.norm(), " vs bound ", bound));
}

Outcome projector_annihilates_true_delay() {
  const SubcarrierGrid grid(100e9, 10e9, 32);
  Rng rng(4);
  const double tau = 37.3e-9;
  const CMatrix y = single_delay_pilots(grid, tau, 8, rng);
  const NoiseProjector p(denoised_autocorr(y, 0.0), 1);
  const CVector a = delay_vector(grid, tau);
  const double ratio = std::sqrt(p.quadratic(a)) / a.norm();
  return verdict(ratio < 1e-6, cat("||P a|| / ||a|| = ", ratio));
}

Outcome projector_matches_evd() {
  const SubcarrierGrid grid(100e9, 10e9, 32);
  Rng rng(5);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const double tau = 100e-9 * uniform01(rng);
    const CMatrix y = single_delay_pilots(grid, tau, 8, rng);
    const CMatrix yt = denoised_autocorr(y, 0.0);
    const CMatrix ref = evd_noise_projector(yt, 1);
    worst = std::max(worst, (NoiseProjector(yt, 1).dense() - ref).norm());
    worst = std::max(worst, (NoiseProjector::from_pilots(y, 0.0, 1).dense() - ref).norm());
  }
  return verdict(worst < 1e-8, cat("worst ||P_G - P_EVD||_F ", worst));
}

Outcome delay_on_grid_recovered() {
  const SubcarrierGrid grid(100e9, 10e9, 32);
  Rng rng(6);
  const double period = 1.0 / grid.spacing();
  const double tau = 37.0 * period / 128.0;
  const CMatrix y = single_delay_pilots(grid, tau, 8, rng);
  const NoiseProjector p(denoised_autocorr(y, 0.0), 1);
  DelaySearch search;
  search.tau_max = period;
  const DelayEstimate est = delay_estimate(p, grid, search);
  const double e = std::abs(est.tau - tau);
  return verdict(e <= est.resolution, cat("error ", e, " s, resolution ", est.resolution, " s"));
}

Outcome spectrum_contrast() {
  const SubcarrierGrid grid(100e9, 10e9, 32);
  Rng rng(7);
  const double period = 1.0 / grid.spacing();
  const double tau = 0.3 * period;
  const CMatrix y = single_delay_pilots(grid, tau, 8, rng);
  const NoiseProjector p(denoised_autocorr(y, 0.0), 1);
  const double peak = delay_spectrum(p, grid, tau);
  const double far = delay_spectrum(p, grid, tau + 0.5 * period);
  const double db = 10.0 * std::log10(peak / far);
  return verdict(db >= 20.0, cat("contrast ", db, " dB"));
}

Outcome hyperbola_through_truth() {
  const double r_bu = (kUe - kBs).norm(), r_ru = (kUe - kRis).norm(), r_br = (kRis - kBs).norm();
  const Hyperbola h = tdoa_hyperbola(r_bu / kSpeedOfLight, (r_ru + r_br) / kSpeedOfLight, r_br, kBs, kRis);
  const double tdoa_err = std::abs(h.tdoa - (r_bu - r_ru) / kSpeedOfLight) * kSpeedOfLight;
  const double res = std::abs(h.residual(kUe));
  return verdict(res < 1e-9 && tdoa_err < 1e-9, cat("residual ", res, ", TDoA error ", tdoa_err, " m"));
}

Outcome ray_through_ue_wins() {
  const Layout full = layout(64, 2048);
  const SubcarrierGrid grid = full.grid.decimated(32);
  const double r_bu = (kUe - kBs).norm(), r_ru = (kUe - kRis).norm(), r_br = (kRis - kBs).norm();
  const Hyperbola h = tdoa_hyperbola(r_bu / kSpeedOfLight, (r_ru + r_br) / kSpeedOfLight, r_br, kBs, kRis);
  const PolarPoint truth = full.bs.polar_of(kUe);
  const double dtheta = 0.01;
  const std::size_t j = 23;
  const HyperbolaDictionary hd =
      hyperbola_dictionary(h, full.bs, grid, 64, truth.theta - static_cast<double>(j) * dtheta, dtheta);
  const CMatrixSeq slots = build_w_nris(8, 64, 4, 12, true);
  CMatrix w(32, 64);
  for (std::size_t p = 0; p < 8; ++p) w.middleRows(static_cast<Eigen::Index>(p) * 4, 4) = slots[p];
  const CVectorSeq y = combine(w, los_channel(full.bs, grid, truth.theta, truth.range));
  const std::size_t win = coarse_aoa_on_hyperbola(y, w, hd.dict);
  const double won = hd.ray_theta.at(win);
  return verdict(std::abs(won - truth.theta) < 1e-12, cat("winning ray theta ", won, ", true ", truth.theta));
}

Outcome bearing_and_hyperbola_recover_ue() {
  const Layout l = layout(64, 1);
  const double r_bu = (kUe - kBs).norm(), r_ru = (kUe - kRis).norm(), r_br = (kRis - kBs).norm();
  const Hyperbola h = tdoa_hyperbola(r_bu / kSpeedOfLight, (r_ru + r_br) / kSpeedOfLight, r_br, kBs, kRis);
  const PolarPoint truth = l.bs.polar_of(kUe);
  const RayFix fix = line_hyperbola_intersect(truth.theta, h, l.bs);
  const Point2 ref = ray_range_difference(kBs, l.bs.direction(truth.theta), kBs, kRis, r_bu - r_ru, 200.0);
  const double e = (fix.ue - kUe).norm();
  return verdict(e < 1e-9 && (ref - kUe).norm() < 1e-7,
                 cat("error ", e, " m, scan oracle error ", (ref - kUe).norm(), " m"));
}

Outcome pdl_with_oracle_delays() {
  const Layout l = layout(65, 2048);
  SceneConfig cfg = los_scene(l, kUe);
  // Put the UE on one of the rays of the partial dictionary.
  const auto [lo, dtheta] = sector_ray_fan(cfg, l.bs, 64);
  const double theta_bu = lo + 40.0 * dtheta;
  cfg.fixed_ue = l.bs.point_at(theta_bu, 15.0);
  const Point2 ue = *cfg.fixed_ue;
  const Scene scene = draw_scene(cfg, 1);
  const CVectorSeq h_bu = flat_magnitude(synthesize_channel(scene, Link::kDirect, l.grid, 2));
  const CVectorSeq h_ru = flat_magnitude(synthesize_channel(scene, Link::kReflected, l.grid, 3));
  const BsRisChannel hbr(l.bs, l.ris, l.grid);
  SoundingFrame f;
  f.w_nris = build_w_nris(8, 65, 4, 4, true);
  f.w_ris = build_w_ris(16, l.bs, l.ris, l.grid, 4, RisCombinerMode::kSpread);
  f.ris_phases = build_ris_phases(16, 65, 5);
  const PilotObservation obs = receive(h_bu, h_ru, hbr, f, 6);
  PdlInputs in;
  in.y_nris = &obs.y_nris;
  in.y_ris = &obs.y_ris;
  in.frame = &f;
  in.full_grid = &l.grid;
  in.decimation = 32;
  in.bs = &l.bs;
  in.ris = &l.ris;
  in.sector = &cfg;
  const double r_bu = (ue - kBs).norm(), r_ru = (ue - kRis).norm(), r_br = (kRis - kBs).norm();
  in.tau_nris = r_bu / kSpeedOfLight;
  in.tau_ris = (r_ru + r_br) / kSpeedOfLight;
  const PdlResult r = pdl(in, PdlConfig{});
  const double e = (r.location.fix.ue - ue).norm();
  return verdict(e < 1e-6, cat("error ", e, " m"));
}

Outcome cdl_beats_pdl_at_high_power() {
  ExperimentConfig cfg = desk_profile();
  cfg.run_ce = false;
  cfg.sweep_values = {45.0};
  cfg.trials = 100;
  cfg.seed = 11;
  std::size_t wins = 0, compared = 0;
  for (const TrialRecord& r : run_experiment(cfg)) {
    const double c = r.metric("cdl_pos"), p = r.metric("pdl_pos");
    if (std::isnan(c) || std::isnan(p)) continue;
    ++compared;
    if (c <= p) ++wins;
  }
  return verdict(compared == 100 && wins >= 80, cat("CDL no worse in ", wins, " of ", compared, " trials"));
}

}  // namespace

const std::vector<NamedCheck>& derived_checks() {
  static const std::vector<NamedCheck> checks{
      {"two-element steering by hand", "geometry", false, two_element_steering},
      {"near steering tends to far steering", "geometry", false, far_limit_of_near_steering},
      {"near steering from element coordinates", "geometry", false, near_steering_from_coordinates},
      {"effective Rayleigh distance by scan", "geometry", false, effective_rayleigh_scan},
      {"LoS dominates every NLoS path", "channel", false, los_dominates_each_nlos_path},
      {"BS/RIS channel nearly rank one", "channel", false, bs_ris_channel_is_nearly_rank_one},
      {"PTM decorrelates at the band edge", "dictionary", false, ptm_decorrelates_at_band_edge},
      {"appended atom beats the grid", "dictionary", false, appended_atom_beats_grid},
      {"index map at paper size", "dictionary", false, index_map_at_paper_size},
      {"spread combiner flatter than center", "sounding", false, spread_combiner_is_flatter},
      {"first iteration matches exhaustive scoring", "estimation", false,
       first_iteration_matches_exhaustive},
      {"exact recovery of an on-grid path", "estimation", false, exact_recovery},
      {"exact bearings recover the UE", "localization-cdl", false, bearings_recover_ue},
      {"relative phase removes the common phase", "localization-cdl", false,
       relative_phase_removes_common_phase},
      {"loss locally convex at grid scale", "localization-cdl", false, loss_locally_convex},
      {"minimizer ignores a 20% range error", "localization-cdl", false, minimizer_ignores_range_error},
      {"PGD matches golden-section search", "localization-cdl", false, pgd_matches_golden_section},
      {"gradient matches finite differences", "localization-cdl", false,
       gradient_matches_finite_differences},
      {"hierarchical refinement level count", "localization-cdl", false, phd_level_count},
      {"hierarchical levels bracket the truth", "localization-cdl", false, phd_levels_bracket_truth},
      {"noise-free LoS fix", "localization-cdl", false, cdl_noise_free_fix},
      {"refinement never worse noise-free", "localization-cdl", true, cdl_refinement_not_worse},
      {"denoised autocorrelation concentrates", "localization-pdl", false,
       denoised_autocorr_concentrates},
      {"projector annihilates the true delay", "localization-pdl", false,
       projector_annihilates_true_delay},
      {"projector matches the EVD route", "localization-pdl", false, projector_matches_evd},
      {"on-grid delay recovered", "localization-pdl", false, delay_on_grid_recovered},
      {"delay spectrum contrast", "localization-pdl", false, spectrum_contrast},
      {"hyperbola passes through the UE", "localization-pdl", false, hyperbola_through_truth},
      {"ray through the UE wins", "localization-pdl", false, ray_through_ue_wins},
      {"bearing and hyperbola recover the UE", "localization-pdl", false,
       bearing_and_hyperbola_recover_ue},
      {"PDL with oracle delays", "localization-pdl", false, pdl_with_oracle_delays},
      {"CDL no worse than PDL at high power", "localization-pdl", true, cdl_beats_pdl_at_high_power},
  };
  return checks;
}

}  // namespace thzloc::oracle
