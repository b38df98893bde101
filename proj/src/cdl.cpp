#include "thzloc/cdl.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace thzloc {

namespace {

constexpr double kDivisionGuard = 1e-15;
constexpr double kParallelGuard = 1e-12;
constexpr double kThetaLimit = 1.0 - 1e-12;

bool near_vertical(double bearing) { return std::abs(std::cos(bearing)) < 1e-12; }

void check_ahead(const ArrayGeometry& a, double theta, const Point2& p, const char* who) {
  if (a.direction(theta).dot(p - a.reference()) <= 0.0) {
    std::ostringstream os;
    os << "intersection lies behind the " << who;
    throw DegenerateGeometry(os.str());
  }
}

}  // namespace

void PgdConfig::validate() const {
  if (max_iters < 1 || !(stop_step > 0.0) || !(armijo_c > 0.0) || !(initial_step > 0.0)) {
    throw ConfigError("PGD parameters must be positive");
  }
  if (!(backtrack > 0.0 && backtrack < 1.0)) throw ConfigError("backtrack factor must lie in (0, 1)");
}

void PhdConfig::validate() const {
  if (candidates < 3 || candidates % 2 == 0) throw ConfigError("N_PHD must be odd and at least 3");
  if (!(stop_span > 0.0) || redundancy < 1 || max_levels < 1) {
    throw ConfigError("PHD parameters must be positive");
  }
}

std::pair<double, double> coarse_angles(std::size_t i_nris, std::size_t i_ris,
                                        const PolarDictionary& dict_bs,
                                        const PolarDictionary& dict_ris) {
  return {grid_params(dict_bs, i_nris).theta, grid_params(dict_ris, i_ris).theta};
}

double bearing_slope(const ArrayGeometry& array, double theta) {
  return std::tan(array.bearing(theta));
}

Fix intersect_lines(double theta_bu, double theta_ru, const ArrayGeometry& bs,
                    const ArrayGeometry& ris) {
  for (double t : {theta_bu, theta_ru}) {
    if (!(t > -1.0 && t < 1.0)) throw DomainError("sine-angle outside (-1, 1)");
  }
  const double xb = bs.reference().x(), yb = bs.reference().y();
  const double xr = ris.reference().x(), yr = ris.reference().y();
  const double pb = bs.bearing(theta_bu);
  const double pr = ris.bearing(theta_ru);

  Point2 ue;
  if (near_vertical(pb) && near_vertical(pr)) {
    throw NoIntersection("bearing lines are parallel");
  } else if (near_vertical(pb)) {
    ue = {xb, yr + std::tan(pr) * (xb - xr)};
  } else if (near_vertical(pr)) {
    ue = {xr, yb + std::tan(pb) * (xr - xb)};
  } else {
    const double kb = std::tan(pb);
    const double kr = std::tan(pr);
    if (std::abs(kb - kr) < kParallelGuard) throw NoIntersection("bearing lines are parallel");
    const double x = (yr - yb + kb * xb - kr * xr) / (kb - kr);
    // Evaluate y on the flatter line.
    const double y = std::abs(kb) <= std::abs(kr) ? yb + kb * (x - xb) : yr + kr * (x - xr);
    ue = {x, y};
  }
  check_ahead(bs, theta_bu, ue, "BS");
  check_ahead(ris, theta_ru, ue, "RIS");
  return {ue, theta_bu, theta_ru, (ue - bs.reference()).norm(), (ue - ris.reference()).norm()};
}

CVectorSeq relative_phase_transform(const CVectorSeq& y) {
  if (y.empty()) return {};
  const Eigen::Index rows = y.front().size();
  for (std::size_t m = 0; m < y.size(); ++m) {
    if (y[m].size() != rows) throw DimensionError("pilot length varies across subcarriers");
    if (rows == 0 || std::abs(y[m](0)) < kDivisionGuard) {
      std::ostringstream os;
      os << "reference pilot vanishes on subcarrier " << m;
      throw NumericError(os.str());
    }
  }
  CVectorSeq out = y;
  for (Eigen::Index i = 1; i < rows; ++i) {
    double raw = 0.0;
    double ratio = 0.0;
    for (std::size_t m = 0; m < y.size(); ++m) {
      out[m](i) = y[m](i) / y[m](0);
      raw += std::norm(y[m](i));
      ratio += std::norm(out[m](i));
    }
    const double s = ratio > 0.0 ? std::sqrt(raw / ratio) : 0.0;
    for (std::size_t m = 0; m < y.size(); ++m) out[m](i) *= s;
  }
  return out;
}

RelativePhaseLoss::RelativePhaseLoss(CVectorSeq ybar, const CMatrix& w, ArrayGeometry array,
                                     SubcarrierGrid grid, double range, GainMode mode,
                                     RVector friis_magnitude)
    : ybar_(std::move(ybar)),
      array_(std::move(array)),
      grid_(std::move(grid)),
      range_(range),
      mode_(mode),
      friis_(std::move(friis_magnitude)) {
  if (w.rows() < 2) throw DimensionError("combiner needs a reference row and at least one more");
  if (ybar_.size() != grid_.size()) throw DimensionError("subcarrier count mismatch");
  if (w.cols() != static_cast<Eigen::Index>(array_.size())) throw DimensionError("combiner width");
  if (!(range_ > 0.0)) throw DomainError("range must be positive");
  if (mode_ == GainMode::kFriis && friis_.size() != static_cast<Eigen::Index>(grid_.size())) {
    throw DimensionError("Friis magnitudes must cover every subcarrier");
  }
  w_ref_ = w.row(0).transpose();
  w_rest_ = w.bottomRows(w.rows() - 1);
  for (auto& v : ybar_) {
    if (v.size() != w.rows()) throw DimensionError("pilot length does not match combiner");
    v = v.tail(v.size() - 1).eval();
    scale_ += v.squaredNorm();
  }
}

double RelativePhaseLoss::evaluate(double theta, double* grad) const {
  if (!(theta > -1.0 && theta < 1.0)) throw DomainError("sine-angle outside (-1, 1)");
  const auto n = static_cast<Eigen::Index>(array_.size());
  double v = 0.0;
  double g = 0.0;
  for (std::size_t m = 0; m < ybar_.size(); ++m) {
    const double k = grid_.wavenumber(m);
    const CVector b = near_steering<double>(n, array_.spacing(), k, theta, range_);
    const CVector u = w_rest_ * b;
    const CVector& y = ybar_[m];
    Complex alpha;
    Complex dalpha(0.0, 0.0);
    CVector db;
    if (grad != nullptr || mode_ == GainMode::kFriis) {
      db = near_steering_dtheta<double>(n, array_.spacing(), k, theta, range_);
    }
    if (mode_ == GainMode::kLeastSquares) {
      const double uu = u.squaredNorm();
      alpha = uu > 0.0 ? u.dot(y) / uu : Complex(0.0, 0.0);
    } else {
      const Complex s = w_ref_.transpose() * b;
      const double as = std::abs(s);
      alpha = as > 0.0 ? friis_(static_cast<Eigen::Index>(m)) * std::conj(s) / as : Complex(0.0, 0.0);
      if (as > 0.0) {
        const Complex ds = w_ref_.transpose() * db;
        dalpha = alpha * Complex(0.0, -(ds / s).imag());
      }
    }
    const CVector r = y - alpha * u;
    v += r.squaredNorm();
    if (grad != nullptr) {
      // At the least-squares gain the alpha-derivative term vanishes.
      const CVector du = w_rest_ * db;
      const CVector dmodel = alpha * du + dalpha * u;
      g += -2.0 * r.dot(dmodel).real();
    }
  }
  if (grad != nullptr) *grad = g;
  return v;
}

double RelativePhaseLoss::value(double theta) const { return evaluate(theta, nullptr); }

double RelativePhaseLoss::gradient(double theta) const {
  double g = 0.0;
  evaluate(theta, &g);
  return g;
}

PgdResult pgd_refine(const RelativePhaseLoss& loss, double theta0, const PgdConfig& cfg) {
  cfg.validate();
  const double scale = loss.scale() > 0.0 ? loss.scale() : 1.0;
  PgdResult out;
  out.theta = theta0;
  double f = loss.value(theta0) / scale;
  out.loss_history.push_back(f);
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    const double g = loss.gradient(out.theta) / scale;
    if (!std::isfinite(g)) throw NumericError("non-finite PGD gradient", out.loss_history);
    out.iterations = it;
    if (g == 0.0) {
      out.final_step = 0.0;
      out.converged = true;
      break;
    }
    double delta = cfg.initial_step;
    double candidate = out.theta;
    double f_new = f;
    bool accepted = false;
    while (delta * std::abs(g) > 1e-18) {
      candidate = out.theta - delta * g;
      if (candidate > -1.0 && candidate < 1.0) {
        f_new = loss.value(candidate) / scale;
        if (f_new <= f - cfg.armijo_c * delta * g * g) {
          accepted = true;
          break;
        }
      }
      delta *= cfg.backtrack;
    }
    if (!accepted) {
      out.final_step = 0.0;
      out.converged = true;
      break;
    }
    out.final_step = std::abs(candidate - out.theta);
    out.theta = candidate;
    f = f_new;
    out.loss_history.push_back(f);
    if (out.final_step < cfg.stop_step) {
      out.converged = true;
      break;
    }
  }
  return out;
}

double phd_half_span(std::size_t num_ris, const PhdConfig& cfg, std::size_t level) {
  const double q = static_cast<double>(cfg.candidates - 1) / 2.0;
  return 1.0 / (static_cast<double>(cfg.redundancy * num_ris) *
                std::pow(q, static_cast<double>(level) - 1.0));
}

std::vector<double> phd_candidates(double center, std::size_t num_ris, const PhdConfig& cfg,
                                   std::size_t level, bool* clamped) {
  const double h = phd_half_span(num_ris, cfg, level);
  std::vector<double> out(cfg.candidates);
  for (std::size_t i = 0; i < cfg.candidates; ++i) {
    double t = center - h + 2.0 * static_cast<double>(i) * h / static_cast<double>(cfg.candidates - 1);
    if (t >= kThetaLimit || t <= -kThetaLimit) {
      t = std::clamp(t, -kThetaLimit, kThetaLimit);
      if (clamped != nullptr) *clamped = true;
    }
    out[i] = t;
  }
  return out;
}

PhdResult phd_refine(const CVectorSeq& y_ris, const Sensing& sensing_ris, const ArrayGeometry& ris,
                     const SubcarrierGrid& grid, double theta0, double r0, const PhdConfig& cfg) {
  cfg.validate();
  if (y_ris.size() != grid.size()) throw DimensionError("subcarrier count mismatch");
  if (!(r0 > 0.0)) throw DomainError("range must be positive");
  const auto n = static_cast<Eigen::Index>(ris.size());
  PhdResult out;
  out.theta = theta0;
  out.centers.push_back(theta0);
  for (std::size_t level = 1; level <= cfg.max_levels; ++level) {
    const std::vector<double> cand = phd_candidates(out.theta, ris.size(), cfg, level, &out.clamped);
    std::vector<double> score(cand.size(), 0.0);
    for (std::size_t m = 0; m < grid.size(); ++m) {
      const double k = grid.wavenumber(m);
      const CMatrix& a = sensing_ris.at(m);
      CMatrix atoms(n, static_cast<Eigen::Index>(cand.size()));
      for (std::size_t i = 0; i < cand.size(); ++i) {
        atoms.col(static_cast<Eigen::Index>(i)) = near_steering<double>(n, ris.spacing(), k, cand[i], r0);
      }
      const CMatrix sensed = a * atoms;
      const CVector corr = sensed.adjoint() * y_ris[m];
      for (std::size_t i = 0; i < cand.size(); ++i) {
        const double nn = sensed.col(static_cast<Eigen::Index>(i)).squaredNorm();
        if (nn > 0.0) score[i] += std::norm(corr(static_cast<Eigen::Index>(i))) / nn;
      }
    }
    const auto best = static_cast<std::size_t>(std::max_element(score.begin(), score.end()) - score.begin());
    out.theta = cand[best];
    out.centers.push_back(out.theta);
    out.levels = level;
    if (2.0 * phd_half_span(ris.size(), cfg, level + 1) < cfg.stop_span) break;
  }
  return out;
}

LocationEstimate cdl(const CdlInputs& in, const CdlConfig& cfg) {
  const auto [theta_bu0, theta_ru0] =
      coarse_angles(in.i_nris + 1, in.i_ris + 1, *in.dict_bs, *in.dict_ris);
  const Fix coarse = intersect_lines(theta_bu0, theta_ru0, *in.bs, *in.ris);

  LocationEstimate est;
  est.fix = coarse;
  est.coarse = coarse;
  est.stage = Stage::kCoarse;
  try {
    const CVectorSeq ybar = relative_phase_transform(*in.y_nris);
    RVector friis;
    if (cfg.gain_mode == GainMode::kFriis) {
      friis.resize(static_cast<Eigen::Index>(in.grid->size()));
      for (std::size_t m = 0; m < in.grid->size(); ++m) {
        friis(static_cast<Eigen::Index>(m)) =
            in.pilot_amp * std::abs(los_gain(*in.grid, m, coarse.r_bu, in.budget, 0.0));
      }
    }
    const RelativePhaseLoss loss(ybar, *in.w_nris, *in.bs, *in.grid, coarse.r_bu, cfg.gain_mode,
                                 friis);
    const PgdResult pgd = pgd_refine(loss, theta_bu0, cfg.pgd);
    est.pgd_iters = pgd.iterations;
    est.pgd_final_step = pgd.final_step;
    est.loss_history = pgd.loss_history;

    const PhdResult phd =
        phd_refine(*in.y_ris, *in.sensing_ris, *in.ris, *in.grid, theta_ru0, coarse.r_ru, cfg.phd);
    est.phd_levels = phd.levels;
    est.phd_clamped = phd.clamped;

    est.fix = intersect_lines(pgd.theta, phd.theta, *in.bs, *in.ris);
    est.stage = Stage::kRefined;
  } catch (const Error& e) {
    est.fix = coarse;
    est.stage = Stage::kCoarse;
    est.fallback = true;
    est.note = e.what();
  }
  return est;
}

JointResult joint_sense(const CVectorSeq& y_nris, const CMatrix& w_nris, const CVectorSeq& y_ris,
                        const Sensing& sensing_ris, const PolarDictionary& dict_bs,
                        const PolarDictionary& dict_ris, const ArrayGeometry& bs,
                        const ArrayGeometry& ris, const SubcarrierGrid& grid,
                        const OmpConfig& omp, const CdlConfig& cfg,
                        const std::vector<RVector>* norms_bu,
                        const std::vector<RVector>* norms_ris) {
  const Sensing sensing_nris = Sensing::shared(w_nris);
  JointResult out;
  CdlInputs in;
  in.y_nris = &y_nris;
  in.w_nris = &w_nris;
  in.y_ris = &y_ris;
  in.sensing_ris = &sensing_ris;
  in.dict_bs = &dict_bs;
  in.dict_ris = &dict_ris;
  in.i_nris = first_iteration_index(y_nris, sensing_nris, dict_bs, omp.normalize_columns, norms_bu);
  in.i_ris = first_iteration_index(y_ris, sensing_ris, dict_ris, omp.normalize_columns, norms_ris);
  in.bs = &bs;
  in.ris = &ris;
  in.grid = &grid;
  try {
    out.location = cdl(in, cfg);
  } catch (const Error& e) {
    out.location_error = e.what();
  }

  OmpConfig bu_cfg = omp;
  OmpConfig ru_cfg = omp;
  bu_cfg.column_norms = norms_bu;
  ru_cfg.column_norms = norms_ris;
  if (out.location) {
    const Fix f = out.location->fix;
    bu_cfg.hook = [f](std::size_t, const PolarDictionary&) {
      return std::optional<AtomParams>(AtomParams{f.theta_bu, f.r_bu});
    };
    ru_cfg.hook = [f](std::size_t, const PolarDictionary&) {
      return std::optional<AtomParams>(AtomParams{f.theta_ru, f.r_ru});
    };
  }
  out.bu = gmmv_omp(y_nris, sensing_nris, dict_bs, bu_cfg);
  out.ru = gmmv_omp(y_ris, sensing_ris, dict_ris, ru_cfg);
  return out;
}

}  // namespace thzloc
