#include "thzloc/pdl.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <unsupported/Eigen/FFT>

namespace thzloc {

namespace {

constexpr double kPinvTolerance = 1e-10;
constexpr double kBisectorTdoa = 1e-12;

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void check_uniform(const SubcarrierGrid& grid) {
  const double df = grid.spacing();
  for (std::size_t m = 1; m < grid.size(); ++m) {
    const double expect = grid.frequency(0) + static_cast<double>(m) * df;
    if (std::abs(grid.frequency(m) - expect) > 1e-6 * df) {
      throw ConfigError("delay search needs evenly spaced subcarriers");
    }
  }
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

CMatrix stack_frequency(const CVectorSeq& y) {
  if (y.empty()) return {};
  CMatrix out(y.front().size(), static_cast<Eigen::Index>(y.size()));
  for (std::size_t m = 0; m < y.size(); ++m) {
    if (y[m].size() != out.rows()) throw DimensionError("pilot length varies across subcarriers");
    out.col(static_cast<Eigen::Index>(m)) = y[m];
  }
  return out;
}

CMatrix denoised_autocorr(const CMatrix& y, double noise_trace) {
  CMatrix g = y.adjoint() * y;
  g.diagonal().array() -= noise_trace;
  return g;
}

double combined_noise_trace(const CMatrixSeq& slots, double sigma2) {
  double f = 0.0;
  for (const CMatrix& w : slots) f += w.squaredNorm();
  return sigma2 * f;
}

NoiseProjector::NoiseProjector(const CMatrix& ytilde, std::size_t signal_rank) {
  const Eigen::Index M = ytilde.rows();
  const auto r = static_cast<Eigen::Index>(signal_rank);
  if (ytilde.cols() != M) throw DimensionError("autocorrelation must be square");
  if (r < 1 || r >= M) throw DomainError("signal rank must lie in [1, M)");
  Eigen::CompleteOrthogonalDecomposition<CMatrix> cod(ytilde.leftCols(r));
  cod.setThreshold(kPinvTolerance);
  g1_ = cod.solve(ytilde.rightCols(M - r));
  finish();
}

NoiseProjector NoiseProjector::from_pilots(const CMatrix& y, double noise_trace,
                                           std::size_t signal_rank) {
  const Eigen::Index M = y.cols();
  const auto r = static_cast<Eigen::Index>(signal_rank);
  if (r < 1 || r >= M) throw DomainError("signal rank must lie in [1, M)");
  CMatrix y1 = y.adjoint() * y.leftCols(r);
  y1.topRows(r).diagonal().array() -= noise_trace;
  // Thin SVD keeps the pseudo-inverse at r x M instead of solving against an M x M identity.
  Eigen::BDCSVD<CMatrix> svd(y1, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(kPinvTolerance);
  const Eigen::Index rank = svd.rank();
  const RVector inv_sv = svd.singularValues().head(rank).cwiseInverse();
  const CMatrix pinv = svd.matrixV().leftCols(rank) * inv_sv.cast<Complex>().asDiagonal() *
                       svd.matrixU().leftCols(rank).adjoint();
  NoiseProjector out;
  out.g1_ = (pinv * y.adjoint()) * y.rightCols(M - r) - noise_trace * pinv.rightCols(M - r);
  out.finish();
  return out;
}

void NoiseProjector::finish() {
  const Eigen::Index r = g1_.rows();
  const Eigen::Index M = r + g1_.cols();
  CMatrix basis(M, r);
  basis.topRows(r).setIdentity();
  basis.bottomRows(M - r) = g1_.adjoint();
  Eigen::HouseholderQR<CMatrix> qr(basis);
  complement_ = qr.householderQ() * CMatrix::Identity(M, r);
  const RVector sv = Eigen::BDCSVD<CMatrix>(g1_).singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  const double smin = (g1_.cols() > g1_.rows() || sv.size() == 0) ? 0.0 : sv(sv.size() - 1);
  condition_ = (1.0 + smax * smax) / (1.0 + smin * smin);
}

CMatrix NoiseProjector::dense() const {
  const Eigen::Index r = g1_.rows();
  const Eigen::Index M = r + g1_.cols();
  CMatrix g(M, M - r);
  g.topRows(r) = g1_;
  g.bottomRows(M - r) = -CMatrix::Identity(M - r, M - r);
  const CMatrix gram = g.adjoint() * g;
  return g * gram.ldlt().solve(g.adjoint());
}

double NoiseProjector::quadratic(const CVector& v) const {
  return std::max(0.0, v.squaredNorm() - (complement_.adjoint() * v).squaredNorm());
}

CVector delay_vector(const SubcarrierGrid& grid, double tau) {
  CVector v(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t m = 0; m < grid.size(); ++m) {
    v(static_cast<Eigen::Index>(m)) = std::polar(1.0, 2.0 * kPi * grid.frequency(m) * tau);
  }
  return v;
}

double delay_spectrum(const NoiseProjector& proj, const SubcarrierGrid& grid, double tau) {
  return 1.0 / std::max(proj.quadratic(delay_vector(grid, tau)), 1e-300);
}

DelayEstimate delay_estimate(const NoiseProjector& proj, const SubcarrierGrid& grid,
                             const DelaySearch& search) {
  if (!(search.tau_max > 0.0)) throw DomainError("tau_max must be positive");
  if (proj.dimension() != grid.size()) throw DimensionError("projector does not match grid");
  check_uniform(grid);
  const std::size_t M = grid.size();
  const double df = grid.spacing();
  const double period = 1.0 / df;
  const double window = std::min(search.tau_max, period);
  const double start = search.window_start;
  auto fold = [&](double t) { return t - period * std::floor(t / period); };
  auto in_window = [&](double t) { return fold(t - start) < window; };
  const std::size_t R = search.coarse_points > 0 ? std::max(search.coarse_points, M)
                                                 : next_pow2(4 * M);
  const double step = period / static_cast<double>(R);

  // Coarse pass: the complement projections of all grid delays in one inverse FFT per column.
  Eigen::FFT<double> fft;
  std::vector<Complex> in(R), out(R);
  std::vector<double> captured(R, 0.0);
  const CMatrix& q = proj.complement();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    std::fill(in.begin(), in.end(), Complex(0.0, 0.0));
    for (std::size_t m = 0; m < M; ++m) in[m] = std::conj(q(static_cast<Eigen::Index>(m), j));
    fft.inv(out, in);
    for (std::size_t k = 0; k < R; ++k) captured[k] += std::norm(out[k] * static_cast<double>(R));
  }
  std::vector<double> spectrum;
  std::size_t best = R;
  double best_val = -1.0;
  for (std::size_t k = 0; k < R; ++k) {
    if (!in_window(static_cast<double>(k) * step)) continue;
    const double val = 1.0 / std::max(static_cast<double>(M) - captured[k], 1e-300);
    spectrum.push_back(val);
    if (val > best_val) {
      best_val = val;
      best = k;
    }
  }

  if (best == R) throw DomainError("delay window holds no grid point");
  double tau = static_cast<double>(best) * step;
  double res = step;
  for (std::size_t level = 0; level < search.levels; ++level) {
    const double fine = res / static_cast<double>(search.zoom);
    double level_best = tau;
    double level_val = -1.0;
    const auto z = static_cast<long>(search.zoom);
    for (long i = -z; i <= z; ++i) {
      const double t = tau + static_cast<double>(i) * fine;
      if (!in_window(t)) continue;
      const double val = delay_spectrum(proj, grid, t);
      if (val > level_val) {
        level_val = val;
        level_best = t;
      }
    }
    tau = level_best;
    best_val = std::max(best_val, level_val);
    res = fine;
  }
  DelayEstimate est;
  est.tau = fold(tau);
  est.spectrum_peak = best_val;
  est.resolution = res;
  est.low_confidence = best_val < 2.0 * median(spectrum);
  return est;
}

Point2 Hyperbola::to_local(const Point2& p) const {
  const Point2 v = p - center;
  return {v.dot(axis), axis.x() * v.y() - axis.y() * v.x()};
}

Point2 Hyperbola::to_world(const Point2& q) const {
  const Point2 nrm(-axis.y(), axis.x());
  return center + q.x() * axis + q.y() * nrm;
}

double Hyperbola::residual(const Point2& p) const {
  const Point2 q = to_local(p);
  if (branch == Branch::kBisector) return q.x() / c_h;
  return q.x() * q.x() / (a * a) - q.y() * q.y() / (b * b) - 1.0;
}

double wrap_delay(double tau, double period) {
  double w = std::remainder(tau, period);
  if (w <= -period / 2.0) w += period;
  return w;
}

Hyperbola tdoa_hyperbola(double tau_nris, double tau_ris, double r_b2r, const Point2& bs,
                         const Point2& ris) {
  if (!(r_b2r > 0.0)) throw DomainError("anchor separation must be positive");
  Hyperbola h;
  h.tdoa = tau_nris - (tau_ris - r_b2r / kSpeedOfLight);
  h.c_h = r_b2r / 2.0;
  h.center = 0.5 * (bs + ris);
  h.axis = (ris - bs).normalized();
  if (std::abs(h.tdoa) < kBisectorTdoa) {
    h.branch = Branch::kBisector;
    h.a = 0.0;
    h.b = h.c_h;
    return h;
  }
  h.a = kSpeedOfLight * std::abs(h.tdoa) / 2.0;
  if (h.a >= h.c_h) {
    std::ostringstream os;
    os << "infeasible TDoA: semi-axis " << h.a << " m reaches the focal half-distance " << h.c_h;
    throw DegenerateGeometry(os.str());
  }
  h.b = std::sqrt(h.c_h * h.c_h - h.a * h.a);
  h.branch = h.tdoa > 0.0 ? Branch::kNearRis : Branch::kNearBs;
  return h;
}

RayFix line_hyperbola_intersect(double theta, const Hyperbola& hyp, const ArrayGeometry& bs) {
  if (!(theta > -1.0 && theta < 1.0)) throw DomainError("sine-angle outside (-1, 1)");
  const Point2 origin = hyp.to_local(bs.reference());
  const Point2 e = hyp.to_local(hyp.center + bs.direction(theta));
  double t = 0.0;
  if (hyp.branch == Branch::kBisector) {
    if (std::abs(e.x()) < 1e-15) throw NoIntersection("ray parallel to the bisector");
    t = -origin.x() / e.x();
    if (!(t > 0.0)) throw NoIntersection("bisector lies behind the BS");
  } else {
    const double ia = 1.0 / (hyp.a * hyp.a);
    const double ib = 1.0 / (hyp.b * hyp.b);
    const double A = e.x() * e.x() * ia - e.y() * e.y() * ib;
    const double B = 2.0 * (origin.x() * e.x() * ia - origin.y() * e.y() * ib);
    const double C = origin.x() * origin.x() * ia - origin.y() * origin.y() * ib - 1.0;
    std::vector<double> roots;
    if (std::abs(A) < 1e-14 * (e.x() * e.x() * ia + e.y() * e.y() * ib)) {
      if (B != 0.0) roots.push_back(-C / B);
    } else {
      const double disc = B * B - 4.0 * A * C;
      if (disc < 0.0) throw NoIntersection("ray misses the hyperbola");
      const double sq = std::sqrt(disc);
      const double q = -0.5 * (B + (B >= 0.0 ? sq : -sq));
      if (q != 0.0) {
        roots.push_back(q / A);
        roots.push_back(C / q);
      } else {
        roots.push_back(0.0);
      }
    }
    const double want = hyp.branch == Branch::kNearRis ? 1.0 : -1.0;
    bool found = false;
    for (double cand : roots) {
      if (!(cand > 0.0)) continue;
      const double x = origin.x() + cand * e.x();
      if (x * want <= 0.0) continue;
      if (!found || cand < t) t = cand;
      found = true;
    }
    if (!found) throw DegenerateGeometry("no intersection on the selected branch");
  }
  return {bs.reference() + t * bs.direction(theta), t};
}

HyperbolaDictionary hyperbola_dictionary(const Hyperbola& hyp, const ArrayGeometry& bs,
                                         const SubcarrierGrid& grid, std::size_t rays,
                                         double theta_h, double dtheta) {
  std::vector<AtomParams> params;
  HyperbolaDictionary out{build_partial(bs, grid, {}), {}, {}, 0};
  for (std::size_t t = 0; t < rays; ++t) {
    const double theta = theta_h + static_cast<double>(t) * dtheta;
    if (!(theta > -1.0 && theta < 1.0)) {
      ++out.skipped;
      continue;
    }
    try {
      const RayFix fix = line_hyperbola_intersect(theta, hyp, bs);
      if (!(fix.r_bu > bs.aperture() / 2.0)) {
        ++out.skipped;
        continue;
      }
      params.push_back({theta, fix.r_bu});
      out.points.push_back(fix.ue);
      out.ray_theta.push_back(theta);
    } catch (const NoIntersection&) {
      ++out.skipped;
    } catch (const DegenerateGeometry&) {
      ++out.skipped;
    }
  }
  out.dict = build_partial(bs, grid, std::move(params));
  return out;
}

std::pair<double, double> sector_ray_fan(const SceneConfig& sector, const ArrayGeometry& bs,
                                         std::size_t rays) {
  if (rays < 1) throw ConfigError("ray count must be positive");
  std::vector<Point2> boundary{sector.sector_apex};
  const int samples = 256;
  for (int i = 0; i <= samples; ++i) {
    const double f = static_cast<double>(i) / samples;
    for (double side : {-0.5, 0.5}) {
      const double a = sector.sector_heading + side * sector.sector_width;
      boundary.push_back(sector.sector_apex + f * sector.sector_radius * Point2(std::cos(a), std::sin(a)));
    }
    const double a = sector.sector_heading + (f - 0.5) * sector.sector_width;
    boundary.push_back(sector.sector_apex + sector.sector_radius * Point2(std::cos(a), std::sin(a)));
  }
  double lo = 1.0, hi = -1.0;
  for (const Point2& p : boundary) {
    if ((p - bs.reference()).norm() == 0.0 || !bs.in_front(p)) continue;
    const double t = bs.polar_of(p).theta;
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  if (lo > hi) throw ConfigError("sector is not visible from the BS");
  lo = std::max(lo, -1.0 + 1e-6);
  hi = std::min(hi, 1.0 - 1e-6);
  if (rays == 1) return {0.5 * (lo + hi), 0.0};
  return {lo, (hi - lo) / static_cast<double>(rays - 1)};
}

std::size_t coarse_aoa_on_hyperbola(const CVectorSeq& y, const CMatrix& w,
                                    const PolarDictionary& partial) {
  if (partial.size() == 0) throw DomainError("partial dictionary is empty");
  if (y.size() != partial.subcarriers()) throw DimensionError("subcarrier count mismatch");
  RVector score = RVector::Zero(static_cast<Eigen::Index>(partial.size()));
  for (std::size_t m = 0; m < y.size(); ++m) {
    const CMatrix sensed = w * partial.atoms(m);
    const CVector corr = sensed.adjoint() * y[m];
    for (Eigen::Index t = 0; t < score.size(); ++t) {
      const double nn = sensed.col(t).norm();
      if (nn > 0.0) score(t) += std::abs(corr(t)) / nn;
    }
  }
  Eigen::Index best = 0;
  score.maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

PdlResult pdl(const PdlInputs& in, const PdlConfig& cfg) {
  const SubcarrierGrid& full = *in.full_grid;
  if (in.y_nris->size() != full.size() || in.y_ris->size() != full.size()) {
    throw DimensionError("pilots must cover the full grid");
  }
  const SoundingFrame& frame = *in.frame;
  PdlResult out;

  auto estimate = [&](const CVectorSeq& y, const CMatrixSeq& slots, const DelaySearch& search) {
    const CMatrix stacked = stack_frequency(y);
    const double trace = combined_noise_trace(slots, frame.noise_power);
    const NoiseProjector proj =
        NoiseProjector::from_pilots(stacked, trace, static_cast<std::size_t>(stacked.rows()));
    return delay_estimate(proj, full, search);
  };
  if (in.tau_nris) {
    out.delay_nris.tau = *in.tau_nris;
  } else {
    out.delay_nris = estimate(*in.y_nris, frame.w_nris, cfg.search);
  }
  const double r_b2r = (in.ris->reference() - in.bs->reference()).norm();
  if (in.tau_ris) {
    out.delay_ris.tau = *in.tau_ris;
  } else {
    // Feasible hyperbolas need tau_ris - tau_nris in (0, 2 r_b2r / c).
    const double guard = cfg.direct_guard_cells / full.bandwidth();
    DelaySearch search = cfg.search;
    search.window_start = out.delay_nris.tau + guard;
    search.tau_max = 2.0 * r_b2r / kSpeedOfLight - 2.0 * guard;
    out.delay_ris = estimate(*in.y_ris, frame.w_ris, search);
  }

  const double period = 1.0 / full.spacing();
  const double tdoa =
      wrap_delay(out.delay_nris.tau - out.delay_ris.tau + r_b2r / kSpeedOfLight, period);
  out.hyperbola = tdoa_hyperbola(out.delay_ris.tau - r_b2r / kSpeedOfLight + tdoa,
                                 out.delay_ris.tau, r_b2r, in.bs->reference(),
                                 in.ris->reference());

  const SubcarrierGrid grid = full.decimated(in.decimation);
  CVectorSeq y_dec;
  y_dec.reserve(grid.size());
  for (std::size_t m = 0; m < grid.size(); ++m) y_dec.push_back((*in.y_nris)[m * in.decimation]);

  const auto [theta_h, dtheta] = sector_ray_fan(*in.sector, *in.bs, cfg.rays);
  const HyperbolaDictionary hd =
      hyperbola_dictionary(out.hyperbola, *in.bs, grid, cfg.rays, theta_h, dtheta);
  out.rays_used = hd.dict.size();
  if (hd.dict.size() == 0) throw NoIntersection("no ray of the fan meets the hyperbola");

  const CMatrix w = frame.stacked_nris();
  const std::size_t t_hat = coarse_aoa_on_hyperbola(y_dec, w, hd.dict);
  const double theta0 = hd.ray_theta[t_hat];
  const Point2 p0 = hd.points[t_hat];
  auto make_fix = [&](const Point2& ue, double theta_bu) {
    const PolarPoint pr = in.ris->polar_of(ue);
    return Fix{ue, theta_bu, pr.theta, (ue - in.bs->reference()).norm(), pr.range};
  };

  LocationEstimate& est = out.location;
  est.coarse = make_fix(p0, theta0);
  est.fix = *est.coarse;
  est.stage = Stage::kCoarse;
  try {
    const CVectorSeq ybar = relative_phase_transform(y_dec);
    const RelativePhaseLoss loss(ybar, w, *in.bs, grid, est.coarse->r_bu, cfg.gain_mode);
    const PgdResult pgd = pgd_refine(loss, theta0, cfg.pgd);
    est.pgd_iters = pgd.iterations;
    est.pgd_final_step = pgd.final_step;
    est.loss_history = pgd.loss_history;
    const RayFix fix = line_hyperbola_intersect(pgd.theta, out.hyperbola, *in.bs);
    est.fix = make_fix(fix.ue, pgd.theta);
    est.stage = Stage::kRefined;
  } catch (const Error& e) {
    est.fallback = true;
    est.note = e.what();
  }
  return out;
}

}  // namespace thzloc
