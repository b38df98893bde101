#include "oracles/oracles.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

namespace thzloc::oracle {

Point2 element_xy(std::size_t n, std::size_t count, double spacing) {
  const double center = 0.5 * static_cast<double>(count - 1);
  return {(static_cast<double>(n) - center) * spacing, 0.0};
}

CVector spherical_steering(std::size_t count, double spacing, double wavenumber, double theta,
                           double range) {
  const Point2 source(range * theta, range * std::sqrt(1.0 - theta * theta));
  CVector out(static_cast<Eigen::Index>(count));
  for (std::size_t n = 0; n < count; ++n) {
    const double dist = (source - element_xy(n, count, spacing)).norm();
    const double phase = -wavenumber * (dist - range);
    out(static_cast<Eigen::Index>(n)) = Complex(std::cos(phase), std::sin(phase));
  }
  return out / std::sqrt(static_cast<double>(count));
}

CVector planar_steering(std::size_t count, double spacing, double wavenumber, double theta) {
  CVector out(static_cast<Eigen::Index>(count));
  for (std::size_t n = 0; n < count; ++n) {
    // Path-length advance of a plane wave arriving from theta.
    const double phase = wavenumber * element_xy(n, count, spacing).x() * theta;
    out(static_cast<Eigen::Index>(n)) = Complex(std::cos(phase), std::sin(phase));
  }
  return out / std::sqrt(static_cast<double>(count));
}

double planar_mismatch(std::size_t count, double spacing, double wavenumber, double theta,
                       double range) {
  const CVector b = spherical_steering(count, spacing, wavenumber, theta, range);
  const CVector a = planar_steering(count, spacing, wavenumber, theta);
  double chi = 0.0;
  Complex rho = 0.0;
  for (Eigen::Index n = 0; n < b.size(); ++n) {
    chi += std::norm(b(n));
    rho += std::conj(a(n)) * b(n);
  }
  return std::abs(chi * chi - std::norm(rho));
}

double scan_crossing(const std::function<double(double)>& f, double from, double to,
                     std::size_t samples, double level) {
  const double ratio = std::pow(to / from, 1.0 / static_cast<double>(samples - 1));
  double x0 = from;
  double g0 = f(x0) - level;
  for (std::size_t i = 1; i < samples; ++i) {
    const double x1 = from * std::pow(ratio, static_cast<double>(i));
    const double g1 = f(x1) - level;
    if (g0 == 0.0) return x0;
    if ((g0 < 0.0) != (g1 < 0.0)) return x0 + (x1 - x0) * g0 / (g0 - g1);
    x0 = x1;
    g0 = g1;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double golden_section_min(const std::function<double(double)>& f, double lo, double hi,
                          double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

CMatrix evd_noise_projector(const CMatrix& hermitian, std::size_t signal_rank) {
  Eigen::SelfAdjointEigenSolver<CMatrix> evd(hermitian);
  // Eigenvalues come in increasing order.
  const Eigen::Index noise = hermitian.rows() - static_cast<Eigen::Index>(signal_rank);
  const CMatrix u = evd.eigenvectors().leftCols(noise);
  return u * u.adjoint();
}

std::size_t exhaustive_argmax(std::size_t count, const std::function<double(std::size_t)>& score) {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < count; ++k) {
    const double s = score(k);
    if (s > best_score) {
      best_score = s;
      best = k;
    }
  }
  return best;
}

Point2 ray_range_difference(const Point2& origin, const Point2& direction, const Point2& f1,
                            const Point2& f2, double delta, double max_range) {
  const Point2 u = direction.normalized();
  auto g = [&](double t) {
    const Point2 p = origin + t * u;
    return (p - f1).norm() - (p - f2).norm() - delta;
  };
  const std::size_t steps = 200000;
  const double dt = max_range / static_cast<double>(steps);
  double t0 = 1e-9;
  double g0 = g(t0);
  for (std::size_t i = 1; i <= steps; ++i) {
    const double t1 = dt * static_cast<double>(i);
    const double g1 = g(t1);
    if ((g0 < 0.0) != (g1 < 0.0)) {
      double a = t0, b = t1, ga = g0;
      for (int k = 0; k < 200 && b - a > 1e-15 * b; ++k) {
        const double m = 0.5 * (a + b);
        const double gm = g(m);
        if ((gm < 0.0) == (ga < 0.0)) {
          a = m;
          ga = gm;
        } else {
          b = m;
        }
      }
      return origin + 0.5 * (a + b) * u;
    }
    t0 = t1;
    g0 = g1;
  }
  throw NoIntersection("no range-difference crossing along the ray");
}

}  // namespace thzloc::oracle
