#include "thzloc/geometry.hpp"

#include <algorithm>
#include <sstream>

namespace thzloc {

namespace {

void check_theta(double theta) {
  if (!(theta > -1.0 && theta < 1.0)) {
    std::ostringstream os;
    os << "sine-angle " << theta << " outside (-1, 1)";
    throw DomainError(os.str());
  }
}

void check_subcarrier(const SubcarrierGrid& grid, std::size_t m) {
  if (m >= grid.size()) {
    std::ostringstream os;
    os << "subcarrier " << m << " outside grid of " << grid.size();
    throw DomainError(os.str());
  }
}

void check_range(const ArrayGeometry& array, double range) {
  if (!(range > 0.0)) throw DomainError("range must be positive");
  if (!(range > array.aperture() / 2.0)) {
    throw DegenerateGeometry("range inside the array aperture");
  }
}

}  // namespace

ArrayGeometry::ArrayGeometry(std::size_t num_elements, double spacing, double orientation,
                             Point2 reference, Handedness handedness)
    : num_elements_(num_elements),
      spacing_(spacing),
      orientation_(orientation),
      reference_(std::move(reference)),
      handedness_(handedness) {
  if (num_elements_ < 1) throw ConfigError("array needs at least one element");
  if (!(spacing_ > 0.0)) throw ConfigError("element spacing must be positive");
}

double ArrayGeometry::offset(std::size_t n) const {
  return element_offset<double>(static_cast<Eigen::Index>(n),
                                static_cast<Eigen::Index>(num_elements_));
}

RVector ArrayGeometry::offsets() const {
  RVector out(num_elements_);
  for (std::size_t n = 0; n < num_elements_; ++n) out(n) = offset(n);
  return out;
}

Point2 ArrayGeometry::axis() const {
  const double a = handedness_ == Handedness::kStandard ? orientation_ : kPi - orientation_;
  return {std::cos(a), std::sin(a)};
}

Point2 ArrayGeometry::normal() const {
  const Point2 u = axis();
  if (handedness_ == Handedness::kStandard) return {u.y(), -u.x()};
  return {-u.y(), u.x()};
}

Point2 ArrayGeometry::element_position(std::size_t n) const {
  return reference_ + offset(n) * spacing_ * axis();
}

double ArrayGeometry::bearing(double theta) const {
  const Point2 nrm = normal();
  const double psi = std::atan2(nrm.y(), nrm.x());
  const double s = handedness_ == Handedness::kStandard ? 1.0 : -1.0;
  return psi + s * std::asin(theta);
}

Point2 ArrayGeometry::direction(double theta) const {
  // Built from the axis/normal pair so that axis().dot(direction) == theta exactly.
  const double c = std::sqrt(std::max(0.0, 1.0 - theta * theta));
  return theta * axis() + c * normal();
}

Point2 ArrayGeometry::point_at(double theta, double range) const {
  return reference_ + range * direction(theta);
}

PolarPoint ArrayGeometry::polar_of(const Point2& p) const {
  const Point2 v = p - reference_;
  const double r = v.norm();
  if (!(r > 0.0)) throw DegenerateGeometry("point coincides with the array reference");
  return {axis().dot(v) / r, r};
}

bool ArrayGeometry::in_front(const Point2& p) const { return normal().dot(p - reference_) > 0.0; }

SubcarrierGrid::SubcarrierGrid(double center_freq, double bandwidth, std::size_t num_subcarriers)
    : center_(center_freq), bandwidth_(bandwidth), total_(num_subcarriers) {
  if (num_subcarriers < 1) throw ConfigError("grid needs at least one subcarrier");
  if (!(center_freq > 0.0) || bandwidth < 0.0) throw ConfigError("invalid grid frequencies");
  if (!(center_freq - bandwidth / 2.0 > 0.0)) throw ConfigError("band reaches zero frequency");
  active_.resize(num_subcarriers);
  for (std::size_t m = 0; m < num_subcarriers; ++m) active_[m] = m;
}

SubcarrierGrid SubcarrierGrid::decimated(std::size_t step) const {
  if (step < 1) throw ConfigError("decimation step must be positive");
  SubcarrierGrid out = *this;
  out.active_.clear();
  for (std::size_t m = 0; m < active_.size(); m += step) out.active_.push_back(active_[m]);
  return out;
}

double SubcarrierGrid::frequency(std::size_t m) const {
  const double idx = static_cast<double>(active_.at(m));
  return center_ - bandwidth_ / 2.0 + idx * bandwidth_ / static_cast<double>(total_);
}

double SubcarrierGrid::spacing() const {
  if (active_.size() < 2) return bandwidth_ / static_cast<double>(total_);
  return frequency(1) - frequency(0);
}

RVector SubcarrierGrid::frequencies() const {
  RVector out(size());
  for (std::size_t m = 0; m < size(); ++m) out(m) = frequency(m);
  return out;
}

CVector far_steering(const ArrayGeometry& array, const SubcarrierGrid& grid, std::size_t m,
                     double theta) {
  check_subcarrier(grid, m);
  return far_steering_at(array, grid.wavenumber(m), theta);
}

CVector near_steering(const ArrayGeometry& array, const SubcarrierGrid& grid, std::size_t m,
                      double theta, double range) {
  check_subcarrier(grid, m);
  return near_steering_at(array, grid.wavenumber(m), theta, range);
}

CVector near_steering_dtheta(const ArrayGeometry& array, const SubcarrierGrid& grid,
                             std::size_t m, double theta, double range) {
  check_subcarrier(grid, m);
  check_theta(theta);
  check_range(array, range);
  return near_steering_dtheta<double>(static_cast<Eigen::Index>(array.size()), array.spacing(),
                                      grid.wavenumber(m), theta, range);
}

CVector far_steering_at(const ArrayGeometry& array, double wavenumber, double theta) {
  check_theta(theta);
  return far_steering<double>(static_cast<Eigen::Index>(array.size()), array.spacing(),
                              wavenumber, theta);
}

CVector near_steering_at(const ArrayGeometry& array, double wavenumber, double theta,
                         double range) {
  check_theta(theta);
  check_range(array, range);
  return near_steering<double>(static_cast<Eigen::Index>(array.size()), array.spacing(),
                               wavenumber, theta, range);
}

double classical_rayleigh(double aperture, double wavelength) {
  if (!(aperture > 0.0) || !(wavelength > 0.0)) {
    throw DomainError("aperture and wavelength must be positive");
  }
  return 2.0 * aperture * aperture / wavelength;
}

SteeringCorrelation steering_correlation(const ArrayGeometry& array, double wavenumber,
                                         double theta, double distance) {
  const CVector b = near_steering_at(array, wavenumber, theta, distance);
  const CVector a = far_steering_at(array, wavenumber, theta);
  return {std::abs(b.dot(b)), std::abs(a.dot(b))};
}

double planar_loss(const ArrayGeometry& array, double wavenumber, double theta,
                   double distance) {
  const SteeringCorrelation c = steering_correlation(array, wavenumber, theta, distance);
  return std::abs(c.chi * c.chi - c.rho * c.rho);
}

EffectiveRayleigh effective_rayleigh(const ArrayGeometry& array, const SubcarrierGrid& grid,
                                     std::size_t m, double theta, double hbar) {
  check_subcarrier(grid, m);
  check_theta(theta);
  if (!(hbar > 0.0 && hbar < 1.0)) throw DomainError("loss threshold must lie in (0, 1)");

  const double k = grid.wavenumber(m);
  const double aperture = array.aperture();
  // The loss oscillates close to the array; bracket the outermost crossing by stepping in
  // from the classical distance before bisecting.
  const double outer = classical_rayleigh(aperture, grid.center_wavelength());
  const std::size_t steps = 512;
  const double ratio = std::pow(aperture / outer, 1.0 / static_cast<double>(steps));
  double hi = outer;
  double f_hi = planar_loss(array, k, theta, hi) - hbar;
  double lo = hi;
  double f_lo = f_hi;
  for (std::size_t i = 1; i <= steps && f_lo < 0.0; ++i) {
    hi = lo;
    f_hi = f_lo;
    lo = outer * std::pow(ratio, static_cast<double>(i));
    f_lo = planar_loss(array, k, theta, lo) - hbar;
  }
  if (f_lo * f_hi > 0.0) {
    std::ostringstream os;
    os << "no sign change on [" << aperture << ", " << outer << "]: residuals " << f_lo << ", " << f_hi;
    throw RootNotFound(os.str());
  }
  while (hi - lo > 1e-3) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = planar_loss(array, k, theta, mid) - hbar;
    if ((f_mid > 0.0) == (f_lo > 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
      f_hi = f_mid;
    }
  }
  const double z = 0.5 * (lo + hi);
  const double lambda = grid.wavelength(m);
  return {z * lambda / (2.0 * aperture * aperture * (1.0 - theta * theta)), z};
}

double squint_shift(const SubcarrierGrid& grid, double theta, std::size_t m1, std::size_t m2) {
  check_theta(theta);
  check_subcarrier(grid, m1);
  check_subcarrier(grid, m2);
  return theta * (grid.frequency(m1) / grid.frequency(m2) - 1.0);
}

double squint_spread(const SubcarrierGrid& grid, double theta) {
  check_theta(theta);
  const double fc = grid.center_frequency();
  const double lo = grid.frequency(0);
  const double hi = grid.frequency(grid.size() - 1);
  return std::abs(theta * fc / lo - theta * fc / hi);
}

double half_wavelength(const SubcarrierGrid& grid) { return grid.center_wavelength() / 2.0; }

}  // namespace thzloc
