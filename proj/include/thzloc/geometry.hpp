#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "thzloc/types.hpp"

namespace thzloc {

// Which side of the element axis faces the coverage area.
// kStandard: front normal is the axis rotated by -90 degrees (BS convention).
// kMirrored: front normal is the axis rotated by +90 degrees (RIS convention).
enum class Handedness { kStandard, kMirrored };

struct PolarPoint {
  double theta = 0.0;  // sine of the angle from the front normal
  double range = 0.0;  // meters from the array center
};

class ArrayGeometry {
 public:
  ArrayGeometry() = default;
  ArrayGeometry(std::size_t num_elements, double spacing, double orientation, Point2 reference,
                Handedness handedness = Handedness::kStandard);

  std::size_t size() const { return num_elements_; }
  double spacing() const { return spacing_; }
  double orientation() const { return orientation_; }
  const Point2& reference() const { return reference_; }
  Handedness handedness() const { return handedness_; }

  double aperture() const { return static_cast<double>(num_elements_) * spacing_; }
  double offset(std::size_t n) const;
  RVector offsets() const;

  Point2 axis() const;
  Point2 normal() const;
  Point2 element_position(std::size_t n) const;

  // Direction angle (radians, world frame) of the ray leaving the center at sine-angle theta.
  double bearing(double theta) const;
  Point2 direction(double theta) const;
  Point2 point_at(double theta, double range) const;
  PolarPoint polar_of(const Point2& p) const;
  bool in_front(const Point2& p) const;

 private:
  std::size_t num_elements_ = 1;
  double spacing_ = 1.0;
  double orientation_ = 0.0;
  Point2 reference_ = Point2::Zero();
  Handedness handedness_ = Handedness::kStandard;
};

class SubcarrierGrid {
 public:
  SubcarrierGrid() = default;
  SubcarrierGrid(double center_freq, double bandwidth, std::size_t num_subcarriers);

  // Keeps every step-th active subcarrier, starting from the first.
  SubcarrierGrid decimated(std::size_t step) const;

  std::size_t size() const { return active_.size(); }
  std::size_t total() const { return total_; }
  std::size_t full_index(std::size_t m) const { return active_.at(m); }

  double center_frequency() const { return center_; }
  double bandwidth() const { return bandwidth_; }
  double center_wavelength() const { return kSpeedOfLight / center_; }
  double center_wavenumber() const { return 2.0 * kPi * center_ / kSpeedOfLight; }

  double frequency(std::size_t m) const;
  double wavelength(std::size_t m) const { return kSpeedOfLight / frequency(m); }
  double wavenumber(std::size_t m) const { return 2.0 * kPi * frequency(m) / kSpeedOfLight; }
  // Frequency step between consecutive active subcarriers.
  double spacing() const;
  RVector frequencies() const;

 private:
  double center_ = 1.0;
  double bandwidth_ = 0.0;
  std::size_t total_ = 1;
  std::vector<std::size_t> active_{0};
};

// ---------------------------------------------------------------------------
// Steering kernels. Element n sits at offset delta_n * d along the axis.

template <typename Scalar>
using SteeringVec = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;

template <typename Scalar>
Scalar element_offset(Eigen::Index n, Eigen::Index count) {
  return (Scalar(2) * Scalar(n) - Scalar(count) + Scalar(1)) / Scalar(2);
}

template <typename Scalar>
SteeringVec<Scalar> far_steering(Eigen::Index count, Scalar spacing, Scalar wavenumber,
                                 Scalar theta) {
  SteeringVec<Scalar> out(count);
  const Scalar scale = Scalar(1) / std::sqrt(Scalar(count));
  for (Eigen::Index n = 0; n < count; ++n) {
    const Scalar phase = wavenumber * theta * spacing * element_offset<Scalar>(n, count);
    out(n) = std::polar(scale, phase);
  }
  return out;
}

template <typename Scalar>
Scalar element_range(Scalar range, Scalar offset_m, Scalar theta) {
  const Scalar sq = range * range - Scalar(2) * range * offset_m * theta + offset_m * offset_m;
  if (!(sq > Scalar(0))) throw DegenerateGeometry("element range is not positive");
  return std::sqrt(sq);
}

template <typename Scalar>
SteeringVec<Scalar> near_steering(Eigen::Index count, Scalar spacing, Scalar wavenumber,
                                  Scalar theta, Scalar range) {
  SteeringVec<Scalar> out(count);
  const Scalar scale = Scalar(1) / std::sqrt(Scalar(count));
  for (Eigen::Index n = 0; n < count; ++n) {
    const Scalar off = element_offset<Scalar>(n, count) * spacing;
    const Scalar rn = element_range(range, off, theta);
    out(n) = std::polar(scale, -wavenumber * (rn - range));
  }
  return out;
}

// d/dtheta of near_steering at fixed range.
template <typename Scalar>
SteeringVec<Scalar> near_steering_dtheta(Eigen::Index count, Scalar spacing, Scalar wavenumber,
                                         Scalar theta, Scalar range) {
  SteeringVec<Scalar> out(count);
  const Scalar scale = Scalar(1) / std::sqrt(Scalar(count));
  const std::complex<Scalar> j(Scalar(0), Scalar(1));
  for (Eigen::Index n = 0; n < count; ++n) {
    const Scalar off = element_offset<Scalar>(n, count) * spacing;
    const Scalar rn = element_range(range, off, theta);
    const std::complex<Scalar> b = std::polar(scale, -wavenumber * (rn - range));
    out(n) = j * wavenumber * range * off / rn * b;
  }
  return out;
}

// Array-level wrappers with argument checks. m indexes the active subcarriers of grid.
CVector far_steering(const ArrayGeometry& array, const SubcarrierGrid& grid, std::size_t m,
                     double theta);
CVector near_steering(const ArrayGeometry& array, const SubcarrierGrid& grid, std::size_t m,
                      double theta, double range);
CVector near_steering_dtheta(const ArrayGeometry& array, const SubcarrierGrid& grid,
                             std::size_t m, double theta, double range);

// Same, at an explicit wavenumber.
CVector far_steering_at(const ArrayGeometry& array, double wavenumber, double theta);
CVector near_steering_at(const ArrayGeometry& array, double wavenumber, double theta,
                         double range);

// ---------------------------------------------------------------------------
// Field boundaries and squint.

double classical_rayleigh(double aperture, double wavelength);

struct SteeringCorrelation {
  double chi = 1.0;  // |b^H b|
  double rho = 0.0;  // |a^H b|
};

SteeringCorrelation steering_correlation(const ArrayGeometry& array, double wavenumber,
                                         double theta, double distance);

// Gain lost when the spherical wave at the given distance is matched with a planar one.
double planar_loss(const ArrayGeometry& array, double wavenumber, double theta, double distance);

struct EffectiveRayleigh {
  double epsilon = 0.0;
  double distance = 0.0;
};

EffectiveRayleigh effective_rayleigh(const ArrayGeometry& array, const SubcarrierGrid& grid,
                                     std::size_t m, double theta, double hbar);

double squint_shift(const SubcarrierGrid& grid, double theta, std::size_t m1, std::size_t m2);

// Apparent-angle spread between the lowest and highest subcarriers for a source seen at
// theta on the center frequency.
double squint_spread(const SubcarrierGrid& grid, double theta);

// Default element spacing: half the center wavelength.
double half_wavelength(const SubcarrierGrid& grid);

}  // namespace thzloc
