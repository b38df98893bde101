#pragma once

// Reference computations used to validate the library. Each one is written from first
// principles (explicit element coordinates, brute-force scans, dense eigendecompositions)
// and shares no code path with the routine it checks.

#include <cstddef>
#include <functional>

#include "thzloc/types.hpp"

namespace thzloc::oracle {

// Element n of an N-element uniform line array with spacing d, placed on the local x-axis and
// centered at the origin. The front half-plane is y > 0.
Point2 element_xy(std::size_t n, std::size_t count, double spacing);

// Steering vectors from explicit geometry: the source sits at range r and sine-angle theta.
CVector spherical_steering(std::size_t count, double spacing, double wavenumber, double theta,
                           double range);
CVector planar_steering(std::size_t count, double spacing, double wavenumber, double theta);

// |chi^2 - rho^2| with chi = |b^H b| and rho = |a^H b|, from the vectors above.
double planar_mismatch(std::size_t count, double spacing, double wavenumber, double theta,
                       double range);

// First point where f crosses level when walking geometrically from `from` toward `to`, refined
// by linear interpolation between the bracketing samples. NaN when no crossing is seen.
double scan_crossing(const std::function<double(double)>& f, double from, double to,
                     std::size_t samples, double level);

double golden_section_min(const std::function<double(double)>& f, double lo, double hi,
                          double tol);

double central_difference(const std::function<double(double)>& f, double x, double h);

// Orthogonal projector onto the eigenvectors of the smallest (M - rank) eigenvalues of a
// Hermitian matrix.
CMatrix evd_noise_projector(const CMatrix& hermitian, std::size_t signal_rank);

// Index of the largest score; the lowest index wins ties.
std::size_t exhaustive_argmax(std::size_t count, const std::function<double(std::size_t)>& score);

// Point on the ray from origin along direction where |p - f1| - |p - f2| = delta, found by a
// dense scan for a sign change and bisection. Throws NoIntersection when no crossing is seen
// within max_range.
Point2 ray_range_difference(const Point2& origin, const Point2& direction, const Point2& f1,
                            const Point2& f2, double delta, double max_range);

}  // namespace thzloc::oracle
