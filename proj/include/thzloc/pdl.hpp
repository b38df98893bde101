#pragma once

#include <optional>
#include <vector>

#include "thzloc/cdl.hpp"
#include "thzloc/channel.hpp"
#include "thzloc/sounding.hpp"

namespace thzloc {

// Pilots of one link arranged as rows x M (one column per subcarrier).
CMatrix stack_frequency(const CVectorSeq& y);

// Y^H Y minus the expected noise Gram, noise_trace * I.
CMatrix denoised_autocorr(const CMatrix& y, double noise_trace);

// Expected squared norm of one combined-noise column: sigma^2 * ||W||_F^2.
double combined_noise_trace(const CMatrixSeq& slots, double sigma2);

// Projector onto the noise subspace of a denoised autocorrelation, built from the partition
// [Y1 Y2] without an eigendecomposition.
class NoiseProjector {
 public:
  NoiseProjector(const CMatrix& ytilde, std::size_t signal_rank);
  // Same projector from the raw pilots, avoiding the M x M Gram.
  static NoiseProjector from_pilots(const CMatrix& y, double noise_trace, std::size_t signal_rank);

  std::size_t dimension() const { return static_cast<std::size_t>(g1_.rows() + g1_.cols()); }
  std::size_t signal_rank() const { return static_cast<std::size_t>(g1_.rows()); }

  // G (G^H G)^{-1} G^H, formed explicitly.
  CMatrix dense() const;
  // Orthonormal basis of the complement of range(G).
  const CMatrix& complement() const { return complement_; }
  // v^H P v.
  double quadratic(const CVector& v) const;
  // Condition number of G^H G.
  double condition() const { return condition_; }

 private:
  NoiseProjector() = default;
  void finish();

  CMatrix g1_;  // signal_rank x (M - signal_rank)
  CMatrix complement_;
  double condition_ = 1.0;
};

// Delays are searched over [window_start, window_start + tau_max), folded into one period of the
// subcarrier spacing.
struct DelaySearch {
  double tau_max = 2.0 * 100.0 / kSpeedOfLight;
  double window_start = 0.0;
  std::size_t coarse_points = 0;  // 0: smallest power of two >= 4 M
  std::size_t levels = 3;
  std::size_t zoom = 10;
};

struct DelayEstimate {
  double tau = 0.0;
  double spectrum_peak = 0.0;
  double resolution = 0.0;
  bool low_confidence = false;
};

CVector delay_vector(const SubcarrierGrid& grid, double tau);
double delay_spectrum(const NoiseProjector& proj, const SubcarrierGrid& grid, double tau);
DelayEstimate delay_estimate(const NoiseProjector& proj, const SubcarrierGrid& grid,
                             const DelaySearch& search);

enum class Branch { kNearBs, kNearRis, kBisector };

// Hyperbola with foci at the BS and RIS; local frame centered at the midpoint with the x-axis
// pointing from BS to RIS.
struct Hyperbola {
  double a = 0.0;
  double b = 0.0;
  double c_h = 0.0;
  double tdoa = 0.0;  // seconds, positive when the UE is closer to the RIS
  Branch branch = Branch::kBisector;
  Point2 center = Point2::Zero();
  Point2 axis = Point2::UnitX();

  Point2 to_local(const Point2& p) const;
  Point2 to_world(const Point2& q) const;
  // X^2/a^2 - Y^2/b^2 - 1 in the local frame (X for the bisector).
  double residual(const Point2& p) const;
};

// Folds a delay difference into the unambiguous interval of the subcarrier grid.
double wrap_delay(double tau, double period);

Hyperbola tdoa_hyperbola(double tau_nris, double tau_ris, double r_b2r, const Point2& bs,
                         const Point2& ris);

struct RayFix {
  Point2 ue = Point2::Zero();
  double r_bu = 0.0;
};

RayFix line_hyperbola_intersect(double theta, const Hyperbola& hyp, const ArrayGeometry& bs);

struct HyperbolaDictionary {
  PolarDictionary dict;
  std::vector<Point2> points;
  std::vector<double> ray_theta;
  std::size_t skipped = 0;
};

HyperbolaDictionary hyperbola_dictionary(const Hyperbola& hyp, const ArrayGeometry& bs,
                                         const SubcarrierGrid& grid, std::size_t rays,
                                         double theta_h, double dtheta);

// Start angle and spacing of a ray fan covering the sector as seen from the BS.
std::pair<double, double> sector_ray_fan(const SceneConfig& sector, const ArrayGeometry& bs,
                                         std::size_t rays);

// Index of the winning atom.
std::size_t coarse_aoa_on_hyperbola(const CVectorSeq& y, const CMatrix& w,
                                    const PolarDictionary& partial);

struct PdlConfig {
  DelaySearch search;
  // The RIS-link delay is searched only where the TDoA is feasible, skipping this many
  // delay-resolution cells (1/B) around the direct-link delay, whose leak the RIS combiner
  // does not fully suppress.
  double direct_guard_cells = 2.0;
  std::size_t rays = 64;
  PgdConfig pgd;
  GainMode gain_mode = GainMode::kLeastSquares;
};

struct PdlInputs {
  const CVectorSeq* y_nris = nullptr;     // full grid
  const CVectorSeq* y_ris = nullptr;      // full grid
  const SoundingFrame* frame = nullptr;
  const SubcarrierGrid* full_grid = nullptr;
  std::size_t decimation = 1;             // subset used for angle estimation
  const ArrayGeometry* bs = nullptr;
  const ArrayGeometry* ris = nullptr;
  const SceneConfig* sector = nullptr;
  // Externally supplied delays replace the subspace search when set.
  std::optional<double> tau_nris;
  std::optional<double> tau_ris;
};

struct PdlResult {
  LocationEstimate location;
  DelayEstimate delay_nris;
  DelayEstimate delay_ris;
  Hyperbola hyperbola;
  std::size_t rays_used = 0;
};

PdlResult pdl(const PdlInputs& in, const PdlConfig& cfg);

}  // namespace thzloc
