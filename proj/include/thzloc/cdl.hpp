#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "thzloc/estimation.hpp"
#include "thzloc/geometry.hpp"

namespace thzloc {

struct PgdConfig {
  std::size_t max_iters = 20;
  double stop_step = 1e-7;
  double armijo_c = 1e-4;
  double backtrack = 0.5;
  double initial_step = 1e-2;

  void validate() const;
};

struct PhdConfig {
  std::size_t candidates = 41;  // N_PHD, odd
  double stop_span = 2e-5;
  std::size_t redundancy = 2;   // varsigma of the RIS dictionary
  std::size_t max_levels = 16;

  void validate() const;
};

// How the per-subcarrier gain inside the relative-phase loss is obtained.
enum class GainMode { kLeastSquares, kFriis };

struct Fix {
  Point2 ue = Point2::Zero();
  double theta_bu = 0.0;
  double theta_ru = 0.0;
  double r_bu = 0.0;
  double r_ru = 0.0;
};

enum class Stage { kCoarse, kRefined };

struct LocationEstimate {
  Fix fix;
  Stage stage = Stage::kCoarse;
  std::optional<Fix> coarse;
  bool fallback = false;
  std::string note;
  std::size_t pgd_iters = 0;
  double pgd_final_step = 0.0;
  std::vector<double> loss_history;
  std::size_t phd_levels = 0;
  bool phd_clamped = false;
};

// Coarse sine-angles from 1-based first-iteration indices.
std::pair<double, double> coarse_angles(std::size_t i_nris, std::size_t i_ris,
                                        const PolarDictionary& dict_bs,
                                        const PolarDictionary& dict_ris);

// Bearing-line slope of an anchor for a sine-angle (world frame, dy/dx).
double bearing_slope(const ArrayGeometry& array, double theta);

Fix intersect_lines(double theta_bu, double theta_ru, const ArrayGeometry& bs,
                    const ArrayGeometry& ris);

CVectorSeq relative_phase_transform(const CVectorSeq& y);

// Loss between transformed pilots and the single-path model W b(theta, r) alpha[m],
// evaluated on rows 2.. (row 1 serves as the phase reference).
class RelativePhaseLoss {
 public:
  RelativePhaseLoss(CVectorSeq ybar, const CMatrix& w, ArrayGeometry array, SubcarrierGrid grid,
                    double range, GainMode mode = GainMode::kLeastSquares,
                    RVector friis_magnitude = {});

  double value(double theta) const;
  double gradient(double theta) const;
  // Sum of squared transformed pilots on the evaluated rows.
  double scale() const { return scale_; }
  double range() const { return range_; }

 private:
  double evaluate(double theta, double* grad) const;

  CVectorSeq ybar_;
  CMatrix w_rest_;
  CVector w_ref_;
  ArrayGeometry array_;
  SubcarrierGrid grid_;
  double range_;
  GainMode mode_;
  RVector friis_;
  double scale_ = 0.0;
};

struct PgdResult {
  double theta = 0.0;
  std::size_t iterations = 0;
  double final_step = 0.0;
  std::vector<double> loss_history;  // normalized by the loss scale
  bool converged = false;
};

PgdResult pgd_refine(const RelativePhaseLoss& loss, double theta0, const PgdConfig& cfg);

struct PhdResult {
  double theta = 0.0;
  std::size_t levels = 0;
  std::vector<double> centers;
  bool clamped = false;
};

// Span half-width at level k (1-based).
double phd_half_span(std::size_t num_ris, const PhdConfig& cfg, std::size_t level);
std::vector<double> phd_candidates(double center, std::size_t num_ris, const PhdConfig& cfg,
                                   std::size_t level, bool* clamped = nullptr);

PhdResult phd_refine(const CVectorSeq& y_ris, const Sensing& sensing_ris, const ArrayGeometry& ris,
                     const SubcarrierGrid& grid, double theta0, double r0, const PhdConfig& cfg);

struct CdlConfig {
  PgdConfig pgd;
  PhdConfig phd;
  GainMode gain_mode = GainMode::kLeastSquares;
};

struct CdlInputs {
  const CVectorSeq* y_nris = nullptr;
  const CMatrix* w_nris = nullptr;  // stacked RIS-off combiner, first row is the selector
  const CVectorSeq* y_ris = nullptr;
  const Sensing* sensing_ris = nullptr;
  const PolarDictionary* dict_bs = nullptr;
  const PolarDictionary* dict_ris = nullptr;
  std::size_t i_nris = 0;  // 0-based first-iteration index
  std::size_t i_ris = 0;
  const ArrayGeometry* bs = nullptr;
  const ArrayGeometry* ris = nullptr;
  const SubcarrierGrid* grid = nullptr;
  double pilot_amp = 1.0;  // used by the Friis gain mode only
  LinkBudget budget;
};

LocationEstimate cdl(const CdlInputs& in, const CdlConfig& cfg);

struct JointResult {
  EstimationResult bu;
  EstimationResult ru;
  std::optional<LocationEstimate> location;
  std::string location_error;
};

// LA-GMMV-OMP: coarse indices on both links, CDL, then OMP with the refined LoS atoms appended.
JointResult joint_sense(const CVectorSeq& y_nris, const CMatrix& w_nris, const CVectorSeq& y_ris,
                        const Sensing& sensing_ris, const PolarDictionary& dict_bs,
                        const PolarDictionary& dict_ris, const ArrayGeometry& bs,
                        const ArrayGeometry& ris, const SubcarrierGrid& grid,
                        const OmpConfig& omp, const CdlConfig& cfg,
                        const std::vector<RVector>* norms_bu = nullptr,
                        const std::vector<RVector>* norms_ris = nullptr);

}  // namespace thzloc
