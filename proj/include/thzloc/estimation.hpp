#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "thzloc/channel.hpp"
#include "thzloc/dictionary.hpp"

namespace thzloc {

// Sensing matrices of one link: a single matrix shared by all subcarriers, or one per subcarrier.
struct Sensing {
  CMatrixSeq mats;

  static Sensing shared(CMatrix w) { return Sensing{{std::move(w)}}; }
  static Sensing per_subcarrier(CMatrixSeq w) { return Sensing{std::move(w)}; }

  bool is_shared() const { return mats.size() == 1; }
  const CMatrix& at(std::size_t m) const { return mats[is_shared() ? 0 : m]; }
  Eigen::Index rows() const { return mats.front().rows(); }
};

// Receives the coarse (0-based) column index and the dictionary; may return a refined atom.
using LocalizationHook =
    std::function<std::optional<AtomParams>(std::size_t coarse_index, const PolarDictionary& dict)>;

struct OmpConfig {
  std::size_t n_select = 6;
  double stop_ratio = 0.85;
  std::size_t max_iters = 20;
  // Scale each correlation by the sensed column norm.
  bool normalize_columns = true;
  // Precomputed sensed_column_norms for this sensing and dictionary; computed on demand when null.
  const std::vector<RVector>* column_norms = nullptr;
  LocalizationHook hook;

  void validate() const;
};

struct EstimationResult {
  std::vector<std::size_t> support;
  CVectorSeq coeffs;
  CVectorSeq h_hat;
  std::size_t iterations_run = 0;
  std::vector<double> residual_history;
  std::optional<std::size_t> coarse_index;
  std::optional<AtomParams> coarse_params;
  std::optional<std::size_t> appended_index;
  bool rank_deficient = false;
};

// Sum over subcarriers of |column_i(W~[m])^H R[m]|^2.
RVector correlation_energy(const CMatrixSeq& w_tilde, const CVectorSeq& residual);

// Norms of the sensed columns A[m] D[m], one vector per distinct subcarrier.
std::vector<RVector> sensed_column_norms(const Sensing& sensing, const PolarDictionary& dict);

// Correlation energy computed in factored form D[m]^H (A[m]^H R[m]).
RVector correlation_energy(const Sensing& sensing, const PolarDictionary& dict,
                           const CVectorSeq& residual, const std::vector<RVector>* norms);

// 0-based argmax of the first-iteration energy.
std::size_t first_iteration_index(const CVectorSeq& y, const Sensing& sensing,
                                  const PolarDictionary& dict, bool normalize = true,
                                  const std::vector<RVector>* norms = nullptr);

EstimationResult gmmv_omp(const CVectorSeq& y, const Sensing& sensing, const PolarDictionary& dict,
                          const OmpConfig& cfg);

// Least squares on a fixed support; shared by the greedy loop and the genie baseline.
EstimationResult project_on_support(const CVectorSeq& y, const Sensing& sensing,
                                    const PolarDictionary& dict,
                                    const std::vector<std::size_t>& support);

// Nearest base column for each true path at the center frequency, deduplicated.
std::vector<std::size_t> genie_support(const PolarDictionary& dict,
                                       const std::vector<PathComponent>& paths);

EstimationResult genie_ls(const CVectorSeq& y, const Sensing& sensing, const PolarDictionary& dict,
                          const std::vector<PathComponent>& paths);

// 10 log10 of the relative error energy, floored at -300 dB.
double nmse_db(const CVectorSeq& h_true, const CVectorSeq& h_hat);

}  // namespace thzloc
