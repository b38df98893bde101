#pragma once

#include <cstdint>
#include <vector>

#include "thzloc/dictionary.hpp"
#include "thzloc/geometry.hpp"

namespace thzloc {

enum class RisCombinerMode { kCenterFrequency, kSpread };

// Known element-level BS/RIS channel, produced per subcarrier on demand.
class BsRisChannel {
 public:
  BsRisChannel(ArrayGeometry bs, ArrayGeometry ris, SubcarrierGrid grid, bool cache = true);

  const SubcarrierGrid& grid() const { return grid_; }
  CMatrix at(std::size_t m) const;

 private:
  ArrayGeometry bs_;
  ArrayGeometry ris_;
  SubcarrierGrid grid_;
  CMatrixSeq cached_;
};

struct SoundingFrame {
  CMatrixSeq w_nris;                // per slot, N_RF x N
  CMatrixSeq w_ris;                 // per slot, N_RF x N
  std::vector<RVector> ris_phases;  // per slot, +-1 entries of length N_RIS
  double pilot_amp = 1.0;
  double noise_power = 0.0;         // per-subcarrier sigma^2

  CMatrix stacked_nris() const;
  CMatrix stacked_ris_direct() const;
  // Equivalent RIS-link sensing matrix at one subcarrier given H^BR there.
  CMatrix stacked_ris(const CMatrix& h_br) const;
  CMatrixSeq stacked_ris_all(const BsRisChannel& h_br) const;
};

CMatrixSeq build_w_nris(std::size_t slots, std::size_t num_elements, std::size_t num_rf,
                        std::uint64_t seed, bool pgd_row);

// Center-element selector row placed in the first RF chain of the first slot.
RVector pgd_selector(std::size_t num_elements, std::size_t num_rf);

CMatrixSeq build_w_ris(std::size_t slots, const ArrayGeometry& bs, const ArrayGeometry& ris,
                       const SubcarrierGrid& grid, std::size_t num_rf, RisCombinerMode mode);

// Frequency assigned to row i (0-based) of slot p (0-based) in spread mode.
double spread_frequency(const SubcarrierGrid& grid, std::size_t slots, std::size_t num_rf,
                        std::size_t p, std::size_t i);

std::vector<RVector> build_ris_phases(std::size_t slots, std::size_t num_ris, std::uint64_t seed);

struct PilotObservation {
  CVectorSeq y_nris;
  CVectorSeq y_ris;
};

CVectorSeq receive_direct(const CVectorSeq& h_bu, const SoundingFrame& frame, std::uint64_t seed);
CVectorSeq receive_reflected(const CVectorSeq& h_ru, const CVectorSeq& h_bu,
                             const BsRisChannel& h_br, const SoundingFrame& frame,
                             std::uint64_t seed);
PilotObservation receive(const CVectorSeq& h_bu, const CVectorSeq& h_ru, const BsRisChannel& h_br,
                         const SoundingFrame& frame, std::uint64_t seed);

// Per-subcarrier sensing matrices W D[m]; a single W is shared across subcarriers.
CMatrixSeq equivalent_matrix(const CMatrix& w, const PolarDictionary& dict);
CMatrixSeq equivalent_matrix(const CMatrixSeq& w, const PolarDictionary& dict);

// Pilot amplitude for a total transmit power in dBm spread over num_subcarriers.
double pilot_amplitude(double power_dbm, std::size_t num_subcarriers);
// Per-subcarrier noise power from a density in dBm/Hz.
double subcarrier_noise_power(double density_dbm_hz, double bandwidth, std::size_t num_subcarriers);

}  // namespace thzloc
