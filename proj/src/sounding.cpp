#include "thzloc/sounding.hpp"

#include <cmath>

#include "thzloc/channel.hpp"
#include "thzloc/rng.hpp"

namespace thzloc {

BsRisChannel::BsRisChannel(ArrayGeometry bs, ArrayGeometry ris, SubcarrierGrid grid, bool cache)
    : bs_(std::move(bs)), ris_(std::move(ris)), grid_(std::move(grid)) {
  if ((ris_.reference() - bs_.reference()).norm() == 0.0) {
    throw DegenerateGeometry("BS and RIS coincide");
  }
  if (cache) cached_ = synthesize_bs_ris_channel(bs_, ris_, grid_);
}

CMatrix BsRisChannel::at(std::size_t m) const {
  if (m >= grid_.size()) throw DomainError("subcarrier out of range");
  if (!cached_.empty()) return cached_[m];
  return bs_ris_matrix(bs_, ris_, grid_.wavenumber(m));
}

namespace {

CMatrix stack(const CMatrixSeq& blocks) {
  if (blocks.empty()) return {};
  const Eigen::Index r = blocks.front().rows();
  CMatrix out(r * static_cast<Eigen::Index>(blocks.size()), blocks.front().cols());
  for (std::size_t p = 0; p < blocks.size(); ++p) {
    out.middleRows(static_cast<Eigen::Index>(p) * r, r) = blocks[p];
  }
  return out;
}

CVector colored_noise(const CMatrix& w, double sigma2, Rng& rng) {
  CVector nbar(w.cols());
  for (Eigen::Index i = 0; i < nbar.size(); ++i) nbar(i) = complex_normal(rng, sigma2);
  return w * nbar;
}

}  // namespace

CMatrix SoundingFrame::stacked_nris() const { return stack(w_nris); }

CMatrix SoundingFrame::stacked_ris_direct() const { return stack(w_ris); }

CMatrix SoundingFrame::stacked_ris(const CMatrix& h_br) const {
  if (w_ris.size() != ris_phases.size()) throw DimensionError("RIS slot count mismatch");
  if (w_ris.empty()) return {};
  const Eigen::Index r = w_ris.front().rows();
  CMatrix out(r * static_cast<Eigen::Index>(w_ris.size()), h_br.cols());
  for (std::size_t p = 0; p < w_ris.size(); ++p) {
    if (ris_phases[p].size() != h_br.cols()) throw DimensionError("RIS phase length mismatch");
    out.middleRows(static_cast<Eigen::Index>(p) * r, r).noalias() =
        (w_ris[p] * h_br) * ris_phases[p].cast<Complex>().asDiagonal();
  }
  return out;
}

CMatrixSeq SoundingFrame::stacked_ris_all(const BsRisChannel& h_br) const {
  CMatrixSeq out;
  out.reserve(h_br.grid().size());
  for (std::size_t m = 0; m < h_br.grid().size(); ++m) out.push_back(stacked_ris(h_br.at(m)));
  return out;
}

RVector pgd_selector(std::size_t num_elements, std::size_t num_rf) {
  RVector row = RVector::Zero(static_cast<Eigen::Index>(num_elements));
  const double v = 1.0 / std::sqrt(static_cast<double>(num_rf));
  const auto n = static_cast<Eigen::Index>(num_elements);
  if (n % 2 == 1) {
    row((n - 1) / 2) = v;
  } else {
    row(n / 2 - 1) = v;
    row(n / 2) = v;
  }
  return row;
}

CMatrixSeq build_w_nris(std::size_t slots, std::size_t num_elements, std::size_t num_rf,
                        std::uint64_t seed, bool pgd_row) {
  if (slots < 1 || num_elements < 1 || num_rf < 1) throw ConfigError("empty combiner request");
  Rng rng(seed);
  const double v = 1.0 / std::sqrt(static_cast<double>(num_rf));
  CMatrixSeq out;
  out.reserve(slots);
  for (std::size_t p = 0; p < slots; ++p) {
    CMatrix w(static_cast<Eigen::Index>(num_rf), static_cast<Eigen::Index>(num_elements));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index n = 0; n < w.cols(); ++n) {
        w(i, n) = std::polar(v, 2.0 * kPi * uniform01(rng));
      }
    }
    out.push_back(std::move(w));
  }
  if (pgd_row) out.front().row(0) = pgd_selector(num_elements, num_rf).cast<Complex>().transpose();
  return out;
}

double spread_frequency(const SubcarrierGrid& grid, std::size_t slots, std::size_t num_rf,
                        std::size_t p, std::size_t i) {
  const double step = grid.bandwidth() / static_cast<double>(num_rf * slots);
  return grid.center_frequency() - grid.bandwidth() / 2.0 +
         step * static_cast<double>(p * num_rf + i + 1);
}

CMatrixSeq build_w_ris(std::size_t slots, const ArrayGeometry& bs, const ArrayGeometry& ris,
                       const SubcarrierGrid& grid, std::size_t num_rf, RisCombinerMode mode) {
  if (slots < 1 || num_rf < 1) throw ConfigError("empty combiner request");
  const PolarPoint target = bs.polar_of(ris.reference());
  const double gain = std::sqrt(static_cast<double>(bs.size()) / static_cast<double>(num_rf));
  CMatrixSeq out;
  out.reserve(slots);
  const CVector center_row =
      gain * near_steering_at(bs, grid.center_wavenumber(), target.theta, target.range).conjugate();
  for (std::size_t p = 0; p < slots; ++p) {
    CMatrix w(static_cast<Eigen::Index>(num_rf), static_cast<Eigen::Index>(bs.size()));
    for (std::size_t i = 0; i < num_rf; ++i) {
      if (mode == RisCombinerMode::kCenterFrequency) {
        w.row(static_cast<Eigen::Index>(i)) = center_row.transpose();
      } else {
        const double k = 2.0 * kPi * spread_frequency(grid, slots, num_rf, p, i) / kSpeedOfLight;
        w.row(static_cast<Eigen::Index>(i)) =
            gain * near_steering_at(bs, k, target.theta, target.range).conjugate().transpose();
      }
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<RVector> build_ris_phases(std::size_t slots, std::size_t num_ris, std::uint64_t seed) {
  Rng rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<RVector> out;
  out.reserve(slots);
  for (std::size_t p = 0; p < slots; ++p) {
    RVector v(static_cast<Eigen::Index>(num_ris));
    for (Eigen::Index q = 0; q < v.size(); ++q) v(q) = coin(rng) ? 1.0 : -1.0;
    out.push_back(std::move(v));
  }
  return out;
}

CVectorSeq receive_direct(const CVectorSeq& h_bu, const SoundingFrame& frame, std::uint64_t seed) {
  if (frame.w_nris.empty()) throw DimensionError("frame has no RIS-off slots");
  const CMatrix w = frame.stacked_nris();
  Rng rng(seed);
  CVectorSeq out;
  out.reserve(h_bu.size());
  const Eigen::Index r = frame.w_nris.front().rows();
  for (const CVector& h : h_bu) {
    if (h.size() != w.cols()) throw DimensionError("channel length does not match combiner");
    CVector y = frame.pilot_amp * (w * h);
    if (frame.noise_power > 0.0) {
      for (std::size_t p = 0; p < frame.w_nris.size(); ++p) {
        y.segment(static_cast<Eigen::Index>(p) * r, r) +=
            colored_noise(frame.w_nris[p], frame.noise_power, rng);
      }
    }
    out.push_back(std::move(y));
  }
  return out;
}

CVectorSeq receive_reflected(const CVectorSeq& h_ru, const CVectorSeq& h_bu,
                             const BsRisChannel& h_br, const SoundingFrame& frame,
                             std::uint64_t seed) {
  if (frame.w_ris.empty()) throw DimensionError("frame has no RIS-on slots");
  if (frame.w_ris.size() != frame.ris_phases.size()) throw DimensionError("RIS slot mismatch");
  if (h_ru.size() != h_bu.size() || h_ru.size() != h_br.grid().size()) {
    throw DimensionError("subcarrier count mismatch");
  }
  Rng rng(seed);
  const Eigen::Index r = frame.w_ris.front().rows();
  CVectorSeq out;
  out.reserve(h_ru.size());
  for (std::size_t m = 0; m < h_ru.size(); ++m) {
    const CMatrix H = h_br.at(m);
    if (H.cols() != h_ru[m].size() || H.rows() != h_bu[m].size()) {
      throw DimensionError("channel length does not match BS/RIS matrix");
    }
    const auto slots = static_cast<Eigen::Index>(frame.w_ris.size());
    CMatrix phased(h_ru[m].size(), slots);
    for (Eigen::Index p = 0; p < slots; ++p) {
      phased.col(p) = frame.ris_phases[static_cast<std::size_t>(p)].cast<Complex>().cwiseProduct(h_ru[m]);
    }
    const CMatrix reflected = H * phased;
    CVector y(r * slots);
    for (std::size_t p = 0; p < frame.w_ris.size(); ++p) {
      const auto col = static_cast<Eigen::Index>(p);
      CVector seg = frame.pilot_amp * (frame.w_ris[p] * (reflected.col(col) + h_bu[m]));
      if (frame.noise_power > 0.0) seg += colored_noise(frame.w_ris[p], frame.noise_power, rng);
      y.segment(static_cast<Eigen::Index>(p) * r, r) = seg;
    }
    out.push_back(std::move(y));
  }
  return out;
}

PilotObservation receive(const CVectorSeq& h_bu, const CVectorSeq& h_ru, const BsRisChannel& h_br,
                         const SoundingFrame& frame, std::uint64_t seed) {
  PilotObservation obs;
  obs.y_nris = receive_direct(h_bu, frame, derive_seed({seed, 1}));
  obs.y_ris = receive_reflected(h_ru, h_bu, h_br, frame, derive_seed({seed, 2}));
  return obs;
}

CMatrixSeq equivalent_matrix(const CMatrix& w, const PolarDictionary& dict) {
  if (w.cols() != static_cast<Eigen::Index>(dict.rows())) {
    throw DimensionError("combiner width does not match dictionary");
  }
  CMatrixSeq out;
  out.reserve(dict.subcarriers());
  for (std::size_t m = 0; m < dict.subcarriers(); ++m) out.push_back(w * dict.atoms(m));
  return out;
}

CMatrixSeq equivalent_matrix(const CMatrixSeq& w, const PolarDictionary& dict) {
  if (w.size() != dict.subcarriers()) throw DimensionError("subcarrier count mismatch");
  CMatrixSeq out;
  out.reserve(w.size());
  for (std::size_t m = 0; m < w.size(); ++m) {
    if (w[m].cols() != static_cast<Eigen::Index>(dict.rows())) {
      throw DimensionError("combiner width does not match dictionary");
    }
    out.push_back(w[m] * dict.atoms(m));
  }
  return out;
}

double pilot_amplitude(double power_dbm, std::size_t num_subcarriers) {
  const double watts = std::pow(10.0, (power_dbm - 30.0) / 10.0);
  return std::sqrt(watts / static_cast<double>(num_subcarriers));
}

double subcarrier_noise_power(double density_dbm_hz, double bandwidth,
                              std::size_t num_subcarriers) {
  const double density = std::pow(10.0, (density_dbm_hz - 30.0) / 10.0);
  return density * bandwidth / static_cast<double>(num_subcarriers);
}

}  // namespace thzloc
