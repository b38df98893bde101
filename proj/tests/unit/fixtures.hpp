#pragma once

#include <cmath>

#include "thzloc/geometry.hpp"

namespace fixture {

inline const thzloc::Point2 kBs{-10.0 * std::sqrt(2.0), 0.0};
inline const thzloc::Point2 kRis{10.0 * std::sqrt(2.0), 0.0};

inline thzloc::ArrayGeometry bs_array(std::size_t n, const thzloc::SubcarrierGrid& grid) {
  return {n, thzloc::half_wavelength(grid), thzloc::kPi / 4.0, kBs, thzloc::Handedness::kStandard};
}

inline thzloc::ArrayGeometry ris_array(std::size_t n, const thzloc::SubcarrierGrid& grid) {
  return {n, thzloc::half_wavelength(grid), thzloc::kPi / 4.0, kRis, thzloc::Handedness::kMirrored};
}

}  // namespace fixture
