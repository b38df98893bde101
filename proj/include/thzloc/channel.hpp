#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "thzloc/geometry.hpp"

namespace thzloc {

struct SceneConfig {
  ArrayGeometry bs;
  ArrayGeometry ris;
  double sector_radius = 100.0;
  Point2 sector_apex = Point2::Zero();
  double sector_heading = -kPi / 2.0;  // direction of the sector bisector
  double sector_width = kPi / 2.0;     // full central angle
  std::optional<Point2> fixed_ue;
  std::size_t clusters_bs = 3;
  std::size_t clusters_ris = 3;
  std::size_t paths_per_cluster = 6;
  double scattering_area = 3.0;  // m^2, per path
  double min_clearance = 3.0;    // m between any drawn point and the anchors / UE
};

struct Scene {
  Point2 ue = Point2::Zero();
  ArrayGeometry bs;
  ArrayGeometry ris;
  std::vector<Point2> scatterers_bs;
  std::vector<Point2> scatterers_ris;
  double sector_radius = 100.0;
  std::size_t paths_per_cluster = 6;
  double scattering_area = 3.0;

  double bs_ris_distance() const { return (ris.reference() - bs.reference()).norm(); }
};

bool in_sector(const SceneConfig& config, const Point2& p);
Scene draw_scene(const SceneConfig& config, std::uint64_t seed);

struct LinkBudget {
  double antenna_gain_tx = 1.0;
  double antenna_gain_rx = 1.0;
  double absorption_db_per_km = -0.45;
};

// Amplitude factor of molecular absorption over a path length in meters.
double absorption_factor(double distance, const LinkBudget& budget);

// Friis gain of a free-space hop, e^{j phase} included.
Complex los_gain(const SubcarrierGrid& grid, std::size_t m, double distance,
                 const LinkBudget& budget, double phase);

// Friis gain of a chain of hops joined by re-radiating areas (scatterers or a RIS).
// hops.size() == areas.size() + 1.
Complex cascaded_gain(const SubcarrierGrid& grid, std::size_t m, const std::vector<double>& hops,
                      const std::vector<double>& areas, const LinkBudget& budget, double phase);

struct PathComponent {
  double theta = 0.0;
  double r_last_hop = 0.0;
  double r_total = 0.0;
  CVector gains;
  bool is_los = false;
  int cluster_id = -1;
  int path_id = 0;
};

struct ChannelRealization {
  CVectorSeq per_subcarrier;
  std::vector<PathComponent> paths;
};

enum class Link { kDirect, kReflected };

// kDirect: UE -> BS array. kReflected: UE -> RIS array, gains include the RIS -> BS hop.
ChannelRealization synthesize_channel(const Scene& scene, Link link, const SubcarrierGrid& grid,
                                      std::uint64_t seed, const LinkBudget& budget = {});

CVectorSeq reconstruct(const std::vector<PathComponent>& paths, const ArrayGeometry& array,
                       const SubcarrierGrid& grid);

// Element-to-element BS/RIS channel at one wavenumber, N x N_RIS. Entries are
// (r_B2R / D_nq) e^{-j k D_nq}; the absolute Friis scale lives in the RIS-link path gains.
CMatrix bs_ris_matrix(const ArrayGeometry& bs, const ArrayGeometry& ris, double wavenumber);
CMatrixSeq synthesize_bs_ris_channel(const ArrayGeometry& bs, const ArrayGeometry& ris,
                                     const SubcarrierGrid& grid);

}  // namespace thzloc
