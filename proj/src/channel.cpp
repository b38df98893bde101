#include "thzloc/channel.hpp"

#include <cmath>

#include "thzloc/rng.hpp"

namespace thzloc {

namespace {

constexpr int kMaxDrawAttempts = 100000;

Point2 draw_in_sector(const SceneConfig& cfg, Rng& rng) {
  const double r = cfg.sector_radius * std::sqrt(uniform01(rng));
  const double a = cfg.sector_heading + (uniform01(rng) - 0.5) * cfg.sector_width;
  return cfg.sector_apex + r * Point2(std::cos(a), std::sin(a));
}

bool clear_of(const Point2& p, const std::vector<Point2>& others, double clearance) {
  for (const Point2& o : others) {
    if ((p - o).norm() < clearance) return false;
  }
  return true;
}

template <typename Accept>
Point2 draw_accepted(const SceneConfig& cfg, Rng& rng, Accept accept) {
  for (int i = 0; i < kMaxDrawAttempts; ++i) {
    const Point2 p = draw_in_sector(cfg, rng);
    if (accept(p)) return p;
  }
  throw ConfigError("sector admits no valid point under the clearance constraints");
}

}  // namespace

bool in_sector(const SceneConfig& cfg, const Point2& p) {
  const Point2 v = p - cfg.sector_apex;
  const double r = v.norm();
  if (r > cfg.sector_radius * (1.0 + 1e-12)) return false;
  if (r == 0.0) return true;
  double da = std::atan2(v.y(), v.x()) - cfg.sector_heading;
  da = std::remainder(da, 2.0 * kPi);
  return std::abs(da) <= cfg.sector_width / 2.0 + 1e-12;
}

Scene draw_scene(const SceneConfig& cfg, std::uint64_t seed) {
  if (!(cfg.sector_radius > 0.0) || !(cfg.sector_width > 0.0)) {
    throw ConfigError("empty sector");
  }
  if (cfg.paths_per_cluster < 1) throw ConfigError("paths per cluster must be positive");
  if ((cfg.bs.reference() - cfg.ris.reference()).norm() == 0.0) {
    throw ConfigError("BS and RIS reference points coincide");
  }

  Rng rng(seed);
  Scene scene;
  scene.bs = cfg.bs;
  scene.ris = cfg.ris;
  scene.sector_radius = cfg.sector_radius;
  scene.paths_per_cluster = cfg.paths_per_cluster;
  scene.scattering_area = cfg.scattering_area;

  const std::vector<Point2> anchors{cfg.bs.reference(), cfg.ris.reference()};
  if (cfg.fixed_ue) {
    scene.ue = *cfg.fixed_ue;
  } else {
    scene.ue = draw_accepted(cfg, rng, [&](const Point2& p) {
      return cfg.bs.in_front(p) && cfg.ris.in_front(p) && clear_of(p, anchors, cfg.min_clearance);
    });
  }

  std::vector<Point2> avoid = anchors;
  avoid.push_back(scene.ue);
  for (std::size_t c = 0; c < cfg.clusters_bs; ++c) {
    scene.scatterers_bs.push_back(draw_accepted(cfg, rng, [&](const Point2& p) {
      return cfg.bs.in_front(p) && clear_of(p, avoid, cfg.min_clearance);
    }));
  }
  for (std::size_t c = 0; c < cfg.clusters_ris; ++c) {
    scene.scatterers_ris.push_back(draw_accepted(cfg, rng, [&](const Point2& p) {
      return cfg.ris.in_front(p) && clear_of(p, avoid, cfg.min_clearance);
    }));
  }
  return scene;
}

double absorption_factor(double distance, const LinkBudget& budget) {
  return std::pow(10.0, budget.absorption_db_per_km * distance / 1000.0 / 20.0);
}

Complex los_gain(const SubcarrierGrid& grid, std::size_t m, double distance,
                 const LinkBudget& budget, double phase) {
  if (!(distance > 0.0)) throw DomainError("distance must be positive");
  return cascaded_gain(grid, m, {distance}, {}, budget, phase);
}

Complex cascaded_gain(const SubcarrierGrid& grid, std::size_t m, const std::vector<double>& hops,
                      const std::vector<double>& areas, const LinkBudget& budget, double phase) {
  if (hops.size() != areas.size() + 1) throw DimensionError("hop/area count mismatch");
  double mag = std::sqrt(budget.antenna_gain_tx * budget.antenna_gain_rx) * grid.wavelength(m) /
               (4.0 * kPi);
  double total = 0.0;
  for (double h : hops) {
    if (!(h > 0.0)) throw DomainError("distance must be positive");
    mag /= h;
    total += h;
  }
  for (double a : areas) mag *= std::sqrt(a / (4.0 * kPi));
  return std::polar(mag * absorption_factor(total, budget), phase);
}

ChannelRealization synthesize_channel(const Scene& scene, Link link, const SubcarrierGrid& grid,
                                      std::uint64_t seed, const LinkBudget& budget) {
  const ArrayGeometry& array = link == Link::kDirect ? scene.bs : scene.ris;
  const std::vector<Point2>& scatterers =
      link == Link::kDirect ? scene.scatterers_bs : scene.scatterers_ris;
  const double b2r = scene.bs_ris_distance();
  const double ris_area = std::pow(static_cast<double>(scene.ris.size()) * scene.ris.spacing(), 2);
  const std::size_t M = grid.size();

  Rng rng(seed);
  ChannelRealization out;

  auto make_gains = [&](std::vector<double> hops, std::vector<double> areas, Complex small) {
    if (link == Link::kReflected) {
      hops.push_back(b2r);
      areas.push_back(ris_area);
    }
    const double phase = 2.0 * kPi * uniform01(rng);
    CVector g(M);
    for (std::size_t m = 0; m < M; ++m) g(m) = small * cascaded_gain(grid, m, hops, areas, budget, phase);
    return g;
  };

  {
    const PolarPoint pp = array.polar_of(scene.ue);
    if (!(pp.range > array.aperture() / 2.0)) {
      throw DegenerateGeometry("UE inside the array aperture");
    }
    PathComponent los;
    los.theta = pp.theta;
    los.r_last_hop = pp.range;
    los.r_total = pp.range;
    los.is_los = true;
    los.gains = make_gains({pp.range}, {}, Complex(1.0, 0.0));
    out.paths.push_back(std::move(los));
  }

  const double side = std::sqrt(scene.scattering_area);
  for (std::size_t c = 0; c < scatterers.size(); ++c) {
    for (std::size_t g = 0; g < scene.paths_per_cluster; ++g) {
      const Point2 jitter((uniform01(rng) - 0.5) * side, (uniform01(rng) - 0.5) * side);
      const Point2 q = scatterers[c] + jitter;
      const PolarPoint pp = array.polar_of(q);
      const double r1 = (scene.ue - q).norm();
      const Complex small = complex_normal(rng);
      PathComponent path;
      path.theta = pp.theta;
      path.r_last_hop = pp.range;
      path.r_total = r1 + pp.range;
      path.cluster_id = static_cast<int>(c);
      path.path_id = static_cast<int>(g);
      path.gains = make_gains({r1, pp.range}, {scene.scattering_area}, small);
      out.paths.push_back(std::move(path));
    }
  }

  out.per_subcarrier = reconstruct(out.paths, array, grid);
  return out;
}

CVectorSeq reconstruct(const std::vector<PathComponent>& paths, const ArrayGeometry& array,
                       const SubcarrierGrid& grid) {
  CVectorSeq out(grid.size(), CVector::Zero(static_cast<Eigen::Index>(array.size())));
  for (std::size_t m = 0; m < grid.size(); ++m) {
    const double k = grid.wavenumber(m);
    for (const PathComponent& p : paths) {
      const Complex coef = p.gains(static_cast<Eigen::Index>(m)) * std::polar(1.0, -k * p.r_total);
      out[m] += coef * near_steering_at(array, k, p.theta, p.r_last_hop);
    }
  }
  return out;
}

CMatrix bs_ris_matrix(const ArrayGeometry& bs, const ArrayGeometry& ris, double wavenumber) {
  const double b2r = (ris.reference() - bs.reference()).norm();
  const auto N = static_cast<Eigen::Index>(bs.size());
  const auto Q = static_cast<Eigen::Index>(ris.size());
  std::vector<Point2> ris_pos(ris.size());
  for (std::size_t q = 0; q < ris.size(); ++q) ris_pos[q] = ris.element_position(q);
  CMatrix H(N, Q);
  for (Eigen::Index n = 0; n < N; ++n) {
    const Point2 pn = bs.element_position(static_cast<std::size_t>(n));
    for (Eigen::Index q = 0; q < Q; ++q) {
      const double D = (pn - ris_pos[static_cast<std::size_t>(q)]).norm();
      H(n, q) = std::polar(b2r / D, -wavenumber * D);
    }
  }
  return H;
}

CMatrixSeq synthesize_bs_ris_channel(const ArrayGeometry& bs, const ArrayGeometry& ris,
                                     const SubcarrierGrid& grid) {
  if ((ris.reference() - bs.reference()).norm() == 0.0) {
    throw DegenerateGeometry("BS and RIS coincide");
  }
  CMatrixSeq out;
  out.reserve(grid.size());
  for (std::size_t m = 0; m < grid.size(); ++m) out.push_back(bs_ris_matrix(bs, ris, grid.wavenumber(m)));
  return out;
}

}  // namespace thzloc
