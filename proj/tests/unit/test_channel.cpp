#include <doctest.h>

#include "fixtures.hpp"
#include "thzloc/channel.hpp"

using namespace thzloc;

namespace {

SceneConfig scene_config(std::size_t n, const SubcarrierGrid& grid) {
  SceneConfig c;
  c.bs = fixture::bs_array(n, grid);
  c.ris = fixture::ris_array(n, grid);
  return c;
}

}  // namespace

TEST_SUITE("channel") {
  TEST_CASE("scene draws are reproducible") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    const SceneConfig c = scene_config(16, grid);
    const Scene a = draw_scene(c, 42), b = draw_scene(c, 42);
    CHECK(a.ue == b.ue);
    REQUIRE(a.scatterers_bs.size() == b.scatterers_bs.size());
    for (std::size_t i = 0; i < a.scatterers_bs.size(); ++i) CHECK(a.scatterers_bs[i] == b.scatterers_bs[i]);
    for (std::size_t i = 0; i < a.scatterers_ris.size(); ++i) CHECK(a.scatterers_ris[i] == b.scatterers_ris[i]);
    CHECK(draw_scene(c, 43).ue != a.ue);
  }

  TEST_CASE("fixed UE and anchors are kept") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    SceneConfig c = scene_config(16, grid);
    c.fixed_ue = Point2(5.96, -10.1);
    const Scene s = draw_scene(c, 3);
    CHECK(s.ue == Point2(5.96, -10.1));
    CHECK(s.bs.reference() == fixture::kBs);
    CHECK(s.ris.reference() == fixture::kRis);
  }

  TEST_CASE("scatterers stay inside the sector") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    const SceneConfig c = scene_config(16, grid);
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      const Scene s = draw_scene(c, seed);
      CHECK(in_sector(c, s.ue));
      for (const Point2& p : s.scatterers_bs) REQUIRE((p - c.sector_apex).norm() <= c.sector_radius);
      for (const Point2& p : s.scatterers_ris) REQUIRE((p - c.sector_apex).norm() <= c.sector_radius);
    }
  }

  TEST_CASE("free-space gain follows 1/R") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    LinkBudget lossless;
    lossless.absorption_db_per_km = 0.0;
    const double g1 = std::abs(los_gain(grid, 1, 12.0, lossless, 0.3));
    const double g2 = std::abs(los_gain(grid, 1, 24.0, lossless, -1.1));
    CHECK(g1 / g2 == doctest::Approx(2.0).epsilon(1e-14));
  }

  TEST_CASE("absorption constant") {
    CHECK(absorption_factor(1000.0, LinkBudget{}) ==
          doctest::Approx(std::pow(10.0, -0.45 / 20.0)).epsilon(1e-14));
    CHECK(absorption_factor(0.0, LinkBudget{}) == 1.0);
  }

  TEST_CASE("cascaded gain is symmetric in the hop lengths") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    const double a = std::abs(cascaded_gain(grid, 2, {7.0, 28.0}, {0.01}, LinkBudget{}, 0.0));
    const double b = std::abs(cascaded_gain(grid, 2, {28.0, 7.0}, {0.01}, LinkBudget{}, 0.0));
    CHECK(a == doctest::Approx(b).epsilon(1e-14));
  }

  TEST_CASE("scatter-free scene reduces to the LoS path") {
    const SubcarrierGrid grid(100e9, 10e9, 8);
    SceneConfig c = scene_config(32, grid);
    c.clusters_bs = 0;
    c.clusters_ris = 0;
    c.fixed_ue = Point2(5.96, -10.1);
    const Scene s = draw_scene(c, 1);
    const ChannelRealization h = synthesize_channel(s, Link::kDirect, grid, 2);
    REQUIRE(h.paths.size() == 1);
    const PolarPoint p = c.bs.polar_of(*c.fixed_ue);
    const PathComponent& los = h.paths.front();
    CHECK(los.r_total == los.r_last_hop);
    for (std::size_t m = 0; m < grid.size(); ++m) {
      const Complex g = los.gains(static_cast<Eigen::Index>(m));
      CHECK(std::abs(g) == doctest::Approx(std::abs(los_gain(grid, m, p.range, LinkBudget{}, 0.0))).epsilon(1e-12));
      const CVector want = g * std::polar(1.0, -grid.wavenumber(m) * p.range) *
                           near_steering(c.bs, grid, m, p.theta, p.range);
      CHECK((h.per_subcarrier[m] - want).norm() <= 1e-12 * want.norm());
    }
  }

  TEST_CASE("path count with three clusters of six") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    const SceneConfig c = scene_config(16, grid);
    const Scene s = draw_scene(c, 9);
    for (Link link : {Link::kDirect, Link::kReflected}) {
      const ChannelRealization h = synthesize_channel(s, link, grid, 10);
      CHECK(h.paths.size() == 19);
      CHECK(h.paths.front().is_los);
    }
  }

  TEST_CASE("reconstruction matches synthesis") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    const SceneConfig c = scene_config(16, grid);
    const Scene s = draw_scene(c, 5);
    const ChannelRealization h = synthesize_channel(s, Link::kReflected, grid, 6);
    const CVectorSeq r = reconstruct(h.paths, c.ris, grid);
    for (std::size_t m = 0; m < grid.size(); ++m) {
      CHECK((r[m] - h.per_subcarrier[m]).norm() <= 1e-12 * h.per_subcarrier[m].norm());
    }
  }

  TEST_CASE("BS/RIS channel reciprocity and Friis decay") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    const ArrayGeometry bs = fixture::bs_array(8, grid), ris = fixture::ris_array(6, grid);
    const double k = grid.wavenumber(1);
    const CMatrix h = bs_ris_matrix(bs, ris, k);
    CHECK((h.transpose() - bs_ris_matrix(ris, bs, k)).norm() < 1e-12);
    const double r0 = (ris.reference() - bs.reference()).norm();
    for (Eigen::Index n = 0; n < h.rows(); ++n) {
      for (Eigen::Index q = 0; q < h.cols(); ++q) {
        const double d = (bs.element_position(static_cast<std::size_t>(n)) -
                          ris.element_position(static_cast<std::size_t>(q))).norm();
        CHECK(std::abs(h(n, q)) > 0.0);
        CHECK(std::abs(h(n, q)) * d == doctest::Approx(r0).epsilon(1e-12));
      }
    }
  }
}
