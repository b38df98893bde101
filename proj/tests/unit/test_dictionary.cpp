#include <doctest.h>

#include "fixtures.hpp"
#include "thzloc/dictionary.hpp"

using namespace thzloc;

TEST_SUITE("dictionary") {
  TEST_CASE("grid size at full array scale") {
    const std::vector<AtomParams> g = polar_grid(256, 10, 2, 26.0);
    CHECK(g.size() == 5120);
    CHECK(g.front().theta == doctest::Approx(-511.0 / 512.0).epsilon(1e-15));
    CHECK(g.front().far_field());
  }

  TEST_CASE("first ring radius at broadside") {
    const double z = 13.0;
    const std::vector<AtomParams> g = polar_grid(5, 3, 1, z);
    const AtomParams& p = g[2 * 3 + 1];
    CHECK(p.theta == doctest::Approx(0.0));
    REQUIRE(p.range.has_value());
    CHECK(*p.range == doctest::Approx(2.0 * z).epsilon(1e-15));
  }

  TEST_CASE("FTM is orthonormal") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    for (std::size_t n : {std::size_t{4}, std::size_t{5}, std::size_t{16}}) {
      const PolarDictionary d = build_ftm(fixture::bs_array(n, grid), grid);
      CHECK(d.size() == n);
      const CMatrix a = d.atoms(0);
      CHECK((a.adjoint() * a - CMatrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))).norm() < 1e-10);
    }
  }

  TEST_CASE("FTM broadside column is constant") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    const PolarDictionary d = build_ftm(fixture::bs_array(5, grid), grid);
    bool found = false;
    for (std::size_t k = 0; k < d.size(); ++k) {
      if (std::abs(d.params(k).theta) > 1e-15) continue;
      found = true;
      const CVector v = d.atom(k, 0);
      for (Eigen::Index n = 0; n < v.size(); ++n) CHECK(std::abs(v(n) - 1.0 / std::sqrt(5.0)) < 1e-15);
    }
    CHECK(found);
  }

  TEST_CASE("PTM is frequency flat and matches FSPRD at the carrier") {
    const SubcarrierGrid grid(100e9, 10e9, 4);  // subcarrier 2 sits on the carrier
    const ArrayGeometry a = fixture::bs_array(16, grid);
    const PolarDictionary ptm = build_ptm(a, grid, 3, 2);
    const PolarDictionary fsprd = build_fsprd(a, grid, 3, 2);
    REQUIRE(grid.frequency(2) == doctest::Approx(100e9));
    for (std::size_t k : {std::size_t{0}, std::size_t{7}, std::size_t{50}, ptm.size() - 1}) {
      CHECK((ptm.atom(k, 0) - ptm.atom(k, 3)).norm() == 0.0);
      CHECK((ptm.atom(k, 2) - fsprd.atom(k, 2)).norm() < 1e-12);
    }
    CHECK((fsprd.atom(7, 0) - fsprd.atom(7, 3)).norm() > 1e-3);
  }

  TEST_CASE("appending an atom") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    const PolarDictionary d = build_fsprd(fixture::bs_array(16, grid), grid, 2, 1);
    const auto [e, k] = append_atom(d, 0.123, 7.5);
    CHECK(e.size() == d.size() + 1);
    CHECK(k == d.size());
    CHECK(e.params(k).theta == 0.123);
    CHECK(*e.params(k).range == 7.5);
    CHECK((e.atom(k, 1) - near_steering(d.array(), grid, 1, 0.123, 7.5)).norm() < 1e-14);
    CHECK(d.size() == 32);
  }

  TEST_CASE("index map") {
    const SubcarrierGrid grid(100e9, 10e9, 2);
    const PolarDictionary d = build_fsprd(fixture::bs_array(256, grid), grid, 10, 2, 0.1, true);
    CHECK(grid_params(d, 10).theta == doctest::Approx(1.0 / 512.0 - 1.0).epsilon(1e-15));
    CHECK(grid_params(d, 5120).theta == doctest::Approx(1023.0 / 512.0 - 1.0).epsilon(1e-15));
    for (std::size_t i = 1; i <= d.base_size(); ++i) {
      const AtomParams p = grid_params(d, i);
      REQUIRE(p.theta == d.params(i - 1).theta);
      REQUIRE(p.range == d.params(i - 1).range);
    }
    CHECK_THROWS(grid_params(d, 0));
  }

  TEST_CASE("cache round trip") {
    const SubcarrierGrid grid(100e9, 10e9, 3);
    const ArrayGeometry a = fixture::bs_array(8, grid);
    const std::filesystem::path dir = std::filesystem::temp_directory_path() / "thzloc_dict_test";
    std::filesystem::remove_all(dir);
    const PolarDictionary first = build_fsprd_cached(dir, a, grid, 2, 2);
    const PolarDictionary second = build_fsprd_cached(dir, a, grid, 2, 2);
    for (std::size_t m = 0; m < grid.size(); ++m) CHECK((first.atoms(m) - second.atoms(m)).norm() == 0.0);
    std::filesystem::remove_all(dir);
  }
}
