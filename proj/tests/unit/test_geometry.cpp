#include <doctest.h>

#include "fixtures.hpp"
#include "thzloc/geometry.hpp"

using namespace thzloc;

TEST_SUITE("geometry") {
  TEST_CASE("far steering at broadside is uniform") {
    const SubcarrierGrid grid(100e9, 10e9, 8);
    const ArrayGeometry a = fixture::bs_array(16, grid);
    for (std::size_t m : {0u, 3u, 7u}) {
      const CVector v = far_steering(a, grid, m, 0.0);
      for (Eigen::Index n = 0; n < v.size(); ++n) {
        CHECK(std::abs(v(n) - Complex(0.25, 0.0)) < 1e-15);
      }
    }
  }

  TEST_CASE("far steering is conjugate symmetric in theta") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    const ArrayGeometry a = fixture::bs_array(33, grid);
    const CVector p = far_steering(a, grid, 1, 0.37);
    const CVector q = far_steering(a, grid, 1, -0.37);
    CHECK((p.conjugate() - q).norm() < 1e-14);
  }

  TEST_CASE("single-element near steering is one") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    const ArrayGeometry a = fixture::bs_array(1, grid);
    const CVector v = near_steering(a, grid, 2, 0.3, 5.0);
    REQUIRE(v.size() == 1);
    CHECK(std::abs(v(0) - Complex(1.0, 0.0)) < 1e-15);
  }

  TEST_CASE("steering vectors have unit norm") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    const ArrayGeometry a = fixture::bs_array(64, grid);
    CHECK(near_steering(a, grid, 0, -0.6, 3.0).norm() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(far_steering(a, grid, 3, 0.9).norm() == doctest::Approx(1.0).epsilon(1e-14));
  }

  TEST_CASE("classical Rayleigh distance") {
    CHECK(classical_rayleigh(0.384, 0.003) == doctest::Approx(98.3).epsilon(1e-3));
    // Reported rounded to 400 m.
    CHECK(classical_rayleigh(0.768, 0.003) == doctest::Approx(393.216).epsilon(1e-12));
    CHECK(std::abs(classical_rayleigh(0.768, 0.003) - 400.0) < 0.02 * 400.0);
    CHECK(classical_rayleigh(1.0, 2.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(classical_rayleigh(0.0, 1.0), DomainError);
  }

  TEST_CASE("effective Rayleigh distance at 0.1 THz, N = 256") {
    const SubcarrierGrid grid(100e9, 0.0, 1);
    const ArrayGeometry a(256, half_wavelength(grid), 0.0, Point2::Zero());
    const EffectiveRayleigh e = effective_rayleigh(a, grid, 0, 0.5, 0.1);
    CHECK(e.epsilon == doctest::Approx(0.4).epsilon(0.1));
    CHECK(e.distance == doctest::Approx(29.5).epsilon(0.1));
    CHECK(planar_loss(a, grid.wavenumber(0), 0.5, e.distance) == doctest::Approx(0.1).epsilon(1e-3));
    CHECK_THROWS_AS(effective_rayleigh(a, grid, 0, 0.5, 1.5), DomainError);
  }

  TEST_CASE("planar loss at the classical distance" * doctest::may_fail()) {
    const SubcarrierGrid grid(100e9, 0.0, 1);
    const ArrayGeometry a(256, half_wavelength(grid), 0.0, Point2::Zero());
    CHECK(planar_loss(a, grid.wavenumber(0), 0.5, 98.3) == doctest::Approx(0.0096).epsilon(0.1));
  }

  TEST_CASE("self correlation is one") {
    const SubcarrierGrid grid(100e9, 0.0, 1);
    const ArrayGeometry a(128, half_wavelength(grid), 0.0, Point2::Zero());
    for (double z : {2.0, 10.0, 50.0}) {
      CHECK(steering_correlation(a, grid.wavenumber(0), 0.2, z).chi == doctest::Approx(1.0).epsilon(1e-14));
    }
  }

  TEST_CASE("beam squint across the band") {
    const SubcarrierGrid grid(100e9, 10e9, 2048);
    // Apparent angle at the lowest subcarrier of a beam seen at 0.5 on the highest one.
    const double shift = squint_shift(grid, 0.5, grid.size() - 1, 0);
    CHECK(std::abs(0.5 + shift - 0.55) < 0.005);
    CHECK(std::abs(shift * 256.0 - 12.8) < 1.0);
    CHECK(std::abs(squint_spread(grid, 0.5) - 0.05) < 0.002);
    CHECK(squint_shift(grid, 0.5, 17, 17) == 0.0);
  }

  TEST_CASE("polar coordinates round trip") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    for (const ArrayGeometry& a : {fixture::bs_array(64, grid), fixture::ris_array(64, grid)}) {
      const Point2 p = a.point_at(-0.42, 17.5);
      const PolarPoint q = a.polar_of(p);
      CHECK(q.theta == doctest::Approx(-0.42).epsilon(1e-12));
      CHECK(q.range == doctest::Approx(17.5).epsilon(1e-12));
      CHECK(a.in_front(p));
    }
  }

  TEST_CASE("argument checks") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    const ArrayGeometry a = fixture::bs_array(8, grid);
    CHECK_THROWS_AS(far_steering(a, grid, 4, 0.0), DomainError);
    CHECK_THROWS_AS(far_steering(a, grid, 0, 1.5), DomainError);
  }
}
