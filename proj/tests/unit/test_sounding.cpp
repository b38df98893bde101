#include <doctest.h>

#include "fixtures.hpp"
#include "thzloc/rng.hpp"
#include "thzloc/sounding.hpp"

using namespace thzloc;

namespace {

CVectorSeq random_channel(std::size_t n, std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  CVectorSeq h(m, CVector(static_cast<Eigen::Index>(n)));
  for (CVector& v : h) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = Complex(g(rng), g(rng));
  }
  return h;
}

}  // namespace

TEST_SUITE("sounding") {
  TEST_CASE("selector row, odd and even arrays") {
    const CMatrixSeq odd = build_w_nris(3, 5, 4, 1, true);
    const double e = 0.5;
    CHECK((odd[0].row(0).transpose() - CVector::Unit(5, 2) * e).norm() < 1e-15);
    const CMatrixSeq even = build_w_nris(3, 4, 4, 1, true);
    CVector want = CVector::Zero(4);
    want(1) = e;
    want(2) = e;
    CHECK((even[0].row(0).transpose() - want).norm() < 1e-15);
    CHECK((pgd_selector(5, 4) - RVector::Unit(5, 2) * e).norm() < 1e-15);
  }

  TEST_CASE("constant-modulus combiner entries") {
    const CMatrixSeq w = build_w_nris(4, 16, 4, 7, true);
    REQUIRE(w.size() == 4);
    for (std::size_t p = 0; p < w.size(); ++p) {
      REQUIRE(w[p].rows() == 4);
      for (Eigen::Index i = 0; i < w[p].rows(); ++i) {
        if (p == 0 && i == 0) continue;
        for (Eigen::Index n = 0; n < w[p].cols(); ++n) REQUIRE(std::abs(w[p](i, n)) == doctest::Approx(0.5));
      }
    }
  }

  TEST_CASE("spread combiner frequencies") {
    const SubcarrierGrid grid(100e9, 10e9, 64);
    CHECK(spread_frequency(grid, 8, 4, 7, 3) == doctest::Approx(100e9 + 5e9).epsilon(1e-14));
    CHECK(spread_frequency(grid, 8, 4, 0, 0) > 95e9);
  }

  TEST_CASE("center-frequency combiner rows are identical") {
    const SubcarrierGrid grid(100e9, 10e9, 8);
    const CMatrixSeq w = build_w_ris(3, fixture::bs_array(16, grid), fixture::ris_array(16, grid), grid, 4,
                                     RisCombinerMode::kCenterFrequency);
    for (const CMatrix& slot : w) {
      for (Eigen::Index i = 0; i < slot.rows(); ++i) CHECK((slot.row(i) - w[0].row(0)).norm() < 1e-15);
    }
  }

  TEST_CASE("RIS phase schedule") {
    const std::vector<RVector> a = build_ris_phases(100, 100, 3);
    double sum = 0.0;
    for (const RVector& v : a) {
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        REQUIRE(std::abs(v(i)) == 1.0);
        sum += v(i);
      }
    }
    CHECK(std::abs(sum / 1e4) < 0.05);
    const std::vector<RVector> b = build_ris_phases(100, 100, 3);
    for (std::size_t p = 0; p < a.size(); ++p) CHECK(a[p] == b[p]);
  }

  TEST_CASE("noise-free selector returns the scaled center sample") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    const std::size_t n = 9;
    const CVectorSeq h = random_channel(n, grid.size(), 11);
    SoundingFrame f;
    f.w_nris = {CMatrix(CVector::Unit(static_cast<Eigen::Index>(n), 4).transpose())};
    f.pilot_amp = 3.0;
    const CVectorSeq y = receive_direct(h, f, 1);
    for (std::size_t m = 0; m < grid.size(); ++m) CHECK(std::abs(y[m](0) - 3.0 * h[m](4)) < 1e-14);
  }

  TEST_CASE("pilots scale linearly with the amplitude") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    const CVectorSeq h = random_channel(8, grid.size(), 12);
    SoundingFrame f;
    f.w_nris = build_w_nris(2, 8, 2, 5, true);
    const CVectorSeq y1 = receive_direct(h, f, 1);
    f.pilot_amp = 2.0;
    const CVectorSeq y2 = receive_direct(h, f, 1);
    for (std::size_t m = 0; m < grid.size(); ++m) CHECK((y2[m] - 2.0 * y1[m]).norm() < 1e-13 * y1[m].norm());
  }

  TEST_CASE("RIS-on pilots without a reflected channel") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    const ArrayGeometry bs = fixture::bs_array(8, grid), ris = fixture::ris_array(8, grid);
    const BsRisChannel hbr(bs, ris, grid);
    SoundingFrame f;
    f.w_nris = build_w_nris(2, 8, 2, 5, true);
    f.w_ris = build_w_ris(3, bs, ris, grid, 2, RisCombinerMode::kSpread);
    f.ris_phases = build_ris_phases(3, 8, 6);
    const CVectorSeq h_bu = random_channel(8, grid.size(), 13);
    const CVectorSeq zero(grid.size(), CVector::Zero(8));
    const PilotObservation obs = receive(h_bu, zero, hbr, f, 1);
    const CMatrix w = f.stacked_ris_direct();
    for (std::size_t m = 0; m < grid.size(); ++m) CHECK((obs.y_ris[m] - w * h_bu[m]).norm() < 1e-13);
  }

  TEST_CASE("equivalent sensing matrices") {
    const SubcarrierGrid grid(100e9, 10e9, 3);
    const ArrayGeometry a = fixture::bs_array(8, grid);
    const PolarDictionary d = build_fsprd(a, grid, 2, 1);
    const CMatrix w = build_w_nris(2, 8, 2, 4, false)[0];
    const CMatrixSeq wt = equivalent_matrix(w, d);
    REQUIRE(wt.size() == grid.size());
    for (std::size_t m = 0; m < grid.size(); ++m) {
      CHECK(wt[m].rows() == 2);
      CHECK(wt[m].cols() == static_cast<Eigen::Index>(d.size()));
      CHECK((wt[m].col(5) - w * d.atom(5, m)).norm() < 1e-14);
    }
    const CMatrixSeq ident = equivalent_matrix(CMatrix(CMatrix::Identity(8, 8)), d);
    for (std::size_t m = 0; m < grid.size(); ++m) CHECK((ident[m] - d.atoms(m)).norm() == 0.0);
  }

  TEST_CASE("power and noise mapping") {
    CHECK(pilot_amplitude(30.0, 4) == doctest::Approx(std::sqrt(1.0 / 4.0)).epsilon(1e-12));
    CHECK(subcarrier_noise_power(-174.0, 10e9, 2) ==
          doctest::Approx(std::pow(10.0, -20.4) * 10e9 / 2.0).epsilon(1e-12));
  }
}
