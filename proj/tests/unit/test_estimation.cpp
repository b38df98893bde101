#include <doctest.h>

#include "fixtures.hpp"
#include "thzloc/estimation.hpp"
#include "thzloc/sounding.hpp"

using namespace thzloc;

namespace {

struct OnGrid {
  SubcarrierGrid grid{100e9, 10e9, 8};
  ArrayGeometry array = fixture::bs_array(16, grid);
  PolarDictionary dict = build_fsprd(array, grid, 2, 1);
  CMatrix w;
  CVectorSeq h;
  CVectorSeq y;
  PathComponent path;

  explicit OnGrid(std::size_t column) {
    const CMatrixSeq slots = build_w_nris(4, 16, 2, 3, false);
    w.resize(8, 16);
    for (std::size_t p = 0; p < slots.size(); ++p) w.middleRows(static_cast<Eigen::Index>(2 * p), 2) = slots[p];
    const AtomParams& p = dict.params(column);
    path.theta = p.theta;
    path.r_last_hop = p.range.value_or(0.0);
    path.is_los = true;
    path.gains.resize(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t m = 0; m < grid.size(); ++m) {
      const Complex g = std::polar(1.0 + 0.1 * static_cast<double>(m), 0.3 * static_cast<double>(m));
      path.gains(static_cast<Eigen::Index>(m)) = g;
      h.push_back(g * dict.atom(column, m));
      y.push_back(w * h.back());
    }
  }
};

}  // namespace

TEST_SUITE("estimation") {
  TEST_CASE("correlation energy of a zero residual") {
    const CMatrixSeq wt(3, CMatrix::Random(4, 6));
    const CVectorSeq r(3, CVector::Zero(4));
    CHECK(correlation_energy(wt, r).isZero(0.0));
  }

  TEST_CASE("orthonormal columns isolate the matching index") {
    const CMatrixSeq wt{CMatrix::Identity(5, 5)};
    const CVectorSeq r{CVector::Unit(5, 3)};
    const RVector e = correlation_energy(wt, r);
    for (Eigen::Index i = 0; i < 5; ++i) CHECK(e(i) == (i == 3 ? 1.0 : 0.0));
  }

  TEST_CASE("default operating point") {
    const OmpConfig cfg;
    CHECK(cfg.stop_ratio == 0.85);
    CHECK(cfg.n_select == 6);
    OmpConfig bad;
    bad.stop_ratio = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("zero pilots give an empty estimate") {
    const OnGrid s(5);
    const CVectorSeq zero(s.grid.size(), CVector::Zero(8));
    const EstimationResult r = gmmv_omp(zero, Sensing::shared(s.w), s.dict, OmpConfig{});
    CHECK(r.support.empty());
    CHECK(r.iterations_run <= 1);
    for (const CVector& v : r.h_hat) CHECK(v.isZero(0.0));
  }

  TEST_CASE("genie LS on an on-grid path") {
    const OnGrid s(13);
    const EstimationResult g = genie_ls(s.y, Sensing::shared(s.w), s.dict, {s.path});
    REQUIRE(g.support.size() == 1);
    CHECK(g.support[0] == 13);
    CHECK(nmse_db(s.h, g.h_hat) <= -100.0);
    const EstimationResult o = gmmv_omp(s.y, Sensing::shared(s.w), s.dict, OmpConfig{});
    CHECK(nmse_db(s.h, g.h_hat) <= nmse_db(s.h, o.h_hat));
  }

  TEST_CASE("first iteration finds the generating column") {
    for (std::size_t k : {0u, 9u, 20u, 31u}) {
      const OnGrid s(k);
      CHECK(first_iteration_index(s.y, Sensing::shared(s.w), s.dict) == k);
    }
  }

  TEST_CASE("precomputed column norms must match the dictionary") {
    const OnGrid s(3);
    const std::vector<RVector> wrong(1, RVector::Ones(4));
    OmpConfig cfg;
    cfg.column_norms = &wrong;
    CHECK_THROWS_AS(gmmv_omp(s.y, Sensing::shared(s.w), s.dict, cfg), DimensionError);
  }

  TEST_CASE("NMSE reference values") {
    const CVectorSeq h{CVector::Constant(3, Complex(1.0, -2.0)), CVector::Constant(3, Complex(0.5, 0.0))};
    CHECK(nmse_db(h, h) <= -300.0);
    const CVectorSeq zero(2, CVector::Zero(3));
    CHECK(nmse_db(h, zero) == doctest::Approx(0.0).epsilon(1e-12));
    CVectorSeq twice = h;
    for (CVector& v : twice) v *= 2.0;
    CHECK(nmse_db(h, twice) == doctest::Approx(0.0).epsilon(1e-12));
  }
}
