#include <doctest.h>

#include "fixtures.hpp"
#include "thzloc/pdl.hpp"
#include "thzloc/channel.hpp"
#include "thzloc/rng.hpp"

using namespace thzloc;

namespace {

const double kRbr = (fixture::kRis - fixture::kBs).norm();

Hyperbola hyperbola_for(const Point2& ue) {
  const double t_nris = (ue - fixture::kBs).norm() / kSpeedOfLight;
  const double t_ris = ((ue - fixture::kRis).norm() + kRbr) / kSpeedOfLight;
  return tdoa_hyperbola(t_nris, t_ris, kRbr, fixture::kBs, fixture::kRis);
}

CMatrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  CMatrix a(rows, cols);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = complex_normal(rng);
  return a;
}

}  // namespace

TEST_SUITE("localization-pdl") {
  TEST_CASE("noise-free denoised autocorrelation is the Gram") {
    const CMatrix y = random_matrix(8, 24, 1);
    const CMatrix g = denoised_autocorr(y, 0.0);
    CHECK((g - y.adjoint() * y).norm() < 1e-12);
    const CMatrix d = denoised_autocorr(y, 0.7);
    CHECK((d - d.adjoint()).norm() < 1e-12);
  }

  TEST_CASE("combined noise trace") {
    const CMatrixSeq w{CMatrix::Constant(2, 3, Complex(0.5, 0.0)), CMatrix::Constant(2, 3, Complex(0.0, 1.0))};
    CHECK(combined_noise_trace(w, 2.0) == doctest::Approx(2.0 * (6 * 0.25 + 6 * 1.0)));
  }

  TEST_CASE("noise projector is an orthogonal projector") {
    const CMatrix y = random_matrix(6, 20, 2);
    const NoiseProjector p(y.adjoint() * y, 6);
    const CMatrix d = p.dense();
    CHECK((d * d - d).norm() < 1e-9);
    CHECK((d - d.adjoint()).norm() < 1e-9);
    CHECK(p.dimension() == 20);
    CHECK(p.signal_rank() == 6);
  }

  TEST_CASE("delay search stays in its window") {
    const SubcarrierGrid grid(100e9, 10e9, 64);
    const CVector a = delay_vector(grid, 31.3e-9);
    const CMatrix y = a.adjoint() * Complex(0.0, 2.0);
    DelaySearch s;
    s.window_start = 30e-9;
    s.tau_max = 5e-9;
    const NoiseProjector p(denoised_autocorr(random_matrix(3, 64, 5) * 1e-9 + y.replicate(3, 1), 0.0), 1);
    const DelayEstimate e = delay_estimate(p, grid, s);
    // Delays come back folded into one period of the subcarrier spacing.
    const double period = 1.0 / grid.spacing();
    const double offset = e.tau - s.window_start;
    CHECK(offset - period * std::floor(offset / period) < s.tau_max);
    CHECK(std::abs(wrap_delay(e.tau - 31.3e-9, period)) <= e.resolution);
  }

  TEST_CASE("equidistant UE gives the bisector") {
    const Hyperbola h = hyperbola_for(Point2(0.0, -12.0));
    CHECK(h.branch == Branch::kBisector);
    CHECK(std::abs(h.tdoa) < 1e-12);
  }

  TEST_CASE("semi-axis approaches the focal half-distance on the axis") {
    const Hyperbola h = hyperbola_for(Point2(40.0, -1e-4));
    CHECK(h.a / h.c_h == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(h.a < h.c_h);
  }

  TEST_CASE("branch follows the closer anchor") {
    CHECK(hyperbola_for(Point2(8.0, -9.0)).branch == Branch::kNearRis);
    CHECK(hyperbola_for(Point2(-8.0, -9.0)).branch == Branch::kNearBs);
    CHECK(hyperbola_for(Point2(8.0, -9.0)).tdoa > 0.0);
  }

  TEST_CASE("hyperbola dictionary anchors lie on the hyperbola") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    const ArrayGeometry bs = fixture::bs_array(32, grid);
    const Point2 ue(5.96, -10.1);
    const Hyperbola h = hyperbola_for(ue);
    const HyperbolaDictionary d = hyperbola_dictionary(h, bs, grid, 64, -0.9, 1.8 / 63.0);
    CHECK(d.dict.size() <= 64);
    CHECK(d.dict.size() + d.skipped == 64);
    for (const Point2& p : d.points) CHECK(std::abs(h.residual(p)) < 1e-9);

    const PolarPoint truth = bs.polar_of(ue);
    const HyperbolaDictionary one = hyperbola_dictionary(h, bs, grid, 1, truth.theta, 0.0);
    REQUIRE(one.dict.size() == 1);
    CHECK(one.dict.params(0).theta == doctest::Approx(truth.theta).epsilon(1e-12));
    CHECK(*one.dict.params(0).range == doctest::Approx(truth.range).epsilon(1e-9));
  }

  TEST_CASE("coarse AoA picks the matching atom, lowest index on ties") {
    const SubcarrierGrid grid(100e9, 0.0, 1);
    const ArrayGeometry a(8, half_wavelength(grid), 0.0, Point2::Zero());
    const PolarDictionary d = build_partial(a, grid, {AtomParams{0.0, {}}, AtomParams{0.25, {}}});
    const CMatrix w = CMatrix::Identity(8, 8);
    CHECK(std::abs(d.atom(0, 0).dot(d.atom(1, 0))) < 1e-12);
    CHECK(coarse_aoa_on_hyperbola({d.atom(1, 0)}, w, d) == 1);
    CHECK(coarse_aoa_on_hyperbola({CVector(d.atom(0, 0) + d.atom(1, 0))}, w, d) == 0);
  }

  TEST_CASE("line and hyperbola intersection") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    const ArrayGeometry bs = fixture::bs_array(32, grid);
    for (const Point2& ue : {Point2(5.96, -10.1), Point2(-6.0, -20.0), Point2(15.0, -4.0)}) {
      const Hyperbola h = hyperbola_for(ue);
      const RayFix f = line_hyperbola_intersect(bs.polar_of(ue).theta, h, bs);
      CHECK(std::abs(h.residual(f.ue)) < 1e-9);
      CHECK(bs.polar_of(f.ue).theta == doctest::Approx(bs.polar_of(ue).theta).epsilon(1e-9));
      CHECK((f.ue - ue).norm() < 1e-9);
    }
  }

  TEST_CASE("bisector intersection lands on the perpendicular bisector") {
    const SubcarrierGrid grid(100e9, 10e9, 4);
    const ArrayGeometry bs = fixture::bs_array(32, grid);
    const Point2 ue(0.0, -12.0);
    const Hyperbola h = hyperbola_for(ue);
    REQUIRE(h.branch == Branch::kBisector);
    const RayFix f = line_hyperbola_intersect(bs.polar_of(ue).theta, h, bs);
    CHECK(std::abs(f.ue.x()) < 1e-9);
    CHECK((f.ue - ue).norm() < 1e-9);
  }

  TEST_CASE("delay folding") {
    CHECK(wrap_delay(1.25, 1.0) == doctest::Approx(0.25));
    CHECK(wrap_delay(0.75, 1.0) == doctest::Approx(-0.25));
    CHECK(wrap_delay(-0.25, 1.0) == doctest::Approx(-0.25));
  }

  TEST_CASE("equidistant UE still produces a fix") {
    const SubcarrierGrid grid(100e9, 10e9, 128);
    const ArrayGeometry bs = fixture::bs_array(17, grid), ris = fixture::ris_array(17, grid);
    SceneConfig sector;
    sector.bs = bs;
    sector.ris = ris;
    sector.clusters_bs = 0;
    sector.clusters_ris = 0;
    sector.fixed_ue = Point2(0.0, -12.0);
    const Scene scene = draw_scene(sector, 1);
    const CVectorSeq h_bu = synthesize_channel(scene, Link::kDirect, grid, 2).per_subcarrier;
    const CVectorSeq h_ru = synthesize_channel(scene, Link::kReflected, grid, 3).per_subcarrier;
    const BsRisChannel hbr(bs, ris, grid);
    SoundingFrame f;
    f.w_nris = build_w_nris(4, 17, 4, 4, true);
    f.w_ris = build_w_ris(4, bs, ris, grid, 4, RisCombinerMode::kSpread);
    f.ris_phases = build_ris_phases(4, 17, 5);
    const PilotObservation obs = receive(h_bu, h_ru, hbr, f, 6);
    PdlInputs in;
    in.y_nris = &obs.y_nris;
    in.y_ris = &obs.y_ris;
    in.frame = &f;
    in.full_grid = &grid;
    in.decimation = 8;
    in.bs = &bs;
    in.ris = &ris;
    in.sector = &sector;
    const double r = (scene.ue - fixture::kBs).norm();
    in.tau_nris = r / kSpeedOfLight;
    in.tau_ris = (r + kRbr) / kSpeedOfLight;
    const PdlResult out = pdl(in, PdlConfig{});
    CHECK(out.hyperbola.branch == Branch::kBisector);
    CHECK(std::abs(out.location.fix.ue.x()) < 1e-9);
    CHECK(std::isfinite(out.location.fix.ue.y()));
  }
}
