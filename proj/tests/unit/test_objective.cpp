#include <limits>

#include "doctest.h"
#include "oracles.hpp"

#include "cyclereg/errors.hpp"
#include "cyclereg/objective.hpp"
#include "cyclereg/phantom.hpp"
#include "cyclereg/warp.hpp"

using namespace cyclereg;

namespace {

ScalarVolume ramp(const GridShape& s) {
  ScalarVolume v(s);
  for (int z = 0; z < s.nz; ++z)
    for (int y = 0; y < s.ny; ++y)
      for (int x = 0; x < s.nx; ++x) v.at(x, y, z) = 0.1 * x + 0.05 * y - 0.02 * z;
  return v;
}

// Swap the x and y axes of the grid and of the displacement components.
DisplacementField swap_xy(const DisplacementField& f) {
  const GridShape& s = f.shape();
  DisplacementField out(GridShape(s.ny, s.nx, s.nz));
  for (int z = 0; z < s.nz; ++z)
    for (int y = 0; y < s.ny; ++y)
      for (int x = 0; x < s.nx; ++x) {
        const std::size_t i = s.index(x, y, z);
        const std::size_t j = out.shape().index(y, x, z);
        out(j, 0) = f(i, 1);
        out(j, 1) = f(i, 0);
        out(j, 2) = f(i, 2);
      }
  return out;
}

template <class Value>
void check_fd(std::span<double> coords, std::span<const double> grad, Value&& value,
              std::mt19937_64& rng, int samples = 30) {
  std::uniform_int_distribution<std::size_t> pick(0, coords.size() - 1);
  for (int n = 0; n < samples; ++n) {
    const std::size_t j = pick(rng);
    const double fd = oracle::central_difference(value, coords[j]);
    CHECK(oracle::rel_err(grad[j], fd) < 1e-4);
  }
}

}  // namespace

TEST_CASE("ncc loss") {
  SUBCASE("ramp self-match gives one per voxel") {
    const GridShape s(11, 11, 11);
    const ScalarVolume u = ramp(s);
    const double v = ncc_loss(u, u, 3).value;
    CHECK(std::abs(v + static_cast<double>(s.voxels())) / s.voxels() < 1e-3);
  }
  SUBCASE("affine intensity invariance") {
    const GridShape s(11, 11, 11);
    const ScalarVolume u = ramp(s);
    ScalarVolume w = u;
    for (double& x : w.values()) x = 2 * x + 5;
    const double a = ncc_loss(u, u, 3).value;
    const double b = ncc_loss(u, w, 3).value;
    CHECK(std::abs(a - b) / std::abs(a) < 1e-3);
  }
  SUBCASE("random pair matches the window oracle and finite differences") {
    std::mt19937_64 rng(31);
    const GridShape s(7, 7, 7);
    const ScalarVolume u = oracle::random_scalar(s, rng);
    ScalarVolume w = oracle::random_scalar(s, rng);
    const ScalarLoss loss = ncc_loss(u, w, 3);
    const double ref = oracle::ncc(u, w, 3);
    CHECK(std::abs(loss.value - ref) < 1e-10 * std::max(1.0, std::abs(ref)));
    check_fd(w.values(), loss.grad.values(), [&] { return ncc_loss(u, w, 3).value; }, rng);
  }
  SUBCASE("errors") {
    const GridShape s(5, 5, 5);
    CHECK_THROWS_AS(ncc_loss(ScalarVolume(s), ScalarVolume(s), 4), ConfigError);
    CHECK_THROWS_AS(ncc_loss(ScalarVolume(s), ScalarVolume(GridShape(5, 5, 6)), 3), ShapeError);
  }
}

TEST_CASE("smoothness loss") {
  SUBCASE("constant field") {
    const GridShape s(6, 6, 6);
    const double v = smoothness_loss(DisplacementField::constant(s, {0.3, -1, 2})).value;
    CHECK(v < 1e-5 * s.voxels());
  }
  SUBCASE("unit-slope field") {
    const GridShape s(5, 6, 7);
    DisplacementField f(s);
    for (int z = 0; z < s.nz; ++z)
      for (int y = 0; y < s.ny; ++y)
        for (int x = 0; x < s.nx; ++x) f(s.index(x, y, z), 0) = x;
    const double want = (s.nx - 1) * s.ny * s.nz / 3.0;
    const double floor_pairs = (s.ny - 1) * s.nx * s.nz + (s.nz - 1) * s.nx * s.ny;
    CHECK(std::abs(smoothness_loss(f).value - want) <= floor_pairs * 1e-6 / 3.0 + 1e-9);
  }
  SUBCASE("random field matches the neighbour oracle and finite differences") {
    std::mt19937_64 rng(32);
    const GridShape s(6, 6, 6);
    DisplacementField f = oracle::random_field(s, rng, -1, 1);
    const FieldLoss loss = smoothness_loss(f);
    CHECK(std::abs(loss.value - oracle::smoothness(f)) < 1e-10);
    check_fd(f.values(), loss.grad.values(), [&] { return smoothness_loss(f).value; }, rng);
  }
  SUBCASE("axis permutation symmetry") {
    std::mt19937_64 rng(33);
    const DisplacementField f = oracle::random_field(GridShape(6, 6, 6), rng, -1, 1);
    CHECK(smoothness_loss(swap_xy(f)).value ==
          doctest::Approx(smoothness_loss(f).value).epsilon(1e-12));
  }
}

TEST_CASE("charbonnier penalty") {
  const CharbonnierParams p;
  for (double a : {0.0, 1e-4, 0.3, 2.0, 17.0}) CHECK(charbonnier(-a, p) == charbonnier(a, p));
  CHECK(std::abs(charbonnier(0.0, p) - 1.9952623149688796e-3) < 1e-9);
  CHECK(std::abs(charbonnier(1.0, p) - 1.000000449999899) < 1e-12);
  const double h = 1e-6;
  for (double x : {-0.7, 0.002, 0.5, 3.0}) {
    const double fd = (charbonnier(x + h, p) - charbonnier(x - h, p)) / (2 * h);
    CHECK(oracle::rel_err(charbonnier_derivative(x, p), fd) < 1e-6);
  }
  CHECK_THROWS_AS(CharbonnierParams({0.0, 0.45}).validate(), ConfigError);
  CHECK_THROWS_AS(CharbonnierParams({0.001, 1.0}).validate(), ConfigError);
}

TEST_CASE("transformation consistency loss") {
  const GridShape s(6, 6, 6);
  const CharbonnierParams p;
  const double floor = 3.0 * static_cast<double>(s.voxels()) * oracle::rho(0.0);
  SUBCASE("exact inverse translations sit at the floor") {
    const FieldPairLoss loss = transformation_consistency_loss(
        DisplacementField::constant(s, {0.5, -1, 0.25}), DisplacementField::constant(s, {-0.5, 1, -0.25}),
        p);
    CHECK(loss.value == doctest::Approx(floor).epsilon(1e-12));
  }
  SUBCASE("zero fields are stationary") {
    const FieldPairLoss loss =
        transformation_consistency_loss(DisplacementField(s), DisplacementField(s), p);
    CHECK(loss.value == doctest::Approx(floor).epsilon(1e-12));
    for (double x : loss.grad_forward.values()) CHECK(x == 0.0);
    for (double x : loss.grad_backward.values()) CHECK(x == 0.0);
  }
  SUBCASE("smooth random pair matches the oracle and finite differences") {
    std::mt19937_64 rng(34);
    DisplacementField fF = oracle::off_lattice_field(s, rng);
    DisplacementField fB = oracle::off_lattice_field(s, rng);
    const FieldPairLoss loss = transformation_consistency_loss(fF, fB, p);
    double ref = 0;
    for (const auto& r : oracle::residual(fF, fB))
      for (double c : r) ref += oracle::rho(c);
    CHECK(std::abs(loss.value - ref) < 1e-10);
    auto value = [&] { return transformation_consistency_loss(fF, fB, p).value; };
    check_fd(fF.values(), loss.grad_forward.values(), value, rng);
    check_fd(fB.values(), loss.grad_backward.values(), value, rng);
  }
  SUBCASE("axis permutation symmetry") {
    const DisplacementField fF = gen_smooth_field(s, DeformSpec{1.5, 1.5, 8});
    const DisplacementField fB = gen_smooth_field(s, DeformSpec{1.5, 1.5, 9});
    CHECK(transformation_consistency_loss(swap_xy(fF), swap_xy(fB), p).value ==
          doctest::Approx(transformation_consistency_loss(fF, fB, p).value).epsilon(1e-12));
  }
}

TEST_CASE("image cycle loss") {
  std::mt19937_64 rng(35);
  const GridShape s(5, 5, 5);
  const ScalarVolume l = oracle::random_scalar(s, rng);
  const ScalarLoss same = image_cycle_loss(l, l);
  CHECK(same.value == 0.0);
  for (double g : same.grad.values()) CHECK(g == 0.0);
  ScalarVolume shifted = l;
  for (double& x : shifted.values()) x += 0.5;
  CHECK(image_cycle_loss(l, shifted).value == doctest::Approx(0.5).epsilon(1e-14));
  const ScalarVolume r = oracle::random_scalar(s, rng);
  const ScalarLoss loss = image_cycle_loss(l, r);
  double ref = 0;
  for (std::size_t i = 0; i < l.size(); ++i) ref += std::abs(r[i] - l[i]);
  CHECK(std::abs(loss.value - ref / l.size()) < 1e-12);
  for (std::size_t i = 0; i < l.size(); ++i) {
    CHECK(loss.grad[i] == (r[i] > l[i] ? 1.0 : -1.0) / static_cast<double>(l.size()));
  }
}

TEST_CASE("anatomy cycle dice loss") {
  SUBCASE("perfect overlap") {
    std::mt19937_64 rng(36);
    const ProbVolume p = one_hot_encode(oracle::random_labels(GridShape(6, 6, 6), 4, rng));
    CHECK(anatomy_cycle_dice_loss(p, p).value < 1e-6);
  }
  SUBCASE("disjoint binary masks") {
    LabelVolume a(GridShape(4, 4, 4), 2), b(GridShape(4, 4, 4), 2);
    a[0] = 1;
    b[5] = 1;
    CHECK(anatomy_cycle_dice_loss(one_hot_encode(a), one_hot_encode(b)).value ==
          doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("counting example") {
    LabelVolume a(GridShape(4, 4, 4), 2), b(GridShape(4, 4, 4), 2);
    a[0] = a[1] = 1;
    b[1] = b[2] = 1;
    CHECK(anatomy_cycle_dice_loss(one_hot_encode(a), one_hot_encode(b)).value ==
          doctest::Approx(0.5).epsilon(1e-6));
  }
  SUBCASE("gradient matches finite differences") {
    std::mt19937_64 rng(37);
    const GridShape s(5, 5, 5);
    const ProbVolume a = oracle::random_soft(s, 3, rng);
    ProbVolume b = oracle::random_soft(s, 3, rng);
    const ProbLoss loss = anatomy_cycle_dice_loss(a, b);
    check_fd(b.values(), loss.grad.values(), [&] { return anatomy_cycle_dice_loss(a, b).value; },
             rng);
  }
}

TEST_CASE("anatomy difference consistency loss") {
  const GridShape s(5, 5, 5);
  const CharbonnierParams p;
  std::mt19937_64 rng(38);
  const double floor = 3.0 * static_cast<double>(s.voxels()) * oracle::rho(0.0);
  const ProbVolume ls = oracle::random_soft(s, 3, rng);
  SUBCASE("reconstruction equal to the original") {
    const ProbVolume us = oracle::random_soft(s, 3, rng);
    CHECK(anatomy_diff_consistency_loss(ls, us, ls, p).value ==
          doctest::Approx(floor).epsilon(1e-12));
    CHECK(anatomy_diff_consistency_loss(ls, ls, ls, p).value ==
          doctest::Approx(floor).epsilon(1e-12));
  }
  SUBCASE("random triple matches the oracle and finite differences") {
    ProbVolume us = oracle::random_soft(s, 3, rng);
    ProbVolume lb = oracle::random_soft(s, 3, rng);
    const DiffCycleLoss loss = anatomy_diff_consistency_loss(ls, us, lb, p);
    double ref = 0;
    for (std::size_t i = 0; i < ls.values().size(); ++i) {
      const double a = ls.values()[i], b = us.values()[i], c = lb.values()[i];
      ref += oracle::rho(std::abs(a - b) - std::abs(b - c));
    }
    CHECK(std::abs(loss.value - ref) < 1e-10);
    auto value = [&] { return anatomy_diff_consistency_loss(ls, us, lb, p).value; };
    check_fd(us.values(), loss.grad_synthetic.values(), value, rng);
    check_fd(lb.values(), loss.grad_reconstructed.values(), value, rng);
  }
}

TEST_CASE("objective assembly") {
  const TermValues ones{1, 1, 1, 1, 1, 1, 1};
  LossWeights w;
  CHECK(assemble_total(ones, w) == 26.0);
  w.toggles.trans = false;
  CHECK(assemble_total(ones, w) == 23.0);
  w.toggles.cyc = false;
  CHECK(assemble_total(ones, w) == 13.0);
  w.toggles = TermToggles::none();
  CHECK(assemble_total(ones, w) == 7.0);
  CHECK_THROWS_AS(LossWeights({-1.0, 3.0, {}}).validate(), ConfigError);
}

TEST_CASE("composite objective") {
  std::mt19937_64 rng(39);
  SUBCASE("identity pair is near stationary") {
    const GridShape s(8, 8, 8);
    const ScalarVolume l = oracle::random_scalar(s, rng);
    const ProbVolume ls = one_hot_encode(oracle::random_labels(s, 3, rng));
    const DisplacementField zero(s);
    ObjectiveOptions o;
    o.ncc_window = 3;
    const ObjectiveBreakdown b = composite_objective({l, l, ls}, zero, zero, o);
    CHECK(b.terms.cyc == 0.0);
    CHECK(b.terms.anatomy_cyc < 1e-6);
    CHECK(b.terms.smooth_f < 1e-5 * s.voxels());
    CHECK(b.terms.sim == doctest::Approx(ncc_loss(l, l, 3).value));
    double gf = 0, gb = 0;
    for (double x : b.grad_forward.values()) gf += x * x;
    for (double x : b.grad_backward.values()) gb += x * x;
    CHECK(std::sqrt(gf) < 1e-3 * s.voxels());
    CHECK(std::sqrt(gb) < 1e-3 * s.voxels());
  }
  SUBCASE("end-to-end gradient against finite differences") {
    const GridShape s(6, 6, 6);
    const ScalarVolume l = oracle::random_scalar(s, rng);
    const ScalarVolume u = oracle::random_scalar(s, rng);
    const ProbVolume ls = oracle::random_soft(s, 2, rng);
    DisplacementField fF = oracle::off_lattice_field(s, rng);
    DisplacementField fB = oracle::off_lattice_field(s, rng);
    ObjectiveOptions o;
    o.ncc_window = 3;
    const ObjectiveBreakdown b = composite_objective({l, u, ls}, fF, fB, o);
    auto value = [&] { return composite_objective({l, u, ls}, fF, fB, o).total; };
    check_fd(fF.values(), b.grad_forward.values(), value, rng);
    check_fd(fB.values(), b.grad_backward.values(), value, rng);
  }
  SUBCASE("toggling a term removes exactly its contribution") {
    const GridShape s(6, 6, 6);
    const ScalarVolume l = oracle::random_scalar(s, rng);
    const ScalarVolume u = oracle::random_scalar(s, rng);
    const ProbVolume ls = oracle::random_soft(s, 2, rng);
    const DisplacementField fF = oracle::off_lattice_field(s, rng);
    const DisplacementField fB = oracle::off_lattice_field(s, rng);
    ObjectiveOptions on;
    on.ncc_window = 3;
    ObjectiveOptions off = on;
    off.weights.toggles.trans = false;
    const ObjectiveBreakdown a = composite_objective({l, u, ls}, fF, fB, on);
    const ObjectiveBreakdown b = composite_objective({l, u, ls}, fF, fB, off);
    const FieldPairLoss t = transformation_consistency_loss(fF, fB, on.charbonnier);
    CHECK(a.terms.trans == b.terms.trans);
    CHECK(a.total - b.total == doctest::Approx(3.0 * t.value).epsilon(1e-10));
    for (std::size_t i = 0; i < fF.values().size(); ++i) {
      CHECK(a.grad_forward.values()[i] - b.grad_forward.values()[i] ==
            doctest::Approx(3.0 * t.grad_forward.values()[i]).epsilon(1e-8).scale(1.0));
      CHECK(a.grad_backward.values()[i] - b.grad_backward.values()[i] ==
            doctest::Approx(3.0 * t.grad_backward.values()[i]).epsilon(1e-8).scale(1.0));
    }
  }
  SUBCASE("non-finite input names the term") {
    const GridShape s(6, 6, 6);
    ScalarVolume l = oracle::random_scalar(s, rng);
    const ScalarVolume u = oracle::random_scalar(s, rng);
    l[3] = std::numeric_limits<double>::quiet_NaN();
    const ProbVolume ls = oracle::random_soft(s, 2, rng);
    ObjectiveOptions o;
    o.ncc_window = 3;
    try {
      composite_objective({l, u, ls}, DisplacementField(s), DisplacementField(s), o);
      FAIL("expected NumericsError");
    } catch (const NumericsError& e) {
      CHECK(std::string(e.what()).find("sim") != std::string::npos);
    }
  }
}
