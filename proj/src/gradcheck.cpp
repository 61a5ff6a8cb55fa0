#include "cyclereg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "cyclereg/errors.hpp"
#include "cyclereg/objective.hpp"
#include "cyclereg/phantom.hpp"
#include "cyclereg/warp.hpp"

namespace cyclereg {

namespace {

struct Instance {
  ScalarVolume atlas;
  ScalarVolume target;
  ProbVolume labels;
  DisplacementField forward;
  DisplacementField backward;
};

constexpr int kChannels = 3;
constexpr int kWindow = 3;

// Integer part in {-1, 0} and fractional part in [0.15, 0.85], so t + d(t) never lies
// within a finite-difference step of a lattice plane or of the clamp boundary.
DisplacementField off_lattice_field(const GridShape& s, Xoshiro256& rng) {
  DisplacementField f(s);
  for (double& v : f.values()) {
    v = (rng.uniform() < 0.5 ? -1.0 : 0.0) + rng.uniform(0.15, 0.85);
  }
  return f;
}

Instance make_instance(const GradCheckOptions& o) {
  const GridShape s(o.size, o.size, o.size);
  Xoshiro256 rng(o.seed);
  Instance in{ScalarVolume(s), ScalarVolume(s), ProbVolume(s, kChannels), DisplacementField(),
              DisplacementField()};
  for (double& v : in.atlas.values()) v = rng.uniform();
  for (double& v : in.target.values()) v = rng.uniform();
  for (std::size_t i = 0; i < s.voxels(); ++i) {
    double sum = 0.0;
    for (int k = 0; k < kChannels; ++k) sum += in.labels(k, i) = rng.uniform(0.05, 1.0);
    for (int k = 0; k < kChannels; ++k) in.labels(k, i) /= sum;
  }
  in.forward = off_lattice_field(s, rng);
  in.backward = off_lattice_field(s, rng);
  return in;
}

struct Evaluated {
  double value = 0.0;
  DisplacementField grad_forward;
  DisplacementField grad_backward;
};

using TermFn = std::function<Evaluated(const Instance&, const DisplacementField&,
                                       const DisplacementField&)>;

Evaluated sim_term(const Instance& in, const DisplacementField& fF, const DisplacementField& fB) {
  const ScalarVolume moved = warp_scalar(in.atlas, fF);
  const ScalarLoss loss = ncc_loss(in.target, moved, kWindow);
  return {loss.value, warp_vjp(in.atlas, fF, loss.grad).grad_field, DisplacementField(fB.shape())};
}

Evaluated smooth_f_term(const Instance&, const DisplacementField& fF,
                        const DisplacementField& fB) {
  FieldLoss loss = smoothness_loss(fF);
  return {loss.value, std::move(loss.grad), DisplacementField(fB.shape())};
}

Evaluated smooth_b_term(const Instance&, const DisplacementField& fF,
                        const DisplacementField& fB) {
  FieldLoss loss = smoothness_loss(fB);
  return {loss.value, DisplacementField(fF.shape()), std::move(loss.grad)};
}

Evaluated cyc_term(const Instance& in, const DisplacementField& fF, const DisplacementField& fB) {
  const ScalarVolume synthetic = warp_scalar(in.atlas, fF);
  const ScalarVolume reconstructed = warp_scalar(synthetic, fB);
  const ScalarLoss loss = image_cycle_loss(in.atlas, reconstructed);
  ScalarWarpVJP back = warp_vjp(synthetic, fB, loss.grad);
  return {loss.value, warp_vjp(in.atlas, fF, back.grad_source).grad_field,
          std::move(back.grad_field)};
}

Evaluated trans_term(const Instance&, const DisplacementField& fF, const DisplacementField& fB) {
  FieldPairLoss loss = transformation_consistency_loss(fF, fB, CharbonnierParams{});
  return {loss.value, std::move(loss.grad_forward), std::move(loss.grad_backward)};
}

Evaluated anatomy_term(const Instance& in, const DisplacementField& fF,
                       const DisplacementField& fB) {
  const ProbVolume synthetic = warp_channels(in.labels, fF);
  const ProbVolume reconstructed = warp_channels(synthetic, fB);
  const ProbLoss loss = anatomy_cycle_dice_loss(in.labels, reconstructed);
  ProbWarpVJP back = warp_vjp(synthetic, fB, loss.grad);
  return {loss.value, warp_vjp(in.labels, fF, back.grad_source).grad_field,
          std::move(back.grad_field)};
}

Evaluated diff_term(const Instance& in, const DisplacementField& fF, const DisplacementField& fB) {
  const ProbVolume synthetic = warp_channels(in.labels, fF);
  const ProbVolume reconstructed = warp_channels(synthetic, fB);
  const DiffCycleLoss loss =
      anatomy_diff_consistency_loss(in.labels, synthetic, reconstructed, CharbonnierParams{});
  ProbWarpVJP back = warp_vjp(synthetic, fB, loss.grad_reconstructed);
  ProbVolume upstream = loss.grad_synthetic;
  auto u = upstream.values();
  auto b = back.grad_source.values();
  for (std::size_t i = 0; i < u.size(); ++i) u[i] += b[i];
  return {loss.value, warp_vjp(in.labels, fF, upstream).grad_field, std::move(back.grad_field)};
}

Evaluated composite_term(const Instance& in, const DisplacementField& fF,
                         const DisplacementField& fB) {
  ObjectiveOptions options;
  options.ncc_window = kWindow;
  ObjectiveBreakdown b =
      composite_objective(ObjectiveInputs{in.atlas, in.target, in.labels}, fF, fB, options);
  return {b.total, std::move(b.grad_forward), std::move(b.grad_backward)};
}

double check_field(const TermFn& fn, const Instance& in, const Evaluated& analytic, bool forward,
                   const GradCheckOptions& o, Xoshiro256& rng) {
  const DisplacementField& grad = forward ? analytic.grad_forward : analytic.grad_backward;
  const std::size_t n = grad.values().size();
  double worst = 0.0;
  for (int s = 0; s < o.samples_per_field; ++s) {
    const std::size_t j = std::min(n - 1, static_cast<std::size_t>(rng.uniform() * n));
    DisplacementField plus = forward ? in.forward : in.backward;
    DisplacementField minus = plus;
    plus.values()[j] += o.step;
    minus.values()[j] -= o.step;
    const double f_plus = forward ? fn(in, plus, in.backward).value : fn(in, in.forward, plus).value;
    const double f_minus =
        forward ? fn(in, minus, in.backward).value : fn(in, in.forward, minus).value;
    const double fd = (f_plus - f_minus) / (2.0 * o.step);
    const double a = grad.values()[j];
    const double scale = std::max({std::abs(a), std::abs(fd), o.abs_floor});
    worst = std::max(worst, std::abs(a - fd) / scale);
  }
  return worst;
}

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(const GradCheckOptions& options) {
  if (options.size < 6 || options.size > 8) {
    throw ConfigError("grad-check size must be in [6, 8], got " + std::to_string(options.size));
  }
  if (options.samples_per_field < 1) throw ConfigError("grad-check needs at least one sample");
  if (!(options.step > 0.0)) throw ConfigError("grad-check step must be > 0");

  const Instance in = make_instance(options);
  const std::vector<std::pair<std::string, TermFn>> terms = {
      {"sim", sim_term},           {"smooth_f", smooth_f_term}, {"smooth_b", smooth_b_term},
      {"cyc", cyc_term},           {"trans", trans_term},       {"anatomy_cyc", anatomy_term},
      {"diff_cyc", diff_term},     {"total", composite_term},
  };

  Xoshiro256 rng(options.seed ^ 0x5deece66dULL);
  std::vector<GradCheckResult> results;
  for (const auto& [name, fn] : terms) {
    const Evaluated analytic = fn(in, in.forward, in.backward);
    GradCheckResult r;
    r.term = name;
    r.max_rel_error_forward = check_field(fn, in, analytic, true, options, rng);
    r.max_rel_error_backward = check_field(fn, in, analytic, false, options, rng);
    r.samples = 2 * options.samples_per_field;
    results.push_back(r);
  }
  return results;
}

}  // namespace cyclereg
