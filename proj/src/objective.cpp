#include "cyclereg/objective.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cyclereg/errors.hpp"
#include "cyclereg/warp.hpp"

namespace cyclereg {

void LossWeights::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) {
    throw ConfigError("loss weights must be non-negative");
  }
}

void CharbonnierParams::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("charbonnier epsilon must be > 0");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("charbonnier gamma must be in (0, 1)");
}

double charbonnier(double x, const CharbonnierParams& p) {
  return std::pow(x * x + p.epsilon * p.epsilon, p.gamma);
}

double charbonnier_derivative(double x, const CharbonnierParams& p) {
  return 2.0 * p.gamma * x * std::pow(x * x + p.epsilon * p.epsilon, p.gamma - 1.0);
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Sum over the clipped window [i - r, i + r] along one axis, via prefix sums.
void box_sum_axis(const GridShape& s, int axis, int r, const std::vector<double>& in,
                  std::vector<double>& out) {
  const int n = s.dim(axis);
  const std::size_t stride = axis == 0 ? 1
                             : axis == 1
                                 ? static_cast<std::size_t>(s.nx)
                                 : static_cast<std::size_t>(s.nx) * static_cast<std::size_t>(s.ny);
  const std::size_t lines = s.voxels() / static_cast<std::size_t>(n);
  std::vector<double> prefix(static_cast<std::size_t>(n) + 1);
  for (std::size_t line = 0; line < lines; ++line) {
    // Start offset of this line: enumerate the other two axes.
    std::size_t start;
    if (axis == 0) {
      start = line * static_cast<std::size_t>(s.nx);
    } else if (axis == 1) {
      const std::size_t x = line % static_cast<std::size_t>(s.nx);
      const std::size_t z = line / static_cast<std::size_t>(s.nx);
      start = z * static_cast<std::size_t>(s.nx) * static_cast<std::size_t>(s.ny) + x;
    } else {
      start = line;
    }
    prefix[0] = 0.0;
    for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + in[start + stride * i];
    for (int i = 0; i < n; ++i) {
      const int lo = std::max(i - r, 0);
      const int hi = std::min(i + r, n - 1);
      out[start + stride * i] = prefix[hi + 1] - prefix[lo];
    }
  }
}

std::vector<double> box_sum(const GridShape& s, int r, std::vector<double> v) {
  std::vector<double> tmp(v.size());
  box_sum_axis(s, 0, r, v, tmp);
  box_sum_axis(s, 1, r, tmp, v);
  box_sum_axis(s, 2, r, v, tmp);
  return tmp;
}

std::vector<double> window_counts(const GridShape& s, int r) {
  auto clipped = [r](int i, int n) { return std::min(i + r, n - 1) - std::max(i - r, 0) + 1; };
  std::vector<double> m(s.voxels());
  std::size_t i = 0;
  for (int z = 0; z < s.nz; ++z)
    for (int y = 0; y < s.ny; ++y)
      for (int x = 0; x < s.nx; ++x, ++i)
        m[i] = static_cast<double>(clipped(x, s.nx)) * clipped(y, s.ny) * clipped(z, s.nz);
  return m;
}

void require_finite(double v, const char* term) {
  if (!std::isfinite(v)) {
    throw NumericsError(std::string("loss term '") + term + "' is not finite");
  }
}

void require_same_channels(const ProbVolume& a, const ProbVolume& b, const char* what) {
  require_same_shape(a.shape(), b.shape(), what);
  if (a.channels() != b.channels()) {
    throw ShapeError(std::string(what) + ": channel count mismatch " +
                     std::to_string(a.channels()) + " vs " + std::to_string(b.channels()));
  }
}

}  // namespace

ScalarLoss ncc_loss(const ScalarVolume& fixed, const ScalarVolume& moving, int window) {
  require_same_shape(fixed.shape(), moving.shape(), "ncc_loss");
  if (window < 1 || window % 2 == 0) {
    throw ConfigError("ncc window must be a positive odd integer, got " + std::to_string(window));
  }
  const GridShape& s = fixed.shape();
  const int r = window / 2;
  const std::size_t n = s.voxels();
  const auto I = fixed.values();
  const auto J = moving.values();

  std::vector<double> ii(n), jj(n), ij(n);
  for (std::size_t t = 0; t < n; ++t) {
    ii[t] = I[t] * I[t];
    jj[t] = J[t] * J[t];
    ij[t] = I[t] * J[t];
  }
  const std::vector<double> m = window_counts(s, r);
  const std::vector<double> sum_i = box_sum(s, r, {I.begin(), I.end()});
  const std::vector<double> sum_j = box_sum(s, r, {J.begin(), J.end()});
  const std::vector<double> sum_ii = box_sum(s, r, std::move(ii));
  const std::vector<double> sum_jj = box_sum(s, r, std::move(jj));
  const std::vector<double> sum_ij = box_sum(s, r, std::move(ij));

  // Per-window coefficients of dCC/dJ(s) = A (I(s) - muI) - B (J(s) - muJ).
  std::vector<double> a(n), a_mu_i(n), b(n), b_mu_j(n);
  double total = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double mu_i = sum_i[t] / m[t];
    const double mu_j = sum_j[t] / m[t];
    const double cross = sum_ij[t] - sum_i[t] * mu_j;
    const double var_i = sum_ii[t] - sum_i[t] * mu_i;
    const double var_j = sum_jj[t] - sum_j[t] * mu_j;
    const double denom = var_i * var_j + kNccStabilizer;
    total += cross * cross / denom;
    a[t] = 2.0 * cross / denom;
    b[t] = 2.0 * cross * cross * var_i / (denom * denom);
    a_mu_i[t] = a[t] * mu_i;
    b_mu_j[t] = b[t] * mu_j;
  }

  const std::vector<double> box_a = box_sum(s, r, std::move(a));
  const std::vector<double> box_a_mu = box_sum(s, r, std::move(a_mu_i));
  const std::vector<double> box_b = box_sum(s, r, std::move(b));
  const std::vector<double> box_b_mu = box_sum(s, r, std::move(b_mu_j));

  ScalarLoss out{-total, ScalarVolume(s)};
  auto g = out.grad.values();
  for (std::size_t t = 0; t < n; ++t) {
    g[t] = -(I[t] * box_a[t] - box_a_mu[t] - J[t] * box_b[t] + box_b_mu[t]);
  }
  return out;
}

FieldLoss smoothness_loss(const DisplacementField& f) {
  const GridShape& s = f.shape();
  FieldLoss out{0.0, DisplacementField(s)};
  const std::size_t step[3] = {1, static_cast<std::size_t>(s.nx),
                               static_cast<std::size_t>(s.nx) * static_cast<std::size_t>(s.ny)};
  constexpr double kThird = 1.0 / 3.0;
  std::size_t i = 0;
  for (int z = 0; z < s.nz; ++z) {
    for (int y = 0; y < s.ny; ++y) {
      for (int x = 0; x < s.nx; ++x, ++i) {
        const bool has_next[3] = {x + 1 < s.nx, y + 1 < s.ny, z + 1 < s.nz};
        for (int axis = 0; axis < 3; ++axis) {
          if (!has_next[axis]) continue;
          const std::size_t j = i + step[axis];
          const double d0 = f(j, 0) - f(i, 0);
          const double d1 = f(j, 1) - f(i, 1);
          const double d2 = f(j, 2) - f(i, 2);
          const double norm = std::sqrt(d0 * d0 + d1 * d1 + d2 * d2 + kSmoothnessFloor);
          out.value += kThird * norm;
          const double scale = kThird / norm;
          out.grad(j, 0) += scale * d0;
          out.grad(j, 1) += scale * d1;
          out.grad(j, 2) += scale * d2;
          out.grad(i, 0) -= scale * d0;
          out.grad(i, 1) -= scale * d1;
          out.grad(i, 2) -= scale * d2;
        }
      }
    }
  }
  return out;
}

FieldPairLoss transformation_consistency_loss(const DisplacementField& forward,
                                              const DisplacementField& backward,
                                              const CharbonnierParams& params) {
  require_same_shape(forward.shape(), backward.shape(), "transformation_consistency_loss");
  const GridShape& s = forward.shape();
  const std::size_t n = s.voxels();
  const TrilinearSampler sampler(forward);

  FieldPairLoss out{0.0, DisplacementField(s), DisplacementField(s)};
  std::vector<double> sampled(n), upstream(n), grad_comp(n);
  for (int c = 0; c < 3; ++c) {
    const std::vector<double> comp = backward.component(c);
    sampler.sample(comp, sampled);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = forward(i, c) + sampled[i];
      out.value += charbonnier(r, params);
      upstream[i] = charbonnier_derivative(r, params);
      out.grad_forward(i, c) += upstream[i];
    }
    std::fill(grad_comp.begin(), grad_comp.end(), 0.0);
    sampler.backprop(comp, upstream, grad_comp, out.grad_forward.values());
    for (std::size_t i = 0; i < n; ++i) out.grad_backward(i, c) = grad_comp[i];
  }
  return out;
}

ScalarLoss image_cycle_loss(const ScalarVolume& original, const ScalarVolume& reconstructed) {
  require_same_shape(original.shape(), reconstructed.shape(), "image_cycle_loss");
  const std::size_t n = original.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  ScalarLoss out{0.0, ScalarVolume(original.shape())};
  for (std::size_t i = 0; i < n; ++i) {
    const double d = reconstructed[i] - original[i];
    out.value += std::abs(d);
    out.grad[i] = sign(d) * inv_n;
  }
  out.value *= inv_n;
  return out;
}

ProbLoss anatomy_cycle_dice_loss(const ProbVolume& original, const ProbVolume& reconstructed) {
  require_same_channels(original, reconstructed, "anatomy_cycle_dice_loss");
  const int k_count = original.channels();
  ProbLoss out{0.0, ProbVolume(original.shape(), k_count)};
  if (k_count < 2) return out;
  const double inv_classes = 1.0 / static_cast<double>(k_count - 1);
  for (int k = 1; k < k_count; ++k) {
    const auto a = original.channel(k);
    const auto b = reconstructed.channel(k);
    double s_ab = 0.0, s_aa = 0.0, s_bb = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) {
      s_ab += a[t] * b[t];
      s_aa += a[t] * a[t];
      s_bb += b[t] * b[t];
    }
    const double denom = s_aa + s_bb + kDiceStabilizer;
    out.value += (1.0 - 2.0 * s_ab / denom) * inv_classes;
    auto g = out.grad.channel(k);
    const double c1 = 2.0 / denom;
    const double c2 = 4.0 * s_ab / (denom * denom);
    for (std::size_t t = 0; t < a.size(); ++t) g[t] = -inv_classes * (c1 * a[t] - c2 * b[t]);
  }
  return out;
}

DiffCycleLoss anatomy_diff_consistency_loss(const ProbVolume& original,
                                            const ProbVolume& synthetic,
                                            const ProbVolume& reconstructed,
                                            const CharbonnierParams& params) {
  require_same_channels(original, synthetic, "anatomy_diff_consistency_loss");
  require_same_channels(original, reconstructed, "anatomy_diff_consistency_loss");
  DiffCycleLoss out{0.0, ProbVolume(original.shape(), original.channels()),
                    ProbVolume(original.shape(), original.channels())};
  const auto a = original.values();
  const auto b = synthetic.values();
  const auto c = reconstructed.values();
  auto gb = out.grad_synthetic.values();
  auto gc = out.grad_reconstructed.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = std::abs(a[i] - b[i]) - std::abs(b[i] - c[i]);
    out.value += charbonnier(x, params);
    const double d = charbonnier_derivative(x, params);
    gb[i] = d * (sign(b[i] - a[i]) - sign(b[i] - c[i]));
    gc[i] = d * sign(b[i] - c[i]);
  }
  return out;
}

double assemble_total(const TermValues& t, const LossWeights& w) {
  const TermToggles& on = w.toggles;
  double shared = t.smooth_f + t.smooth_b;
  if (on.anatomy_cyc) shared += t.anatomy_cyc;
  if (on.trans) shared += t.trans;
  if (on.diff_cyc) shared += t.diff_cyc;
  double total = t.sim + w.lambda2 * shared;
  if (on.cyc) total += w.lambda1 * t.cyc;
  return total;
}

// ---------------------------------------------------------------------------

namespace {

struct CycleSamplers {
  TrilinearSampler forward;
  TrilinearSampler backward;
};

CycleImages run_cycle(const ObjectiveInputs& in, const CycleSamplers& samplers) {
  const GridShape& s = in.atlas.shape();
  const int k_count = in.atlas_labels.channels();
  CycleImages c{ScalarVolume(s), ScalarVolume(s), ProbVolume(s, k_count), ProbVolume(s, k_count)};
  samplers.forward.sample(in.atlas.values(), c.synthetic_target.values());
  samplers.backward.sample(c.synthetic_target.values(), c.reconstructed_atlas.values());
  for (int k = 0; k < k_count; ++k) {
    samplers.forward.sample(in.atlas_labels.channel(k), c.synthetic_labels.channel(k));
    samplers.backward.sample(c.synthetic_labels.channel(k), c.reconstructed_labels.channel(k));
  }
  return c;
}

void check_inputs(const ObjectiveInputs& in, const DisplacementField& forward,
                  const DisplacementField& backward) {
  require_same_shape(in.atlas.shape(), in.target.shape(), "objective target");
  require_same_shape(in.atlas.shape(), in.atlas_labels.shape(), "objective atlas labels");
  require_same_shape(in.atlas.shape(), forward.shape(), "objective forward field");
  require_same_shape(in.atlas.shape(), backward.shape(), "objective backward field");
}

void add_scaled(std::span<double> dst, std::span<const double> src, double scale) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

}  // namespace

CycleImages run_cycle(const ObjectiveInputs& in, const DisplacementField& forward,
                      const DisplacementField& backward) {
  check_inputs(in, forward, backward);
  return run_cycle(in, CycleSamplers{TrilinearSampler(forward), TrilinearSampler(backward)});
}

ObjectiveBreakdown composite_objective(const ObjectiveInputs& in,
                                       const DisplacementField& forward,
                                       const DisplacementField& backward,
                                       const ObjectiveOptions& options) {
  check_inputs(in, forward, backward);
  const LossWeights& w = options.weights;
  const TermToggles& on = w.toggles;
  const GridShape& s = in.atlas.shape();
  const int k_count = in.atlas_labels.channels();

  const CycleSamplers samplers{TrilinearSampler(forward), TrilinearSampler(backward)};
  const CycleImages cycle = run_cycle(in, samplers);

  ScalarLoss sim = ncc_loss(in.target, cycle.synthetic_target, options.ncc_window);
  FieldLoss smooth_f = smoothness_loss(forward);
  FieldLoss smooth_b = smoothness_loss(backward);
  ScalarLoss cyc = image_cycle_loss(in.atlas, cycle.reconstructed_atlas);
  FieldPairLoss trans = transformation_consistency_loss(forward, backward, options.charbonnier);
  ProbLoss anatomy = anatomy_cycle_dice_loss(in.atlas_labels, cycle.reconstructed_labels);
  DiffCycleLoss diff = anatomy_diff_consistency_loss(
      in.atlas_labels, cycle.synthetic_labels, cycle.reconstructed_labels, options.charbonnier);

  ObjectiveBreakdown out;
  out.weights = w;
  out.terms = TermValues{sim.value,  smooth_f.value, smooth_b.value, cyc.value,
                         trans.value, anatomy.value, diff.value};
  require_finite(out.terms.sim, "sim");
  require_finite(out.terms.smooth_f, "smooth_f");
  require_finite(out.terms.smooth_b, "smooth_b");
  require_finite(out.terms.cyc, "cyc");
  require_finite(out.terms.trans, "trans");
  require_finite(out.terms.anatomy_cyc, "anatomy_cyc");
  require_finite(out.terms.diff_cyc, "diff_cyc");
  out.total = assemble_total(out.terms, w);

  if (!options.with_gradient) return out;

  DisplacementField grad_f(s);
  DisplacementField grad_b(s);
  add_scaled(grad_f.values(), smooth_f.grad.values(), w.lambda2);
  add_scaled(grad_b.values(), smooth_b.grad.values(), w.lambda2);
  if (on.trans) {
    add_scaled(grad_f.values(), trans.grad_forward.values(), w.lambda2);
    add_scaled(grad_b.values(), trans.grad_backward.values(), w.lambda2);
  }

  // Gradient wrt the synthetic target collects the similarity term and, through the
  // backward warp, the image cycle term.
  std::vector<double> grad_synth(sim.grad.values().begin(), sim.grad.values().end());
  if (on.cyc) {
    std::vector<double> upstream(cyc.grad.size());
    for (std::size_t i = 0; i < upstream.size(); ++i) upstream[i] = w.lambda1 * cyc.grad[i];
    samplers.backward.backprop(cycle.synthetic_target.values(), upstream, grad_synth,
                               grad_b.values());
  }
  samplers.forward.backprop(in.atlas.values(), grad_synth, {}, grad_f.values());

  if (on.anatomy_cyc || on.diff_cyc) {
    ProbVolume grad_recon(s, k_count);
    ProbVolume grad_synth_labels(s, k_count);
    if (on.anatomy_cyc) add_scaled(grad_recon.values(), anatomy.grad.values(), w.lambda2);
    if (on.diff_cyc) {
      add_scaled(grad_recon.values(), diff.grad_reconstructed.values(), w.lambda2);
      add_scaled(grad_synth_labels.values(), diff.grad_synthetic.values(), w.lambda2);
    }
    for (int k = 0; k < k_count; ++k) {
      samplers.backward.backprop(cycle.synthetic_labels.channel(k), grad_recon.channel(k),
                                 grad_synth_labels.channel(k), grad_b.values());
      samplers.forward.backprop(in.atlas_labels.channel(k), grad_synth_labels.channel(k), {},
                                grad_f.values());
    }
  }

  out.grad_forward = std::move(grad_f);
  out.grad_backward = std::move(grad_b);
  if (!out.grad_forward.all_finite() || !out.grad_backward.all_finite()) {
    throw NumericsError("objective gradient is not finite");
  }
  return out;
}

}  // namespace cyclereg
