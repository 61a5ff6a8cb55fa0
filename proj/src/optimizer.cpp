#include "cyclereg/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "cyclereg/errors.hpp"

namespace cyclereg {

AdamState::AdamState(std::size_t size, AdamParams params)
    : params_(params), m_(size, 0.0), v_(size, 0.0) {}

void AdamState::update(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw ShapeError("adam update: expected " + std::to_string(m_.size()) +
                     " parameters, got " + std::to_string(params.size()) + " / " +
                     std::to_string(grad.size()));
  }
  ++step_;
  const double b1 = params_.beta1;
  const double b2 = params_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
    const double m_hat = m_[i] / correction1;
    const double v_hat = v_[i] / correction2;
    params[i] -= params_.lr * m_hat / (std::sqrt(v_hat) + params_.eps);
  }
}

DisplacementField adam_step(const DisplacementField& params, const DisplacementField& grad,
                            AdamState& state) {
  require_same_shape(params.shape(), grad.shape(), "adam_step");
  DisplacementField out = params;
  state.update(out.values(), grad.values());
  return out;
}

void SolveConfig::validate() const {
  if (pyramid_levels < 1) throw ConfigError("pyramid_levels must be >= 1");
  if (static_cast<int>(iters_per_level.size()) != pyramid_levels) {
    throw ConfigError("iters_per_level needs one entry per pyramid level (" +
                      std::to_string(pyramid_levels) + "), got " +
                      std::to_string(iters_per_level.size()));
  }
  for (int it : iters_per_level) {
    if (it < 1) throw ConfigError("iters_per_level entries must be positive");
  }
  if (!(stop_rel_tol > 0.0)) throw ConfigError("stop_rel_tol must be > 0");
  if (stop_window < 1) throw ConfigError("stop_window must be positive");
  if (!(adam.lr > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("adam betas must be in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (!(lr_final_fraction > 0.0 && lr_final_fraction <= 1.0)) {
    throw ConfigError("lr_final_fraction must be in (0, 1]");
  }
  if (lr_warmup_iters < 0) throw ConfigError("lr_warmup_iters must be >= 0");
  for (int w : {ncc_window_fine, ncc_window_coarse}) {
    if (w < 1 || w % 2 == 0) throw ConfigError("ncc windows must be positive odd integers");
  }
  weights.validate();
  charbonnier.validate();
}

namespace {

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

struct Level {
  ScalarVolume atlas;
  ScalarVolume target;
  ProbVolume labels;
};

}  // namespace

SolveResult optimize_pair(const ScalarVolume& atlas, const LabelVolume& atlas_labels,
                          const ScalarVolume& target, const SolveConfig& config) {
  config.validate();
  require_same_shape(atlas.shape(), target.shape(), "optimize_pair target");
  require_same_shape(atlas.shape(), atlas_labels.shape(), "optimize_pair labels");
  if (atlas_labels.classes() < 2) {
    throw ConfigError("optimize_pair needs at least two label classes");
  }

  // levels[0] is full resolution.
  std::vector<Level> levels;
  levels.push_back({atlas, target, one_hot_encode(atlas_labels)});
  for (int l = 1; l < config.pyramid_levels; ++l) {
    const Level& fine = levels.back();
    try {
      levels.push_back({downsample_box2(fine.atlas), downsample_box2(fine.target),
                        downsample_box2(fine.labels)});
    } catch (const PyramidTooCoarse& e) {
      throw PyramidTooCoarse(std::to_string(config.pyramid_levels) +
                             " pyramid levels requested: " + e.what());
    }
  }

  SolveResult result;
  const int coarsest = config.pyramid_levels - 1;
  DisplacementField forward(levels[static_cast<std::size_t>(coarsest)].atlas.shape());
  DisplacementField backward(forward.shape());

  for (int l = coarsest; l >= 0; --l) {
    const Level& lv = levels[static_cast<std::size_t>(l)];
    const int stage = coarsest - l;
    const auto start = std::chrono::steady_clock::now();

    ObjectiveOptions options;
    options.weights = config.weights;
    options.charbonnier = config.charbonnier;
    options.ncc_window = l == 0 ? config.ncc_window_fine : config.ncc_window_coarse;
    const ObjectiveInputs inputs{lv.atlas, lv.target, lv.labels};

    const std::size_t n3 = forward.values().size();
    AdamState adam(2 * n3, config.adam);
    std::vector<double> params(2 * n3);
    std::vector<double> grad(2 * n3);
    std::vector<double> totals;

    const int iters = config.iters_per_level[static_cast<std::size_t>(stage)];
    for (int it = 0; it < iters; ++it) {
      ObjectiveBreakdown obj;
      try {
        obj = composite_objective(inputs, forward, backward, options);
      } catch (const NumericsError& e) {
        throw NumericsError(std::string(e.what()) + " at level " + std::to_string(stage) +
                            " iteration " + std::to_string(it));
      }
      result.trace.entries.push_back(TraceEntry{stage, it, obj.terms, obj.total,
                                                l2_norm(obj.grad_forward.values()),
                                                l2_norm(obj.grad_backward.values())});
      totals.push_back(obj.total);
      if (it >= config.stop_window) {
        const double before = totals[totals.size() - 1 - static_cast<std::size_t>(config.stop_window)];
        if (std::abs(obj.total - before) <= config.stop_rel_tol * std::abs(before)) break;
      }

      const double progress = iters > 1 ? static_cast<double>(it) / (iters - 1) : 1.0;
      const double decay = config.lr_final_fraction +
                           (1.0 - config.lr_final_fraction) * 0.5 *
                               (1.0 + std::cos(std::numbers::pi * progress));
      const double warmup =
          std::min(1.0, static_cast<double>(it + 1) / std::max(1, config.lr_warmup_iters));
      adam.set_learning_rate(config.adam.lr * decay * warmup);
      std::copy(forward.values().begin(), forward.values().end(), params.begin());
      std::copy(backward.values().begin(), backward.values().end(), params.begin() + n3);
      std::copy(obj.grad_forward.values().begin(), obj.grad_forward.values().end(), grad.begin());
      std::copy(obj.grad_backward.values().begin(), obj.grad_backward.values().end(),
                grad.begin() + n3);
      adam.update(params, grad);
      std::copy(params.begin(), params.begin() + n3, forward.values().begin());
      std::copy(params.begin() + n3, params.end(), backward.values().begin());
    }

    result.trace.level_shapes.push_back(lv.atlas.shape());
    result.trace.level_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());

    if (l > 0) {
      const GridShape& next = levels[static_cast<std::size_t>(l - 1)].atlas.shape();
      forward = upsample_field_2x(forward, next);
      backward = upsample_field_2x(backward, next);
    }
  }

  result.forward = std::move(forward);
  result.backward = std::move(backward);
  return result;
}

}  // namespace cyclereg
