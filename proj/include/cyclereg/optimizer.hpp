#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cyclereg/objective.hpp"
#include "cyclereg/volume.hpp"

namespace cyclereg {

struct AdamParams {
  double lr = 0.0002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a flat parameter vector.
class AdamState {
 public:
  AdamState() = default;
  AdamState(std::size_t size, AdamParams params);

  const AdamParams& params() const noexcept { return params_; }
  std::int64_t step() const noexcept { return step_; }
  std::span<const double> first_moment() const noexcept { return m_; }
  std::span<const double> second_moment() const noexcept { return v_; }
  std::size_t size() const noexcept { return m_.size(); }

  void update(std::span<double> params, std::span<const double> grad);
  void set_learning_rate(double lr) noexcept { params_.lr = lr; }

 private:
  AdamParams params_;
  std::int64_t step_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

DisplacementField adam_step(const DisplacementField& params, const DisplacementField& grad,
                            AdamState& state);

struct SolveConfig {
  int pyramid_levels = 3;
  std::vector<int> iters_per_level{300, 200, 100};  // coarsest first
  double stop_rel_tol = 1e-5;
  int stop_window = 20;
  // Step size in voxels of the current level. The moments and betas follow AdamParams.
  AdamParams adam{0.05, 0.9, 0.999, 1e-8};
  // Cosine decay within each level from lr down to lr * lr_final_fraction.
  double lr_final_fraction = 0.05;
  // Linear ramp of the step size over the first iterations of every level.
  int lr_warmup_iters = 20;
  LossWeights weights;
  CharbonnierParams charbonnier;
  int ncc_window_fine = 9;
  int ncc_window_coarse = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TraceEntry {
  int level = 0;  // 0 is the coarsest
  int iteration = 0;
  TermValues terms;
  double total = 0.0;
  double grad_norm_forward = 0.0;
  double grad_norm_backward = 0.0;
};

struct SolveTrace {
  std::vector<TraceEntry> entries;
  std::vector<double> level_seconds;
  std::vector<GridShape> level_shapes;
};

struct SolveResult {
  DisplacementField forward;
  DisplacementField backward;
  SolveTrace trace;
};

// Coarse-to-fine joint Adam minimization of the cycle objective over both fields.
SolveResult optimize_pair(const ScalarVolume& atlas, const LabelVolume& atlas_labels,
                          const ScalarVolume& target, const SolveConfig& config);

}  // namespace cyclereg
