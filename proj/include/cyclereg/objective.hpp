#pragma once

#include <string>

#include "cyclereg/volume.hpp"

namespace cyclereg {

// Which optional cycle terms take part in the objective. Similarity and both
// smoothness terms are always on.
struct TermToggles {
  bool cyc = true;
  bool trans = true;
  bool anatomy_cyc = true;
  bool diff_cyc = true;

  static TermToggles none() { return {false, false, false, false}; }
  friend bool operator==(const TermToggles&, const TermToggles&) = default;
};

struct LossWeights {
  double lambda1 = 10.0;  // image cycle
  double lambda2 = 3.0;   // anatomy cycle, smoothness, transformation, anatomy difference
  TermToggles toggles;

  void validate() const;
};

// rho(x) = (x^2 + epsilon^2)^gamma
struct CharbonnierParams {
  double epsilon = 0.001;
  double gamma = 0.45;

  void validate() const;
};

double charbonnier(double x, const CharbonnierParams& p);
double charbonnier_derivative(double x, const CharbonnierParams& p);

inline constexpr double kNccStabilizer = 1e-5;
inline constexpr double kSmoothnessFloor = 1e-12;
inline constexpr double kDiceStabilizer = 1e-7;

struct ScalarLoss {
  double value = 0.0;
  ScalarVolume grad;
};

struct FieldLoss {
  double value = 0.0;
  DisplacementField grad;
};

struct FieldPairLoss {
  double value = 0.0;
  DisplacementField grad_forward;
  DisplacementField grad_backward;
};

struct ProbLoss {
  double value = 0.0;
  ProbVolume grad;
};

struct DiffCycleLoss {
  double value = 0.0;
  ProbVolume grad_synthetic;      // wrt the forward-warped labels
  ProbVolume grad_reconstructed;  // wrt the round-tripped labels
};

// -sum_t CC(t), CC the squared local correlation over an n^3 window clipped at the
// grid boundary. Gradient is wrt `moving`.
ScalarLoss ncc_loss(const ScalarVolume& fixed, const ScalarVolume& moving, int window);

// sum_t (1/3) sum_axis |forward difference along axis|, a smoothed Euclidean norm.
FieldLoss smoothness_loss(const DisplacementField& f);

// sum_t sum_c rho(r_c(t)) with r = compose_residual(forward, backward).
FieldPairLoss transformation_consistency_loss(const DisplacementField& forward,
                                              const DisplacementField& backward,
                                              const CharbonnierParams& params);

// Mean absolute difference; gradient is wrt `reconstructed`.
ScalarLoss image_cycle_loss(const ScalarVolume& original, const ScalarVolume& reconstructed);

// Mean soft Dice loss over foreground channels (k >= 1); gradient wrt `reconstructed`.
ProbLoss anatomy_cycle_dice_loss(const ProbVolume& original, const ProbVolume& reconstructed);

DiffCycleLoss anatomy_diff_consistency_loss(const ProbVolume& original,
                                            const ProbVolume& synthetic,
                                            const ProbVolume& reconstructed,
                                            const CharbonnierParams& params);

struct TermValues {
  double sim = 0.0;
  double smooth_f = 0.0;
  double smooth_b = 0.0;
  double cyc = 0.0;
  double trans = 0.0;
  double anatomy_cyc = 0.0;
  double diff_cyc = 0.0;
};

// sim + l1*cyc + l2*(anatomy_cyc + smooth_f + smooth_b + trans + diff_cyc), disabled
// terms dropped.
double assemble_total(const TermValues& terms, const LossWeights& weights);

struct ObjectiveBreakdown {
  TermValues terms;
  LossWeights weights;
  double total = 0.0;
  DisplacementField grad_forward;
  DisplacementField grad_backward;
};

// Forward and backward images and label maps of one cycle.
struct CycleImages {
  ScalarVolume synthetic_target;     // atlas warped by the forward field
  ScalarVolume reconstructed_atlas;  // synthetic target warped by the backward field
  ProbVolume synthetic_labels;
  ProbVolume reconstructed_labels;
};

struct ObjectiveInputs {
  const ScalarVolume& atlas;
  const ScalarVolume& target;
  const ProbVolume& atlas_labels;
};

CycleImages run_cycle(const ObjectiveInputs& in, const DisplacementField& forward,
                      const DisplacementField& backward);

struct ObjectiveOptions {
  LossWeights weights;
  CharbonnierParams charbonnier;
  int ncc_window = 9;
  bool with_gradient = true;
};

// Evaluates every enabled term of the cycle objective and, unless disabled, the
// chained gradient wrt both fields.
ObjectiveBreakdown composite_objective(const ObjectiveInputs& in,
                                       const DisplacementField& forward,
                                       const DisplacementField& backward,
                                       const ObjectiveOptions& options);

}  // namespace cyclereg
