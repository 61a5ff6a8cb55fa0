#include "cyclereg/transfer.hpp"

#include "cyclereg/warp.hpp"

namespace cyclereg {

CycleReport cycle_report(const ScalarVolume& atlas, const ScalarVolume& target,
                         const LabelVolume& atlas_labels, const DisplacementField& forward,
                         const DisplacementField& backward, const SolveConfig& config) {
  const ProbVolume soft = one_hot_encode(atlas_labels);
  const ObjectiveInputs inputs{atlas, target, soft};
  ObjectiveOptions options;
  options.weights = config.weights;
  options.charbonnier = config.charbonnier;
  options.ncc_window = config.ncc_window_fine;
  options.with_gradient = false;
  const ObjectiveBreakdown obj = composite_objective(inputs, forward, backward, options);
  return CycleReport{run_cycle(inputs, forward, backward), obj.terms, obj.total,
                     inverse_consistency_error(forward, backward)};
}

TransferResult transfer_labels(const ScalarVolume& atlas, const LabelVolume& atlas_labels,
                               const ScalarVolume& target, const SolveConfig& config) {
  SolveResult solved = optimize_pair(atlas, atlas_labels, target, config);
  CycleReport report =
      cycle_report(atlas, target, atlas_labels, solved.forward, solved.backward, config);
  LabelVolume segmentation = argmax_decode(report.images.synthetic_labels);
  return TransferResult{std::move(segmentation), std::move(solved.forward),
                        std::move(solved.backward), std::move(report), std::move(solved.trace)};
}

}  // namespace cyclereg
