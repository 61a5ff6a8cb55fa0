#pragma once

#include "cyclereg/evaluation.hpp"
#include "cyclereg/objective.hpp"
#include "cyclereg/optimizer.hpp"
#include "cyclereg/volume.hpp"

namespace cyclereg {

struct CycleReport {
  CycleImages images;
  TermValues terms;  // evaluated with the full-resolution objective settings
  double total = 0.0;
  InverseConsistency inverse_consistency;
};

struct TransferResult {
  LabelVolume segmentation;
  DisplacementField forward;
  DisplacementField backward;
  CycleReport report;
  SolveTrace trace;
};

// Forward/backward images and label maps, per-term losses and inverse-consistency
// statistics for a pair of solved fields.
CycleReport cycle_report(const ScalarVolume& atlas, const ScalarVolume& target,
                         const LabelVolume& atlas_labels, const DisplacementField& forward,
                         const DisplacementField& backward, const SolveConfig& config);

// Solves the pair and warps the soft atlas labels through the forward field.
TransferResult transfer_labels(const ScalarVolume& atlas, const LabelVolume& atlas_labels,
                               const ScalarVolume& target, const SolveConfig& config);

}  // namespace cyclereg
