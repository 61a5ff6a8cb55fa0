#pragma once

#include <vector>

#include "cyclereg/volume.hpp"

namespace cyclereg {

// 2|P∩G| / (|P|+|G|) for class k. Both masks empty gives 1, exactly one empty gives 0.
double dice_score(const LabelVolume& pred, const LabelVolume& gt, int k);

// Dice for classes 1..K-1.
std::vector<double> foreground_dice(const LabelVolume& pred, const LabelVolume& gt);

struct ScoreSummary {
  std::vector<double> case_means;  // mean foreground Dice per case
  double mean = 0.0;
  double std = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
};

// table[case][class] holds foreground Dice values.
ScoreSummary summarize_scores(const std::vector<std::vector<double>>& table);

struct InverseConsistency {
  double mean = 0.0;  // over voxels at least `margin` voxels from every face
  double max = 0.0;
  ScalarVolume error;  // |fF(t) + fB(t + fF(t))| everywhere
};

inline constexpr int kInteriorMargin = 2;

InverseConsistency inverse_consistency_error(const DisplacementField& forward,
                                             const DisplacementField& backward,
                                             int margin = kInteriorMargin);

}  // namespace cyclereg
