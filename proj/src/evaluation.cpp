#include "cyclereg/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "cyclereg/errors.hpp"
#include "cyclereg/warp.hpp"

namespace cyclereg {

double dice_score(const LabelVolume& pred, const LabelVolume& gt, int k) {
  require_same_shape(pred.shape(), gt.shape(), "dice_score");
  if (k < 0 || k >= std::max(pred.classes(), gt.classes())) {
    throw ConfigError("dice_score: class " + std::to_string(k) + " out of range");
  }
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool in_p = pred[i] == k;
    const bool in_g = gt[i] == k;
    p += in_p;
    g += in_g;
    both += in_p && in_g;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

std::vector<double> foreground_dice(const LabelVolume& pred, const LabelVolume& gt) {
  const int classes = std::max(pred.classes(), gt.classes());
  std::vector<double> out;
  for (int k = 1; k < classes; ++k) out.push_back(dice_score(pred, gt, k));
  return out;
}

ScoreSummary summarize_scores(const std::vector<std::vector<double>>& table) {
  if (table.empty()) throw ConfigError("summarize_scores: empty score table");
  ScoreSummary out;
  for (const auto& row : table) {
    if (row.empty()) throw ConfigError("summarize_scores: case without class scores");
    double s = 0.0;
    for (double d : row) s += d;
    out.case_means.push_back(s / static_cast<double>(row.size()));
  }
  const double n = static_cast<double>(out.case_means.size());
  double sum = 0.0;
  for (double m : out.case_means) sum += m;
  out.mean = sum / n;
  double sq = 0.0;
  for (double m : out.case_means) sq += (m - out.mean) * (m - out.mean);
  out.std = std::sqrt(sq / n);
  const auto [lo, hi] = std::minmax_element(out.case_means.begin(), out.case_means.end());
  out.min = *lo;
  out.max = *hi;
  return out;
}

InverseConsistency inverse_consistency_error(const DisplacementField& forward,
                                             const DisplacementField& backward, int margin) {
  require_same_shape(forward.shape(), backward.shape(), "inverse_consistency_error");
  const GridShape& s = forward.shape();
  const DisplacementField r = compose_residual(forward, backward);
  InverseConsistency out{0.0, 0.0, ScalarVolume(s)};
  std::size_t count = 0;
  double sum = 0.0;
  std::size_t i = 0;
  for (int z = 0; z < s.nz; ++z) {
    for (int y = 0; y < s.ny; ++y) {
      for (int x = 0; x < s.nx; ++x, ++i) {
        const double norm = std::sqrt(r(i, 0) * r(i, 0) + r(i, 1) * r(i, 1) + r(i, 2) * r(i, 2));
        out.error[i] = norm;
        const bool interior = x >= margin && y >= margin && z >= margin && x < s.nx - margin &&
                              y < s.ny - margin && z < s.nz - margin;
        if (!interior) continue;
        sum += norm;
        out.max = std::max(out.max, norm);
        ++count;
      }
    }
  }
  out.mean = count > 0 ? sum / static_cast<double>(count) : 0.0;
  return out;
}

}  // namespace cyclereg
