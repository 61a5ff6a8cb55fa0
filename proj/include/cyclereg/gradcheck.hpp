#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cyclereg {

struct GradCheckOptions {
  int size = 6;               // cubic grid edge
  std::uint64_t seed = 1;
  int samples_per_field = 30; // random coordinates checked per field and term
  double step = 1e-5;         // central-difference step
  // Relative error is |analytic - fd| / max(|analytic|, |fd|, abs_floor).
  double abs_floor = 1e-3;
};

struct GradCheckResult {
  std::string term;
  double max_rel_error_forward = 0.0;
  double max_rel_error_backward = 0.0;
  int samples = 0;

  double max_rel_error() const {
    return max_rel_error_forward > max_rel_error_backward ? max_rel_error_forward
                                                          : max_rel_error_backward;
  }
};

// Checks the chained gradient of every loss term, and of the weighted objective, wrt both
// displacement fields against central finite differences of the term value. The random
// instance keeps every sample position off the voxel lattice and every absolute value
// away from its kink.
std::vector<GradCheckResult> run_gradient_suite(const GradCheckOptions& options);

}  // namespace cyclereg
