#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cyclereg/volume.hpp"

namespace cyclereg {

// Precomputed trilinear stencils for one displacement field. Sample positions
// t + d(t) outside the grid are clamped to the edge, so every sample is a convex
// combination of real voxels and its positional derivative is zero off-grid.
//
// Building the sampler once and reusing it for every volume warped by the same
// field is the fast path used by the objective.
class TrilinearSampler {
 public:
  explicit TrilinearSampler(const DisplacementField& field);

  const GridShape& shape() const noexcept { return shape_; }

  // out(t) = src(t + d(t))
  void sample(std::span<const double> src, std::span<double> out) const;

  // Adjoint of sample(). Accumulates (+=) into grad_field (interleaved, 3 per voxel)
  // and, when non-empty, into grad_src. Sequential scatter keeps results bit-stable.
  void backprop(std::span<const double> src, std::span<const double> upstream,
                std::span<double> grad_src, std::span<double> grad_field) const;

 private:
  struct Stencil {
    std::uint32_t base;
    std::uint32_t step_x;
    std::uint32_t step_y;
    std::uint32_t step_z;
    double fx, fy, fz;
  };

  GridShape shape_;
  std::vector<Stencil> stencils_;
};

struct ScalarWarpVJP {
  ScalarVolume grad_source;
  DisplacementField grad_field;
};

struct ProbWarpVJP {
  ProbVolume grad_source;
  DisplacementField grad_field;
};

ScalarVolume warp_scalar(const ScalarVolume& src, const DisplacementField& field);

// Channels are warped independently and are not renormalized.
ProbVolume warp_channels(const ProbVolume& src, const DisplacementField& field);

// r(t) = fF(t) + fB(t + fF(t)); the inverse-consistency residual.
DisplacementField compose_residual(const DisplacementField& forward,
                                   const DisplacementField& backward);

ScalarWarpVJP warp_vjp(const ScalarVolume& src, const DisplacementField& field,
                       const ScalarVolume& upstream);
ProbWarpVJP warp_vjp(const ProbVolume& src, const DisplacementField& field,
                     const ProbVolume& upstream);

}  // namespace cyclereg
