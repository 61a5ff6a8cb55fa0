#include "cyclereg/warp.hpp"

#include <cmath>

#include "cyclereg/errors.hpp"

namespace cyclereg {

namespace {

struct AxisTap {
  int i0;
  std::uint32_t step;  // 0 when clamped to an edge
  double frac;
};

AxisTap axis_tap(double p, int n) {
  if (!(p >= 0.0)) return {0, 0, 0.0};
  if (p >= n - 1) return {n - 1, 0, 0.0};
  const int i0 = static_cast<int>(std::floor(p));
  return {i0, 1, p - i0};
}

}  // namespace

TrilinearSampler::TrilinearSampler(const DisplacementField& field)
    : shape_(field.shape()), stencils_(field.voxels()) {
  const auto sx = static_cast<std::uint32_t>(shape_.nx);
  const auto sxy = static_cast<std::uint32_t>(shape_.nx) * static_cast<std::uint32_t>(shape_.ny);
  std::size_t i = 0;
  for (int z = 0; z < shape_.nz; ++z) {
    for (int y = 0; y < shape_.ny; ++y) {
      for (int x = 0; x < shape_.nx; ++x, ++i) {
        const AxisTap ax = axis_tap(x + field(i, 0), shape_.nx);
        const AxisTap ay = axis_tap(y + field(i, 1), shape_.ny);
        const AxisTap az = axis_tap(z + field(i, 2), shape_.nz);
        stencils_[i] = Stencil{static_cast<std::uint32_t>(shape_.index(ax.i0, ay.i0, az.i0)),
                               ax.step,
                               ay.step * sx,
                               az.step * sxy,
                               ax.frac,
                               ay.frac,
                               az.frac};
      }
    }
  }
}

void TrilinearSampler::sample(std::span<const double> src, std::span<double> out) const {
  const double* v = src.data();
  for (std::size_t i = 0; i < stencils_.size(); ++i) {
    const Stencil& s = stencils_[i];
    const std::uint32_t b = s.base;
    const double c00 = v[b] + s.fx * (v[b + s.step_x] - v[b]);
    const double c10 = v[b + s.step_y] + s.fx * (v[b + s.step_y + s.step_x] - v[b + s.step_y]);
    const std::uint32_t bz = b + s.step_z;
    const double c01 = v[bz] + s.fx * (v[bz + s.step_x] - v[bz]);
    const double c11 = v[bz + s.step_y] + s.fx * (v[bz + s.step_y + s.step_x] - v[bz + s.step_y]);
    const double c0 = c00 + s.fy * (c10 - c00);
    const double c1 = c01 + s.fy * (c11 - c01);
    out[i] = c0 + s.fz * (c1 - c0);
  }
}

void TrilinearSampler::backprop(std::span<const double> src, std::span<const double> upstream,
                                std::span<double> grad_src, std::span<double> grad_field) const {
  const double* v = src.data();
  const bool want_src = !grad_src.empty();
  for (std::size_t i = 0; i < stencils_.size(); ++i) {
    const double g = upstream[i];
    if (g == 0.0) continue;
    const Stencil& s = stencils_[i];
    const std::uint32_t b000 = s.base;
    const std::uint32_t b100 = b000 + s.step_x;
    const std::uint32_t b010 = b000 + s.step_y;
    const std::uint32_t b110 = b010 + s.step_x;
    const std::uint32_t b001 = b000 + s.step_z;
    const std::uint32_t b101 = b001 + s.step_x;
    const std::uint32_t b011 = b001 + s.step_y;
    const std::uint32_t b111 = b011 + s.step_x;

    const double fx = s.fx, fy = s.fy, fz = s.fz;
    const double gx = 1.0 - fx, gy = 1.0 - fy, gz = 1.0 - fz;

    // A zero step means the axis is clamped; v[b+0]-v[b] then vanishes on its own.
    const double dx00 = v[b100] - v[b000];
    const double dx10 = v[b110] - v[b010];
    const double dx01 = v[b101] - v[b001];
    const double dx11 = v[b111] - v[b011];
    const double d_dx = gz * (gy * dx00 + fy * dx10) + fz * (gy * dx01 + fy * dx11);

    const double c00 = v[b000] + fx * dx00;
    const double c10 = v[b010] + fx * dx10;
    const double c01 = v[b001] + fx * dx01;
    const double c11 = v[b011] + fx * dx11;
    const double d_dy = gz * (c10 - c00) + fz * (c11 - c01);

    const double c0 = c00 + fy * (c10 - c00);
    const double c1 = c01 + fy * (c11 - c01);
    const double d_dz = c1 - c0;

    grad_field[3 * i] += g * d_dx;
    grad_field[3 * i + 1] += g * d_dy;
    grad_field[3 * i + 2] += g * d_dz;

    if (want_src) {
      grad_src[b000] += g * gx * gy * gz;
      grad_src[b100] += g * fx * gy * gz;
      grad_src[b010] += g * gx * fy * gz;
      grad_src[b110] += g * fx * fy * gz;
      grad_src[b001] += g * gx * gy * fz;
      grad_src[b101] += g * fx * gy * fz;
      grad_src[b011] += g * gx * fy * fz;
      grad_src[b111] += g * fx * fy * fz;
    }
  }
}

// ---------------------------------------------------------------------------

ScalarVolume warp_scalar(const ScalarVolume& src, const DisplacementField& field) {
  require_same_shape(src.shape(), field.shape(), "warp_scalar");
  const TrilinearSampler sampler(field);
  ScalarVolume out(src.shape());
  sampler.sample(src.values(), out.values());
  return out;
}

ProbVolume warp_channels(const ProbVolume& src, const DisplacementField& field) {
  require_same_shape(src.shape(), field.shape(), "warp_channels");
  const TrilinearSampler sampler(field);
  ProbVolume out(src.shape(), src.channels());
  for (int k = 0; k < src.channels(); ++k) sampler.sample(src.channel(k), out.channel(k));
  return out;
}

DisplacementField compose_residual(const DisplacementField& forward,
                                   const DisplacementField& backward) {
  require_same_shape(forward.shape(), backward.shape(), "compose_residual");
  const TrilinearSampler sampler(forward);
  DisplacementField out(forward.shape());
  std::vector<double> sampled(forward.voxels());
  for (int c = 0; c < 3; ++c) {
    const std::vector<double> comp = backward.component(c);
    sampler.sample(comp, sampled);
    for (std::size_t i = 0; i < sampled.size(); ++i) out(i, c) = forward(i, c) + sampled[i];
  }
  return out;
}

ScalarWarpVJP warp_vjp(const ScalarVolume& src, const DisplacementField& field,
                       const ScalarVolume& upstream) {
  require_same_shape(src.shape(), field.shape(), "warp_vjp");
  require_same_shape(src.shape(), upstream.shape(), "warp_vjp upstream");
  const TrilinearSampler sampler(field);
  ScalarWarpVJP out{ScalarVolume(src.shape()), DisplacementField(src.shape())};
  sampler.backprop(src.values(), upstream.values(), out.grad_source.values(),
                   out.grad_field.values());
  return out;
}

ProbWarpVJP warp_vjp(const ProbVolume& src, const DisplacementField& field,
                     const ProbVolume& upstream) {
  require_same_shape(src.shape(), field.shape(), "warp_vjp");
  require_same_shape(src.shape(), upstream.shape(), "warp_vjp upstream");
  if (src.channels() != upstream.channels()) {
    throw ShapeError("warp_vjp: channel count mismatch");
  }
  const TrilinearSampler sampler(field);
  ProbWarpVJP out{ProbVolume(src.shape(), src.channels()), DisplacementField(src.shape())};
  for (int k = 0; k < src.channels(); ++k) {
    sampler.backprop(src.channel(k), upstream.channel(k), out.grad_source.channel(k),
                     out.grad_field.values());
  }
  return out;
}

}  // namespace cyclereg
