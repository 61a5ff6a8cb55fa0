#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cyclereg {

// Voxel counts along x, y, z. Spacing is 1 on every axis; memory order is x-fastest.
struct GridShape {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  GridShape() = default;
  GridShape(int nx, int ny, int nz);

  std::size_t voxels() const noexcept {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  std::size_t index(int x, int y, int z) const noexcept {
    return (static_cast<std::size_t>(z) * static_cast<std::size_t>(ny) +
            static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(nx) +
           static_cast<std::size_t>(x);
  }
  int dim(int axis) const noexcept { return axis == 0 ? nx : axis == 1 ? ny : nz; }
  std::string str() const;

  friend bool operator==(const GridShape&, const GridShape&) = default;
};

class ScalarVolume {
 public:
  ScalarVolume() = default;
  explicit ScalarVolume(GridShape shape, double fill = 0.0);
  ScalarVolume(GridShape shape, std::vector<double> values);

  const GridShape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }

  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double at(int x, int y, int z) const noexcept { return data_[shape_.index(x, y, z)]; }
  double& at(int x, int y, int z) noexcept { return data_[shape_.index(x, y, z)]; }

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }

  bool all_finite() const noexcept;

 private:
  GridShape shape_;
  std::vector<double> data_;
};

// Integer class ids in [0, classes). Class 0 is background.
class LabelVolume {
 public:
  LabelVolume() = default;
  LabelVolume(GridShape shape, int classes);
  LabelVolume(GridShape shape, int classes, std::vector<std::uint16_t> ids);

  const GridShape& shape() const noexcept { return shape_; }
  int classes() const noexcept { return classes_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::uint16_t operator[](std::size_t i) const noexcept { return data_[i]; }
  std::uint16_t& operator[](std::size_t i) noexcept { return data_[i]; }
  std::uint16_t at(int x, int y, int z) const noexcept { return data_[shape_.index(x, y, z)]; }
  std::uint16_t& at(int x, int y, int z) noexcept { return data_[shape_.index(x, y, z)]; }

  std::span<const std::uint16_t> ids() const noexcept { return data_; }
  std::span<std::uint16_t> ids() noexcept { return data_; }

  friend bool operator==(const LabelVolume&, const LabelVolume&) = default;

 private:
  GridShape shape_;
  int classes_ = 0;
  std::vector<std::uint16_t> data_;
};

// K soft channels stored channel-major; each channel is a contiguous x-fastest block.
class ProbVolume {
 public:
  ProbVolume() = default;
  ProbVolume(GridShape shape, int channels, double fill = 0.0);

  const GridShape& shape() const noexcept { return shape_; }
  int channels() const noexcept { return channels_; }
  std::size_t voxels() const noexcept { return shape_.voxels(); }

  std::span<const double> channel(int k) const noexcept {
    return std::span<const double>(data_).subspan(static_cast<std::size_t>(k) * voxels(),
                                                  voxels());
  }
  std::span<double> channel(int k) noexcept {
    return std::span<double>(data_).subspan(static_cast<std::size_t>(k) * voxels(), voxels());
  }
  double operator()(int k, std::size_t i) const noexcept {
    return data_[static_cast<std::size_t>(k) * voxels() + i];
  }
  double& operator()(int k, std::size_t i) noexcept {
    return data_[static_cast<std::size_t>(k) * voxels() + i];
  }

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }

 private:
  GridShape shape_;
  int channels_ = 0;
  std::vector<double> data_;
};

using Vec3 = std::array<double, 3>;

// Per-voxel displacement in voxel units, components interleaved (dx, dy, dz).
// A warp by this field reads the source at t + d(t).
class DisplacementField {
 public:
  DisplacementField() = default;
  explicit DisplacementField(GridShape shape);
  DisplacementField(GridShape shape, std::vector<double> components);

  static DisplacementField constant(GridShape shape, const Vec3& d);

  const GridShape& shape() const noexcept { return shape_; }
  std::size_t voxels() const noexcept { return shape_.voxels(); }

  Vec3 at(std::size_t i) const noexcept {
    return {data_[3 * i], data_[3 * i + 1], data_[3 * i + 2]};
  }
  void set(std::size_t i, const Vec3& d) noexcept {
    data_[3 * i] = d[0];
    data_[3 * i + 1] = d[1];
    data_[3 * i + 2] = d[2];
  }
  double operator()(std::size_t i, int c) const noexcept { return data_[3 * i + c]; }
  double& operator()(std::size_t i, int c) noexcept { return data_[3 * i + c]; }

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }

  // Copy of one component as a contiguous x-fastest block.
  std::vector<double> component(int c) const;
  bool all_finite() const noexcept;

 private:
  GridShape shape_;
  std::vector<double> data_;
};

void require_same_shape(const GridShape& a, const GridShape& b, const char* what);

ProbVolume one_hot_encode(const LabelVolume& labels);

// Lowest index wins ties.
LabelVolume argmax_decode(const ProbVolume& probs);

// 2x2x2 block mean. Odd dimensions are edge-replicated to even first; any dimension
// below 4 throws PyramidTooCoarse. Field components are halved to stay in voxel units.
ScalarVolume downsample_box2(const ScalarVolume& v);
ProbVolume downsample_box2(const ProbVolume& v);
DisplacementField downsample_box2(const DisplacementField& f);

GridShape downsampled_shape(const GridShape& shape);

// Trilinear prolongation onto `target` (each dim 2n-1 or 2n), components doubled.
DisplacementField upsample_field_2x(const DisplacementField& f, const GridShape& target);

}  // namespace cyclereg
