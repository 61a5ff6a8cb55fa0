#pragma once

#include <cstdint>
#include <vector>

#include "cyclereg/volume.hpp"

namespace cyclereg {

// xoshiro256** seeded through splitmix64. Used for every random draw so that phantoms
// are bit-identical across platforms and standard libraries.
class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed);

  std::uint64_t next() noexcept;
  double uniform() noexcept;  // [0, 1)
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double normal() noexcept;   // Box-Muller, standard normal

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct Ellipsoid {
  Vec3 center{};
  Vec3 semi_axes{};
  double intensity = 1.0;
};

struct PhantomSpec {
  GridShape shape{64, 64, 64};
  int num_structures = 4;          // foreground classes, K - 1
  std::vector<double> contrasts;   // per-structure intensity; empty picks defaults
  double noise_sigma = 0.02;
  double edge_width = 0.5;         // voxels, logistic intensity falloff at borders
  std::uint64_t seed = 1;
  // When non-empty, placed verbatim instead of drawing random structures.
  std::vector<Ellipsoid> structures;
};

struct Phantom {
  ScalarVolume image;
  LabelVolume labels;
  std::vector<Ellipsoid> structures;
};

// Structure 1 is a large outer ellipsoid; the rest are disjoint blobs nested inside it.
// Later structures overwrite earlier ones in the label map.
Phantom gen_phantom(const PhantomSpec& spec);

struct DeformSpec {
  double max_magnitude = 3.0;
  double smoothness_sigma = 6.0;
  std::uint64_t seed = 1;
};

// Gaussian-smoothed white noise, rescaled so that max_t |d(t)| == max_magnitude.
DisplacementField gen_smooth_field(const GridShape& shape, const DeformSpec& spec);

struct PhantomPair {
  ScalarVolume target;
  LabelVolume labels;
};

// Target image and ground-truth labels for a known deformation, built with the same
// warp the solver uses. noise_sigma > 0 adds fresh noise drawn from noise_seed.
PhantomPair make_pair(const ScalarVolume& image, const LabelVolume& labels,
                      const DisplacementField& field, double noise_sigma = 0.0,
                      std::uint64_t noise_seed = 0);

// Separable Gaussian blur with clamp-to-edge boundaries, kernel truncated at 3 sigma.
std::vector<double> gaussian_blur(const GridShape& shape, std::vector<double> values,
                                  double sigma);

}  // namespace cyclereg
