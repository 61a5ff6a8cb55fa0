#include "cyclereg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cyclereg/errors.hpp"
#include "cyclereg/warp.hpp"

namespace cyclereg {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

constexpr double kDefaultContrasts[] = {0.5, 0.9, 0.2, 0.75, 1.0, 0.35, 0.6, 0.1};

double ellipsoid_radius2(const Ellipsoid& e, int x, int y, int z) {
  const double dx = (x - e.center[0]) / e.semi_axes[0];
  const double dy = (y - e.center[1]) / e.semi_axes[1];
  const double dz = (z - e.center[2]) / e.semi_axes[2];
  return dx * dx + dy * dy + dz * dz;
}

void check_fits(const Ellipsoid& e, const GridShape& s, std::size_t which) {
  for (int a = 0; a < 3; ++a) {
    if (!(e.semi_axes[static_cast<std::size_t>(a)] > 0.0) ||
        e.center[static_cast<std::size_t>(a)] - e.semi_axes[static_cast<std::size_t>(a)] < 2.0 ||
        e.center[static_cast<std::size_t>(a)] + e.semi_axes[static_cast<std::size_t>(a)] >
            s.dim(a) - 3.0) {
      throw ConfigError("structure " + std::to_string(which + 1) +
                        " does not fit inside grid " + s.str() + " with a 2-voxel margin");
    }
  }
}

std::vector<Ellipsoid> place_structures(const PhantomSpec& spec, Xoshiro256& rng) {
  const GridShape& s = spec.shape;
  std::vector<Ellipsoid> out;
  if (spec.num_structures < 1) throw ConfigError("phantom needs at least one structure");

  Ellipsoid outer;
  for (std::size_t a = 0; a < 3; ++a) {
    const double n = s.dim(static_cast<int>(a));
    outer.center[a] = 0.5 * (n - 1) + rng.uniform(-0.03, 0.03) * n;
    outer.semi_axes[a] = rng.uniform(0.34, 0.40) * n;
  }
  out.push_back(outer);

  constexpr int kMaxAttempts = 2000;
  for (int k = 1; k < spec.num_structures; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      Ellipsoid e;
      for (std::size_t a = 0; a < 3; ++a) {
        e.semi_axes[a] = rng.uniform(0.09, 0.13) * s.dim(static_cast<int>(a));
      }
      const double reach = *std::max_element(e.semi_axes.begin(), e.semi_axes.end());
      double r2 = 0.0;
      for (std::size_t a = 0; a < 3; ++a) {
        const double room = outer.semi_axes[a] - reach - 1.0;
        if (room <= 0.0) {
          r2 = 2.0;
          break;
        }
        const double u = rng.uniform(-1.0, 1.0);
        e.center[a] = outer.center[a] + u * room;
        r2 += u * u;
      }
      if (r2 > 1.0) continue;
      placed = std::all_of(out.begin() + 1, out.end(), [&](const Ellipsoid& other) {
        const double other_reach =
            *std::max_element(other.semi_axes.begin(), other.semi_axes.end());
        double d2 = 0.0;
        for (std::size_t a = 0; a < 3; ++a) {
          d2 += (e.center[a] - other.center[a]) * (e.center[a] - other.center[a]);
        }
        return std::sqrt(d2) > reach + other_reach + 2.0;
      });
      if (placed) out.push_back(e);
    }
    if (!placed) {
      throw ConfigError("could not place " + std::to_string(spec.num_structures) +
                        " disjoint structures in grid " + s.str());
    }
  }
  return out;
}

}  // namespace

Xoshiro256::Xoshiro256(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& word : s_) word = splitmix64(x);
}

std::uint64_t Xoshiro256::next() noexcept {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Xoshiro256::uniform() noexcept {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double Xoshiro256::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Phantom gen_phantom(const PhantomSpec& spec) {
  if (!(spec.noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (!(spec.edge_width > 0.0)) throw ConfigError("edge_width must be > 0");
  Xoshiro256 rng(spec.seed);

  std::vector<Ellipsoid> structures =
      spec.structures.empty() ? place_structures(spec, rng) : spec.structures;
  if (structures.size() > 0xfffe) throw ConfigError("too many structures");
  if (spec.structures.empty()) {
    if (!spec.contrasts.empty() &&
        spec.contrasts.size() != static_cast<std::size_t>(spec.num_structures)) {
      throw ConfigError("contrasts needs one entry per structure");
    }
    for (std::size_t k = 0; k < structures.size(); ++k) {
      structures[k].intensity = spec.contrasts.empty()
                                    ? kDefaultContrasts[k % std::size(kDefaultContrasts)]
                                    : spec.contrasts[k];
    }
  }
  for (std::size_t k = 0; k < structures.size(); ++k) check_fits(structures[k], spec.shape, k);

  const GridShape& s = spec.shape;
  const int classes = static_cast<int>(structures.size()) + 1;
  Phantom out{ScalarVolume(s), LabelVolume(s, classes), structures};
  std::size_t i = 0;
  for (int z = 0; z < s.nz; ++z) {
    for (int y = 0; y < s.ny; ++y) {
      for (int x = 0; x < s.nx; ++x, ++i) {
        double value = 0.0;
        std::uint16_t label = 0;
        for (std::size_t k = 0; k < structures.size(); ++k) {
          const Ellipsoid& e = structures[k];
          const double r2 = ellipsoid_radius2(e, x, y, z);
          if (r2 <= 1.0) label = static_cast<std::uint16_t>(k + 1);
          // Approximate signed distance to the surface, positive inside.
          const double min_axis = *std::min_element(e.semi_axes.begin(), e.semi_axes.end());
          const double dist = (1.0 - std::sqrt(r2)) * min_axis;
          const double inside = 1.0 / (1.0 + std::exp(-dist / spec.edge_width));
          value = value * (1.0 - inside) + e.intensity * inside;
        }
        out.image[i] = value;
        out.labels[i] = label;
      }
    }
  }
  if (spec.noise_sigma > 0.0) {
    for (std::size_t j = 0; j < out.image.size(); ++j) out.image[j] += spec.noise_sigma * rng.normal();
  }
  return out;
}

std::vector<double> gaussian_blur(const GridShape& s, std::vector<double> values, double sigma) {
  if (!(sigma > 0.0)) return values;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (int j = -radius; j <= radius; ++j) {
    const double w = std::exp(-0.5 * j * j / (sigma * sigma));
    kernel[static_cast<std::size_t>(j + radius)] = w;
    norm += w;
  }
  for (double& w : kernel) w /= norm;

  std::vector<double> tmp(values.size());
  for (int axis = 0; axis < 3; ++axis) {
    const int n = s.dim(axis);
    std::size_t i = 0;
    for (int z = 0; z < s.nz; ++z) {
      for (int y = 0; y < s.ny; ++y) {
        for (int x = 0; x < s.nx; ++x, ++i) {
          const int pos = axis == 0 ? x : axis == 1 ? y : z;
          double acc = 0.0;
          for (int j = -radius; j <= radius; ++j) {
            const int q = std::clamp(pos + j, 0, n - 1);
            const std::size_t src = axis == 0   ? s.index(q, y, z)
                                    : axis == 1 ? s.index(x, q, z)
                                                : s.index(x, y, q);
            acc += kernel[static_cast<std::size_t>(j + radius)] * values[src];
          }
          tmp[i] = acc;
        }
      }
    }
    values.swap(tmp);
  }
  return values;
}

DisplacementField gen_smooth_field(const GridShape& shape, const DeformSpec& spec) {
  if (!(spec.max_magnitude >= 0.0)) throw ConfigError("max_magnitude must be >= 0");
  if (!(spec.smoothness_sigma >= 0.0)) throw ConfigError("smoothness_sigma must be >= 0");
  DisplacementField out(shape);
  if (spec.max_magnitude == 0.0) return out;

  // Noise is drawn on a grid padded by the kernel radius and cropped after blurring, so
  // edge replication does not inflate the variance near the faces.
  Xoshiro256 rng(spec.seed);
  const int pad = static_cast<int>(std::ceil(3.0 * spec.smoothness_sigma));
  const GridShape padded(shape.nx + 2 * pad, shape.ny + 2 * pad, shape.nz + 2 * pad);
  const std::size_t n = shape.voxels();
  std::vector<std::vector<double>> comps(3, std::vector<double>(n));
  std::vector<double> noise(padded.voxels());
  for (auto& comp : comps) {
    for (double& v : noise) v = rng.normal();
    const std::vector<double> blurred = gaussian_blur(padded, noise, spec.smoothness_sigma);
    std::size_t i = 0;
    for (int z = 0; z < shape.nz; ++z)
      for (int y = 0; y < shape.ny; ++y)
        for (int x = 0; x < shape.nx; ++x, ++i) comp[i] = blurred[padded.index(x + pad, y + pad, z + pad)];
  }

  double max_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double norm =
        std::sqrt(comps[0][i] * comps[0][i] + comps[1][i] * comps[1][i] + comps[2][i] * comps[2][i]);
    max_norm = std::max(max_norm, norm);
  }
  const double scale = max_norm > 0.0 ? spec.max_magnitude / max_norm : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) out(i, c) = scale * comps[static_cast<std::size_t>(c)][i];
  }
  return out;
}

PhantomPair make_pair(const ScalarVolume& image, const LabelVolume& labels,
                      const DisplacementField& field, double noise_sigma,
                      std::uint64_t noise_seed) {
  require_same_shape(image.shape(), labels.shape(), "make_pair labels");
  require_same_shape(image.shape(), field.shape(), "make_pair field");
  PhantomPair out{warp_scalar(image, field),
                  argmax_decode(warp_channels(one_hot_encode(labels), field))};
  if (noise_sigma > 0.0) {
    Xoshiro256 rng(noise_seed);
    for (std::size_t i = 0; i < out.target.size(); ++i) out.target[i] += noise_sigma * rng.normal();
  }
  return out;
}

}  // namespace cyclereg
