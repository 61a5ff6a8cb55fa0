#include "cyclereg/volume.hpp"

#include <algorithm>
#include <cmath>

#include "cyclereg/errors.hpp"

namespace cyclereg {

GridShape::GridShape(int nx_, int ny_, int nz_) : nx(nx_), ny(ny_), nz(nz_) {
  if (nx < 2 || ny < 2 || nz < 2) {
    throw ShapeError("grid dimensions must be >= 2, got " + str());
  }
}

std::string GridShape::str() const {
  return std::to_string(nx) + "x" + std::to_string(ny) + "x" + std::to_string(nz);
}

void require_same_shape(const GridShape& a, const GridShape& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

// ---------------------------------------------------------------------------

ScalarVolume::ScalarVolume(GridShape shape, double fill)
    : shape_(shape), data_(shape.voxels(), fill) {}

ScalarVolume::ScalarVolume(GridShape shape, std::vector<double> values)
    : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape_.voxels()) {
    throw ShapeError("scalar volume " + shape_.str() + " expects " +
                     std::to_string(shape_.voxels()) + " values, got " +
                     std::to_string(data_.size()));
  }
}

bool ScalarVolume::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

LabelVolume::LabelVolume(GridShape shape, int classes)
    : shape_(shape), classes_(classes), data_(shape.voxels(), 0) {
  if (classes < 1) throw ConfigError("label volume needs at least one class");
}

LabelVolume::LabelVolume(GridShape shape, int classes, std::vector<std::uint16_t> ids)
    : shape_(shape), classes_(classes), data_(std::move(ids)) {
  if (classes < 1) throw ConfigError("label volume needs at least one class");
  if (data_.size() != shape_.voxels()) {
    throw ShapeError("label volume " + shape_.str() + " expects " +
                     std::to_string(shape_.voxels()) + " ids, got " +
                     std::to_string(data_.size()));
  }
  for (auto id : data_) {
    if (id >= classes_) {
      throw ConfigError("label id " + std::to_string(id) + " out of range for " +
                        std::to_string(classes_) + " classes");
    }
  }
}

ProbVolume::ProbVolume(GridShape shape, int channels, double fill)
    : shape_(shape),
      channels_(channels),
      data_(static_cast<std::size_t>(channels) * shape.voxels(), fill) {
  if (channels < 1) throw ConfigError("probability volume needs at least one channel");
}

DisplacementField::DisplacementField(GridShape shape)
    : shape_(shape), data_(3 * shape.voxels(), 0.0) {}

DisplacementField::DisplacementField(GridShape shape, std::vector<double> components)
    : shape_(shape), data_(std::move(components)) {
  if (data_.size() != 3 * shape_.voxels()) {
    throw ShapeError("displacement field " + shape_.str() + " expects " +
                     std::to_string(3 * shape_.voxels()) + " components, got " +
                     std::to_string(data_.size()));
  }
}

DisplacementField DisplacementField::constant(GridShape shape, const Vec3& d) {
  DisplacementField f(shape);
  for (std::size_t i = 0; i < f.voxels(); ++i) f.set(i, d);
  return f;
}

std::vector<double> DisplacementField::component(int c) const {
  std::vector<double> out(voxels());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = data_[3 * i + c];
  return out;
}

bool DisplacementField::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------

ProbVolume one_hot_encode(const LabelVolume& labels) {
  ProbVolume out(labels.shape(), labels.classes(), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) out(labels[i], i) = 1.0;
  return out;
}

LabelVolume argmax_decode(const ProbVolume& probs) {
  const int k_count = probs.channels();
  std::vector<std::uint16_t> ids(probs.voxels(), 0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    int best = 0;
    double best_value = probs(0, i);
    for (int k = 1; k < k_count; ++k) {
      if (probs(k, i) > best_value) {
        best_value = probs(k, i);
        best = k;
      }
    }
    ids[i] = static_cast<std::uint16_t>(best);
  }
  return LabelVolume(probs.shape(), k_count, std::move(ids));
}

namespace {

GridShape checked_coarse_shape(const GridShape& s) {
  if (s.nx < 4 || s.ny < 4 || s.nz < 4) {
    throw PyramidTooCoarse("cannot downsample grid " + s.str() + ": every dimension must be >= 4");
  }
  return GridShape((s.nx + 1) / 2, (s.ny + 1) / 2, (s.nz + 1) / 2);
}

// Block mean of a strided x-fastest array; odd trailing planes replicate the edge.
void box_mean(const GridShape& fine, const GridShape& coarse, const double* src,
              std::size_t stride, double* dst, double scale) {
  for (int z = 0; z < coarse.nz; ++z) {
    const int z0 = 2 * z;
    const int z1 = std::min(2 * z + 1, fine.nz - 1);
    for (int y = 0; y < coarse.ny; ++y) {
      const int y0 = 2 * y;
      const int y1 = std::min(2 * y + 1, fine.ny - 1);
      for (int x = 0; x < coarse.nx; ++x) {
        const int x0 = 2 * x;
        const int x1 = std::min(2 * x + 1, fine.nx - 1);
        double sum = src[stride * fine.index(x0, y0, z0)] + src[stride * fine.index(x1, y0, z0)] +
                     src[stride * fine.index(x0, y1, z0)] + src[stride * fine.index(x1, y1, z0)] +
                     src[stride * fine.index(x0, y0, z1)] + src[stride * fine.index(x1, y0, z1)] +
                     src[stride * fine.index(x0, y1, z1)] + src[stride * fine.index(x1, y1, z1)];
        dst[stride * coarse.index(x, y, z)] = sum * 0.125 * scale;
      }
    }
  }
}

}  // namespace

GridShape downsampled_shape(const GridShape& shape) { return checked_coarse_shape(shape); }

ScalarVolume downsample_box2(const ScalarVolume& v) {
  const GridShape coarse = checked_coarse_shape(v.shape());
  ScalarVolume out(coarse);
  box_mean(v.shape(), coarse, v.values().data(), 1, out.values().data(), 1.0);
  return out;
}

ProbVolume downsample_box2(const ProbVolume& v) {
  const GridShape coarse = checked_coarse_shape(v.shape());
  ProbVolume out(coarse, v.channels());
  for (int k = 0; k < v.channels(); ++k) {
    box_mean(v.shape(), coarse, v.channel(k).data(), 1, out.channel(k).data(), 1.0);
  }
  return out;
}

DisplacementField downsample_box2(const DisplacementField& f) {
  const GridShape coarse = checked_coarse_shape(f.shape());
  DisplacementField out(coarse);
  for (int c = 0; c < 3; ++c) {
    box_mean(f.shape(), coarse, f.values().data() + c, 3, out.values().data() + c, 0.5);
  }
  return out;
}

DisplacementField upsample_field_2x(const DisplacementField& f, const GridShape& target) {
  const GridShape& src = f.shape();
  for (int axis = 0; axis < 3; ++axis) {
    const int n = src.dim(axis);
    const int m = target.dim(axis);
    if (m < 2 * n - 1 || m > 2 * n) {
      throw ShapeError("upsample target " + target.str() + " is not a 2x prolongation of " +
                       src.str());
    }
  }

  // Cell-centred mapping: fine voxel i sits at coarse coordinate i/2 - 1/4.
  struct Tap {
    int i0, i1;
    double w;
  };
  auto taps = [](int fine_n, int coarse_n) {
    std::vector<Tap> out(static_cast<std::size_t>(fine_n));
    for (int i = 0; i < fine_n; ++i) {
      double p = 0.5 * i - 0.25;
      p = std::clamp(p, 0.0, static_cast<double>(coarse_n - 1));
      int i0 = std::min(static_cast<int>(std::floor(p)), coarse_n - 1);
      int i1 = std::min(i0 + 1, coarse_n - 1);
      out[static_cast<std::size_t>(i)] = {i0, i1, p - i0};
    }
    return out;
  };
  const auto tx = taps(target.nx, src.nx);
  const auto ty = taps(target.ny, src.ny);
  const auto tz = taps(target.nz, src.nz);

  DisplacementField out(target);
  for (int z = 0; z < target.nz; ++z) {
    const Tap& cz = tz[static_cast<std::size_t>(z)];
    for (int y = 0; y < target.ny; ++y) {
      const Tap& cy = ty[static_cast<std::size_t>(y)];
      for (int x = 0; x < target.nx; ++x) {
        const Tap& cx = tx[static_cast<std::size_t>(x)];
        const std::size_t o = target.index(x, y, z);
        for (int c = 0; c < 3; ++c) {
          auto v = [&](int xi, int yi, int zi) { return f(src.index(xi, yi, zi), c); };
          const double c00 = v(cx.i0, cy.i0, cz.i0) * (1 - cx.w) + v(cx.i1, cy.i0, cz.i0) * cx.w;
          const double c10 = v(cx.i0, cy.i1, cz.i0) * (1 - cx.w) + v(cx.i1, cy.i1, cz.i0) * cx.w;
          const double c01 = v(cx.i0, cy.i0, cz.i1) * (1 - cx.w) + v(cx.i1, cy.i0, cz.i1) * cx.w;
          const double c11 = v(cx.i0, cy.i1, cz.i1) * (1 - cx.w) + v(cx.i1, cy.i1, cz.i1) * cx.w;
          const double c0 = c00 * (1 - cy.w) + c10 * cy.w;
          const double c1 = c01 * (1 - cy.w) + c11 * cy.w;
          out(o, c) = 2.0 * (c0 * (1 - cz.w) + c1 * cz.w);
        }
      }
    }
  }
  return out;
}

}  // namespace cyclereg
