#include "doctest.h"
#include "oracles.hpp"

#include "cyclereg/errors.hpp"
#include "cyclereg/evaluation.hpp"
#include "cyclereg/phantom.hpp"
#include "cyclereg/warp.hpp"

using namespace cyclereg;

TEST_CASE("phantoms are deterministic") {
  PhantomSpec spec;
  spec.shape = GridShape(32, 32, 32);
  const Phantom a = gen_phantom(spec);
  const Phantom b = gen_phantom(spec);
  CHECK(std::equal(a.image.values().begin(), a.image.values().end(), b.image.values().begin()));
  CHECK(a.labels == b.labels);
  spec.seed = 2;
  const Phantom c = gen_phantom(spec);
  CHECK(!std::equal(a.image.values().begin(), a.image.values().end(), c.image.values().begin()));
}

TEST_CASE("single ellipsoid matches the lattice count") {
  PhantomSpec spec;
  spec.shape = GridShape(24, 20, 22);
  spec.noise_sigma = 0.0;
  spec.num_structures = 1;
  Ellipsoid e;
  e.center = {11.5, 9.5, 10.5};
  e.semi_axes = {7.3, 5.6, 6.1};
  spec.structures = {e};
  const Phantom p = gen_phantom(spec);
  std::size_t count = 0;
  for (auto id : p.labels.ids()) count += id == 1;
  CHECK(count == oracle::lattice_count(spec.shape, e.center, e.semi_axes));
  CHECK(p.labels.classes() == 2);
}

TEST_CASE("default phantom structures are nonempty and disjoint") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    PhantomSpec spec;
    spec.seed = seed;
    const Phantom p = gen_phantom(spec);
    REQUIRE(p.structures.size() == 4);
    CHECK(p.labels.classes() == 5);
    std::vector<std::size_t> counts(5, 0);
    for (auto id : p.labels.ids()) ++counts[id];
    std::size_t inner = 0;
    for (std::size_t k = 1; k < 5; ++k) {
      CHECK(counts[k] > 0);
      const Ellipsoid& e = p.structures[k - 1];
      const std::size_t full = oracle::lattice_count(spec.shape, e.center, e.semi_axes);
      if (k >= 2) {
        // Inner blobs are never overwritten by one another.
        CHECK(counts[k] == full);
        inner += full;
      } else {
        CHECK(counts[k] <= full);
      }
    }
    const Ellipsoid& outer = p.structures[0];
    CHECK(counts[1] + inner == oracle::lattice_count(spec.shape, outer.center, outer.semi_axes));
  }
}

TEST_CASE("structures that do not fit are rejected") {
  PhantomSpec spec;
  spec.shape = GridShape(16, 16, 16);
  spec.num_structures = 1;
  Ellipsoid e;
  e.center = {7.5, 7.5, 7.5};
  e.semi_axes = {7.0, 3.0, 3.0};
  spec.structures = {e};
  CHECK_THROWS_AS(gen_phantom(spec), ConfigError);
}

TEST_CASE("random number generator") {
  Xoshiro256 a(9), b(9), c(10);
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t x = a.next();
    CHECK(x == b.next());
    CHECK(x != c.next());
  }
  Xoshiro256 r(11);
  oracle::Streaming st;
  for (int i = 0; i < 200000; ++i) st.push(r.normal());
  CHECK(std::abs(st.mean) < 0.01);
  CHECK(std::abs(st.stddev() - 1.0) < 0.01);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("smooth deformation fields") {
  const GridShape s(64, 64, 64);
  SUBCASE("zero magnitude") {
    const DisplacementField f = gen_smooth_field(GridShape(8, 8, 8), DeformSpec{0.0, 6.0, 1});
    for (double x : f.values()) CHECK(x == 0.0);
  }
  SUBCASE("maximum norm and slope bound over ten seeds") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const DeformSpec d{3.0, 6.0, seed};
      const DisplacementField f = gen_smooth_field(s, d);
      double max_norm = 0, slope = 0;
      std::size_t pairs = 0;
      for (int z = 0; z < s.nz; ++z)
        for (int y = 0; y < s.ny; ++y)
          for (int x = 0; x < s.nx; ++x) {
            const Vec3 v = f.at(s.index(x, y, z));
            max_norm = std::max(max_norm, std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]));
            const int nb[3][3] = {{x + 1, y, z}, {x, y + 1, z}, {x, y, z + 1}};
            for (const auto& q : nb) {
              if (q[0] >= s.nx || q[1] >= s.ny || q[2] >= s.nz) continue;
              const Vec3 w = f.at(s.index(q[0], q[1], q[2]));
              slope += std::sqrt((w[0] - v[0]) * (w[0] - v[0]) + (w[1] - v[1]) * (w[1] - v[1]) +
                                 (w[2] - v[2]) * (w[2] - v[2]));
              ++pairs;
            }
          }
      CHECK(std::abs(max_norm - 3.0) < 1e-9);
      CHECK(slope / pairs < 3.0 / 6.0);
    }
  }
  SUBCASE("distinct seeds give distinct fields") {
    const DisplacementField a = gen_smooth_field(GridShape(16, 16, 16), DeformSpec{3, 3, 1});
    const DisplacementField b = gen_smooth_field(GridShape(16, 16, 16), DeformSpec{3, 3, 2});
    CHECK(!std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  }
}

TEST_CASE("registration pairs") {
  PhantomSpec spec;
  spec.shape = GridShape(32, 32, 32);
  const Phantom p = gen_phantom(spec);
  const GridShape& s = spec.shape;
  SUBCASE("zero field without noise") {
    const PhantomPair pair = make_pair(p.image, p.labels, DisplacementField(s));
    CHECK(std::equal(pair.target.values().begin(), pair.target.values().end(),
                     p.image.values().begin()));
    CHECK(pair.labels == p.labels);
  }
  SUBCASE("integer translation") {
    const PhantomPair pair =
        make_pair(p.image, p.labels, DisplacementField::constant(s, {-2, 1, 0}));
    for (int z = 0; z < s.nz; ++z)
      for (int y = 0; y < s.ny - 1; ++y)
        for (int x = 2; x < s.nx; ++x) CHECK(pair.labels.at(x, y, z) == p.labels.at(x - 2, y + 1, z));
  }
  SUBCASE("random field agrees with an independent interpolator") {
    const DisplacementField f = gen_smooth_field(s, DeformSpec{3.0, 4.0, 3});
    const PhantomPair pair = make_pair(p.image, p.labels, f, 0.02, 5);
    const ProbVolume hot = one_hot_encode(p.labels);
    std::vector<std::vector<double>> warped;
    for (int k = 0; k < hot.channels(); ++k) warped.push_back(oracle::warp(oracle::to_vec(hot.channel(k)), s, f));
    LabelVolume ref(s, p.labels.classes());
    for (std::size_t i = 0; i < s.voxels(); ++i) {
      int best = 0;
      for (int k = 1; k < hot.channels(); ++k)
        if (warped[k][i] > warped[best][i]) best = k;
      ref[i] = static_cast<std::uint16_t>(best);
    }
    for (double d : foreground_dice(pair.labels, ref)) CHECK(d >= 0.999);
    CHECK(pair.target.all_finite());
  }
}
