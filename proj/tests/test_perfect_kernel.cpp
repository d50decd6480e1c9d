#include <gtest/gtest.h>

#include "dytb/dytb.hpp"
#include "oracles.hpp"

using namespace dytb;

namespace {

DyadicCube cube1(int level, std::int64_t k) { return {level, {k, 0}}; }

PerfectKernel depth_one_example() {
  PerfectKernel t(GridSpec(1, 1));
  t.set(root_cube(), 0, 1, 1.0);
  t.set(root_cube(), 1, 0, -1.0);
  return t;
}

double l2(const GridFunction& f) { return lp_norm(f, 2.0); }

}  // namespace

TEST(Bilinear, ZeroKernelVanishes) {
  const GridSpec g(2, 3);
  Rng rng(1);
  const PerfectKernel t(g);
  EXPECT_EQ(bilinear(t, oracle::random_function(g, rng), oracle::random_function(g, rng)), 0.0);
  const GridFunction tf = apply(t, oracle::random_function(g, rng));
  for (double v : tf.values()) EXPECT_EQ(v, 0.0);
}

TEST(Bilinear, DepthOneRectangle) {
  const PerfectKernel t = depth_one_example();
  const GridSpec& g = t.spec();
  const GridFunction f = GridFunction::indicator(g, cube1(1, 1));
  const GridFunction gg = GridFunction::indicator(g, cube1(1, 0));
  EXPECT_DOUBLE_EQ(bilinear(t, f, gg), 0.25);
}

TEST(Apply, DepthOneOnConstant) {
  const PerfectKernel t = depth_one_example();
  GridFunction one(t.spec());
  for (double& v : one.values()) v = 1.0;
  const GridFunction tf = apply(t, one);
  EXPECT_DOUBLE_EQ(tf[0], 0.5);
  EXPECT_DOUBLE_EQ(tf[1], -0.5);
}

TEST(Apply, MatchesDenseOracle) {
  Rng rng(2);
  for (int dim = 1; dim <= 2; ++dim) {
    for (int depth = 1; depth <= (dim == 1 ? 5 : 3); ++depth) {
      const GridSpec g(dim, depth);
      const PerfectKernel t = generate_kernel(KernelKind::Random, g, rng.next(), 1.0);
      const auto m = oracle::dense_kernel(t);
      const GridFunction f = oracle::random_function(g, rng);
      const GridFunction gg = oracle::random_function(g, rng);
      const GridFunction ref = oracle::matvec(m, f);
      EXPECT_LE(oracle::max_abs_diff(apply(t, f), ref), 1e-10 * (1.0 + sup_norm(ref)));
      const double bref = oracle::quadratic_form(m, f, gg);
      EXPECT_NEAR(bilinear(t, f, gg), bref, 1e-10 * (1.0 + std::abs(bref)));
      EXPECT_NEAR(inner_product(apply(t, f), gg), bref, 1e-10 * (1.0 + std::abs(bref)));
    }
  }
}

TEST(Apply, GridMismatchIsDomainError) {
  const PerfectKernel t(GridSpec(1, 3));
  EXPECT_THROW(apply(t, GridFunction(GridSpec(1, 4))), std::domain_error);
  EXPECT_THROW(bilinear(t, GridFunction(GridSpec(1, 3)), GridFunction(GridSpec(2, 3))), std::domain_error);
}

TEST(Kernel, InvalidKeysRejected) {
  PerfectKernel t(GridSpec(1, 2));
  EXPECT_THROW(t.set(cube1(2, 0), 0, 1, 1.0), std::domain_error);
  EXPECT_THROW(t.set(root_cube(), 0, 0, 1.0), std::domain_error);
  EXPECT_THROW(t.set(root_cube(), 0, 2, 1.0), std::domain_error);
  t.set(root_cube(), 0, 1, 0.5);
  t.set(root_cube(), 0, 1, 0.0);
  EXPECT_TRUE(t.entries().empty());
}

TEST(Adjoint, Examples) {
  const PerfectKernel t = depth_one_example();
  const PerfectKernel a = adjoint(t);
  EXPECT_DOUBLE_EQ(a.get(root_cube(), 0, 1), -1.0);
  EXPECT_DOUBLE_EQ(a.get(root_cube(), 1, 0), 1.0);
  for (const auto& [key, v] : t.entries()) EXPECT_DOUBLE_EQ(a.get(key.cube, key.i, key.j), -v);

  PerfectKernel sym(GridSpec(1, 2));
  sym.set(root_cube(), 0, 1, 0.7);
  sym.set(root_cube(), 1, 0, 0.7);
  sym.set(cube1(1, 1), 0, 1, -0.2);
  sym.set(cube1(1, 1), 1, 0, -0.2);
  EXPECT_EQ(adjoint(sym).entries(), sym.entries());
}

TEST(Adjoint, IdentityOnRandomPairs) {
  Rng rng(3);
  for (int dim = 1; dim <= 2; ++dim) {
    const GridSpec g(dim, dim == 1 ? 6 : 3);
    const PerfectKernel t = generate_kernel(KernelKind::Random, g, rng.next(), 1.0);
    const PerfectKernel a = adjoint(t);
    for (int k = 0; k < 50; ++k) {
      const GridFunction f = oracle::random_function(g, rng);
      const GridFunction h = oracle::random_function(g, rng);
      EXPECT_LE(std::abs(bilinear(t, f, h) - bilinear(a, h, f)), 1e-12 * l2(f) * l2(h));
    }
    EXPECT_EQ(adjoint(a).entries(), t.entries());
  }
}

TEST(Generate, KindsAndDeterminism) {
  const GridSpec g(1, 4);
  EXPECT_TRUE(generate_kernel(KernelKind::Zero, g, 1, 1.0).entries().empty());
  const PerfectKernel h = generate_kernel(KernelKind::HaarShift, g, 1, 1.0);
  for (const auto& q : oracle::all_cubes(g)) {
    if (is_leaf(g, q)) continue;
    EXPECT_DOUBLE_EQ(h.get(q, 0, 1), 1.0 / side_length(q));
    EXPECT_DOUBLE_EQ(h.get(q, 1, 0), -1.0 / side_length(q));
    EXPECT_DOUBLE_EQ(h.size_bound(q, 0, 1), 1.0 / side_length(q));
  }
  EXPECT_TRUE(validate_size(h));
  const PerfectKernel r1 = generate_kernel(KernelKind::Random, g, 99, 0.5);
  const PerfectKernel r2 = generate_kernel(KernelKind::Random, g, 99, 0.5);
  EXPECT_EQ(r1.entries(), r2.entries());
  EXPECT_NE(generate_kernel(KernelKind::Random, g, 100, 0.5).entries(), r1.entries());
  const PerfectKernel sparse = generate_kernel(KernelKind::Random, g, 5, 1.0, 0.3);
  EXPECT_LT(sparse.entries().size(), generate_kernel(KernelKind::Random, g, 5, 1.0).entries().size());
  EXPECT_THROW(generate_kernel(KernelKind::Random, g, 1, 1.5), std::invalid_argument);
  EXPECT_THROW(generate_kernel(KernelKind::Random, g, 1, 1.0, -0.1), std::invalid_argument);
}

TEST(ValidateSize, Examples) {
  EXPECT_TRUE(validate_size(PerfectKernel(GridSpec(1, 3))));
  PerfectKernel t(GridSpec(1, 1));
  t.set(root_cube(), 0, 1, 1.5);
  EXPECT_FALSE(validate_size(t));
  t.set(root_cube(), 0, 1, 1.0);
  EXPECT_TRUE(validate_size(t));
}

TEST(ValidateSize, GeneratedKernelsAlwaysPass) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const int dim = 1 + static_cast<int>(seed % 2);
    const GridSpec g(dim, dim == 1 ? 5 : 3);
    const DistanceNorm norm = seed % 3 == 0 ? DistanceNorm::Max : DistanceNorm::Euclidean;
    const PerfectKernel t = generate_kernel(KernelKind::Random, g, seed, 1.0, 1.0, norm);
    EXPECT_TRUE(validate_size(t));
    EXPECT_TRUE(validate_size(generate_kernel(KernelKind::HaarShift, g, seed, 1.0, 1.0, norm)));
  }
}

TEST(SizeBound, BruteForceSupDistance) {
  // Corner enumeration of the two closed children gives the sup distance.
  for (auto norm : {DistanceNorm::Euclidean, DistanceNorm::Max}) {
    const GridSpec g(2, 3);
    const PerfectKernel t(g, norm);
    for (const auto& r : oracle::all_cubes(g)) {
      if (is_leaf(g, r)) continue;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          if (i == j) continue;
          const DyadicCube a = child(g, r, i);
          const DyadicCube b = child(g, r, j);
          const double s = side_length(a);
          double best = 0.0;
          for (int ca = 0; ca < 4; ++ca)
            for (int cb = 0; cb < 4; ++cb) {
              const double dx = (a.k[0] + (ca >> 1)) * s - (b.k[0] + (cb >> 1)) * s;
              const double dy = (a.k[1] + (ca & 1)) * s - (b.k[1] + (cb & 1)) * s;
              best = std::max(best, norm == DistanceNorm::Max ? std::max(std::abs(dx), std::abs(dy))
                                                              : std::hypot(dx, dy));
            }
          EXPECT_NEAR(t.sup_distance(r, i, j), best, 1e-14);
        }
    }
  }
}

TEST(Property, Perfectness) {
  Rng rng(4);
  for (int dim = 1; dim <= 2; ++dim) {
    const GridSpec g(dim, dim == 1 ? 6 : 3);
    const PerfectKernel t = generate_kernel(KernelKind::Random, g, rng.next(), 1.0);
    const auto cubes = oracle::all_cubes(g);
    int done = 0;
    while (done < 100) {
      const DyadicCube p = cubes[rng.below(cubes.size())];
      const DyadicCube q = cubes[rng.below(cubes.size())];
      if (!disjoint(p, q) || is_leaf(g, p)) continue;
      GridFunction f(g);
      for_each_cell(g, p, [&](std::size_t i) { f[i] = rng.uniform(-1.0, 1.0); });
      const double mean = f.average(p);
      for_each_cell(g, p, [&](std::size_t i) { f[i] -= mean; });
      GridFunction h(g);
      for_each_cell(g, q, [&](std::size_t i) { h[i] = rng.uniform(-1.0, 1.0); });
      EXPECT_LE(std::abs(bilinear(t, f, h)), 1e-12 * l2(f) * l2(h));
      EXPECT_LE(std::abs(bilinear(t, h, f)), 1e-12 * l2(f) * l2(h));
      ++done;
    }
  }
}

TEST(Property, Tiling) {
  // The constancy rectangles child_i(R) × child_j(R), i ≠ j, plus the diagonal
  // cells tile the unit square (or 4-cube) exactly once.
  for (int dim = 1; dim <= 2; ++dim) {
    for (int depth = 1; depth <= (dim == 1 ? 6 : 3); ++depth) {
      const GridSpec g(dim, depth);
      std::vector<int> cover(g.cells() * g.cells(), 0);
      double area = 0.0;
      for (const auto& r : oracle::all_cubes(g)) {
        if (is_leaf(g, r)) continue;
        for (int i = 0; i < g.children_per_cube(); ++i)
          for (int j = 0; j < g.children_per_cube(); ++j) {
            if (i == j) continue;
            const double v = volume(g, child(g, r, i));
            area += v * v;
            for_each_cell(g, child(g, r, i), [&](std::size_t x) {
              for_each_cell(g, child(g, r, j), [&](std::size_t y) { ++cover[x * g.cells() + y]; });
            });
          }
      }
      for (std::size_t x = 0; x < g.cells(); ++x)
        for (std::size_t y = 0; y < g.cells(); ++y) EXPECT_EQ(cover[x * g.cells() + y], x == y ? 0 : 1);
      EXPECT_NEAR(area, 1.0 - g.cells() * g.cell_volume() * g.cell_volume(), 1e-14);
    }
  }
}

TEST(Property, LinearityOfApply) {
  Rng rng(6);
  const GridSpec g(2, 3);
  const PerfectKernel t = generate_kernel(KernelKind::Random, g, 8, 1.0);
  const GridFunction f = oracle::random_function(g, rng);
  const GridFunction h = oracle::random_function(g, rng);
  const GridFunction lhs = apply(t, 2.0 * f + h);
  const GridFunction rhs = 2.0 * apply(t, f) + apply(t, h);
  EXPECT_LE(oracle::max_abs_diff(lhs, rhs), 1e-12);
}

TEST(KernelJson, RoundTrip) {
  const PerfectKernel t = generate_kernel(KernelKind::Random, GridSpec(2, 3), 17, 0.8, 0.5, DistanceNorm::Max);
  const PerfectKernel back = kernel_from_json(to_json(t));
  EXPECT_EQ(back.entries(), t.entries());
  EXPECT_EQ(back.distance_norm(), DistanceNorm::Max);
  nlohmann::json bad = to_json(t);
  bad["entries"][0]["coords"] = {1};
  EXPECT_THROW(kernel_from_json(bad), std::domain_error);
}
