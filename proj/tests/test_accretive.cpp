#include <gtest/gtest.h>

#include "dytb/dytb.hpp"
#include "oracles.hpp"

using namespace dytb;

TEST(Accretive, ConstantSystem) {
  const GridSpec g(2, 3);
  const AccretiveSystem sys(g, AccretiveKind::Constant, 2.0, 1.5, 0);
  for (const auto& q : oracle::all_cubes(g)) {
    const GridFunction& b = sys.get_b(q);
    for (std::size_t i = 0; i < g.cells(); ++i) EXPECT_EQ(b[i], oracle::cell_in(g, i, q) ? 1.0 : 0.0);
    const AccretiveCheck c = validate(sys, q);
    EXPECT_TRUE(c.ok);
    EXPECT_NEAR(c.measured_A, 1.0, 1e-14);
  }
  EXPECT_DOUBLE_EQ(minimal_constant(AccretiveKind::Constant, 2.0, {}, g), 1.0);
}

TEST(Accretive, TwoValueClosedForm) {
  const GridSpec g(1, 6);
  for (double p : {1.5, 2.0, 3.0}) {
    const double s = 0.4;
    const AccretiveParams params{s};
    const double need = minimal_constant(AccretiveKind::TwoValue, p, params, g);
    const AccretiveSystem sys(g, AccretiveKind::TwoValue, p, need * 1.0001, 3, params);
    for (const auto& q : oracle::all_cubes(g)) {
      if (is_leaf(g, q)) continue;
      const GridFunction& b = sys.get_b(q);
      const double vol = volume(g, q);
      EXPECT_NEAR(oracle::integral(b, q), vol, 1e-14);
      EXPECT_NEAR(oracle::power_integral(b, p, q), 0.5 * vol * (std::pow(1 + s, p) + std::pow(1 - s, p)), 1e-13);
      int high = 0;
      for_each_cell(g, q, [&](std::size_t i) { high += b[i] == 1.0 + s; });
      EXPECT_EQ(static_cast<std::size_t>(high) * 2, g.cells() >> q.level);
    }
  }
}

TEST(Accretive, SignedSystemNeedsRootTwo) {
  const GridSpec g(1, 5);
  EXPECT_NEAR(minimal_constant(AccretiveKind::Signed, 2.0, {}, g), std::sqrt(2.0), 1e-15);
  EXPECT_THROW(AccretiveSystem(g, AccretiveKind::Signed, 2.0, 1.3, 0), std::invalid_argument);
  const AccretiveSystem sys(g, AccretiveKind::Signed, 2.0, std::sqrt(2.0), 4);
  for (const auto& q : oracle::all_cubes(g)) {
    const AccretiveCheck c = validate(sys, q);
    EXPECT_TRUE(c.ok);
    if (is_leaf(g, q)) continue;
    EXPECT_NEAR(c.measured_A, std::sqrt(2.0), 1e-14);
    const GridFunction& b = sys.get_b(q);
    int twos = 0, zeros = 0;
    for_each_cell(g, q, [&](std::size_t i) {
      twos += b[i] == 2.0;
      zeros += b[i] == 0.0;
    });
    EXPECT_EQ(twos, zeros);
  }
}

TEST(Accretive, RandomSystemMatchesBruteForceNorm) {
  Rng pick(5);
  for (int dim = 1; dim <= 2; ++dim) {
    const GridSpec g(dim, dim == 1 ? 6 : 3);
    const AccretiveSystem sys(g, AccretiveKind::Random, 3.0, 1.2, 77, AccretiveParams{0.9});
    const auto cubes = oracle::all_cubes(g);
    for (int n = 0; n < 100; ++n) {
      const DyadicCube q = cubes[pick.below(cubes.size())];
      const GridFunction& b = sys.get_b(q);
      const AccretiveCheck c = validate(sys, q);
      EXPECT_TRUE(c.ok);
      const double vol = volume(g, q);
      EXPECT_NEAR(c.measured_A, std::cbrt(oracle::power_integral(b, 3.0, q) / vol), 1e-12);
      EXPECT_LE(c.measured_A, 1.2 * (1 + 1e-12));
      EXPECT_NEAR(oracle::average(b, q), 1.0, 1e-12);
      for (std::size_t i = 0; i < g.cells(); ++i)
        if (!oracle::cell_in(g, i, q)) EXPECT_EQ(b[i], 0.0);
    }
  }
}

TEST(Accretive, Determinism) {
  const GridSpec g(2, 3);
  const AccretiveSystem a(g, AccretiveKind::Random, 2.0, 2.0, 9);
  const AccretiveSystem b(g, AccretiveKind::Random, 2.0, 2.0, 9);
  const AccretiveSystem c(g, AccretiveKind::Random, 2.0, 2.0, 10);
  // Different query order must not change the values.
  const auto cubes = oracle::all_cubes(g);
  for (auto it = cubes.rbegin(); it != cubes.rend(); ++it) (void)b.get_b(*it);
  bool any_diff = false;
  for (const auto& q : cubes) {
    for (std::size_t i = 0; i < g.cells(); ++i) {
      EXPECT_EQ(a.get_b(q)[i], b.get_b(q)[i]);
      any_diff = any_diff || a.get_b(q)[i] != c.get_b(q)[i];
    }
  }
  EXPECT_TRUE(any_diff);
}

TEST(Accretive, SingleCellIsOne) {
  const GridSpec g(1, 3);
  const AccretiveSystem sys(g, AccretiveKind::Signed, 2.0, 2.0, 1);
  const DyadicCube cell{3, {5, 0}};
  EXPECT_EQ(sys.get_b(cell)[5], 1.0);
}

TEST(Accretive, ParameterErrors) {
  const GridSpec g(1, 3);
  EXPECT_THROW(AccretiveSystem(g, AccretiveKind::Constant, 1.0, 2.0, 0), std::invalid_argument);
  EXPECT_THROW(AccretiveSystem(g, AccretiveKind::Constant, 2.0, 1.0, 0), std::invalid_argument);
  EXPECT_THROW(AccretiveSystem(g, AccretiveKind::TwoValue, 2.0, 2.0, 0, AccretiveParams{1.0}), std::invalid_argument);
  EXPECT_THROW(AccretiveSystem(g, AccretiveKind::TwoValue, 2.0, 1.01, 0, AccretiveParams{0.9}), std::invalid_argument);
  EXPECT_THROW(AccretiveSystem(g, AccretiveKind::Random, 2.0, 2.0, 0, AccretiveParams{1.0}), std::invalid_argument);
  const AccretiveSystem sys(g, AccretiveKind::Constant, 2.0, 2.0, 0);
  EXPECT_THROW(sys.get_b(DyadicCube{4, {0, 0}}), std::domain_error);
}

TEST(Accretive, CheckDetectsViolations) {
  const GridSpec g(1, 3);
  const DyadicCube q{1, {0, 0}};
  GridFunction b = GridFunction::indicator(g, q);
  EXPECT_TRUE(check_accretive(b, q, 2.0, 1.5).ok);
  b[7] = 0.1;
  EXPECT_FALSE(check_accretive(b, q, 2.0, 1.5).support_ok);
  b[7] = 0.0;
  b[0] = 1.5;
  EXPECT_FALSE(check_accretive(b, q, 2.0, 1.5).mean_ok);
  b[0] = 3.0;
  b[1] = -1.0;
  EXPECT_TRUE(check_accretive(b, q, 2.0, 1.5).mean_ok);
  EXPECT_FALSE(check_accretive(b, q, 2.0, 1.5).norm_ok);
}

TEST(Accretive, JsonRoundTrip) {
  const GridSpec g(1, 4);
  const AccretiveSystem sys(g, AccretiveKind::TwoValue, 3.0, 2.0, 123, AccretiveParams{0.25});
  const AccretiveSystem back = accretive_from_json(g, to_json(sys));
  EXPECT_EQ(back.kind(), sys.kind());
  EXPECT_EQ(back.seed(), sys.seed());
  for (std::size_t i = 0; i < g.cells(); ++i) EXPECT_EQ(back.get_b(root_cube())[i], sys.get_b(root_cube())[i]);
}
