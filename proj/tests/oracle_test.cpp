#include <gtest/gtest.h>

#include "parc2/oracle.hpp"
#include "parc2/suites.hpp"

namespace parc2 {
namespace {

using oracle::Kernel;
using oracle::Padding;

TEST(NaiveConv, OneDimensionalByHand) {
  // Row [1 2 3], kernel [1 0 -1], same padding: [0-2, 1-3, 2-0].
  const FeatureMap<double> x({1, 1, 1, 3}, std::vector<double>{1, 2, 3});
  const Kernel<double> k{1, 1, 3, {1, 0, -1}};
  EXPECT_EQ(oracle::naive_conv_same(x, k).storage(), (std::vector<double>{-2, -2, 2}));
}

TEST(NaiveConv, CircularWraps) {
  const FeatureMap<double> x({1, 1, 1, 3}, std::vector<double>{1, 2, 3});
  const Kernel<double> k{1, 1, 3, {1, 0, -1}};
  const auto y = oracle::naive_conv(x, k, Padding{0, 0, 1, 1}, oracle::PadMode::circular);
  EXPECT_EQ(y.storage(), (std::vector<double>{1, -2, 1}));
}

TEST(NaiveConv, ValidOutputShrinks) {
  const FeatureMap<double> x(1, 1, 4, 5, 1.0);
  const Kernel<double> k{1, 3, 3, std::vector<double>(9, 1.0)};
  const auto y = oracle::naive_conv(x, k, Padding{});
  EXPECT_EQ(y.shape(), (Shape4{1, 1, 2, 3}));
  for (double v : y.values())
    EXPECT_EQ(v, 9.0);
}

TEST(NaiveConv, ChannelMismatchThrows) {
  const FeatureMap<double> x(1, 2, 3, 3);
  EXPECT_THROW(oracle::naive_conv_same(x, Kernel<double>{1, 3, 3, std::vector<double>(9)}),
               DimensionError);
}

TEST(Roll, ShiftsCyclically) {
  const FeatureMap<double> x({1, 1, 1, 4}, std::vector<double>{1, 2, 3, 4});
  EXPECT_EQ(oracle::roll(x, 0, 1).storage(), (std::vector<double>{4, 1, 2, 3}));
  EXPECT_EQ(oracle::roll(x, 0, -1).storage(), (std::vector<double>{2, 3, 4, 1}));
}

TEST(CircularReference, ShiftEquivariant) {
  Rng rng(1);
  const auto x = random_normal<double>({1, 1, 5, 5}, rng, 1.0);
  Kernel<double> kh{1, 5, 1, std::vector<double>(5)}, kw{1, 1, 5, std::vector<double>(5)};
  fill_normal<double>(kh.taps, rng, 1.0);
  fill_normal<double>(kw.taps, rng, 1.0);
  const auto base = oracle::circular_conv_reference(x, kh, kw);
  const auto shifted = oracle::circular_conv_reference(oracle::roll(x, 2, 3), kh, kw);
  EXPECT_LE(oracle::check_equivalence(shifted, oracle::roll(base, 2, 3), 1e-12).max_abs_diff, 1e-12);
}

TEST(CircularReference, RejectsWrongLength) {
  const FeatureMap<double> x(1, 1, 4, 4);
  EXPECT_THROW(oracle::circular_conv_reference(x, Kernel<double>{1, 7, 1, std::vector<double>(7)},
                                               Kernel<double>{1, 1, 4, std::vector<double>(4)}),
               DimensionError);
}

TEST(FiniteDiff, QuadraticGradient) {
  FeatureMap<double> x({1, 1, 1, 3}, std::vector<double>{1, -2, 0.5});
  const auto g = oracle::finite_diff_grad(
      [](const FeatureMap<double> &v) {
        double s = 0;
        for (double e : v.values())
          s += e * e;
        return s;
      },
      x, 1e-5);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_NEAR(g.values()[i], 2 * x.values()[i], 1e-8);
}

TEST(FiniteDiff, StepOutsideRangeRejected) {
  const FeatureMap<double> x(1, 1, 1, 1);
  auto f = [](const FeatureMap<double> &) { return 0.0; };
  EXPECT_THROW(oracle::finite_diff_grad(f, x, 1e-7), std::invalid_argument);
  EXPECT_THROW(oracle::finite_diff_grad(f, x, 1e-3), std::invalid_argument);
}

TEST(FiniteDiff, NonFiniteValueThrows) {
  const FeatureMap<double> x(1, 1, 1, 1);
  auto f = [](const FeatureMap<double> &) { return std::numeric_limits<double>::quiet_NaN(); };
  EXPECT_THROW(oracle::finite_diff_grad(f, x, 1e-5), NumericError);
}

TEST(CheckEquivalence, ReportsArgmaxAndTolerance) {
  FeatureMap<double> a(1, 2, 3, 3), b(1, 2, 3, 3);
  b(0, 1, 2, 0) = 0.5;
  b(0, 0, 0, 0) = 0.1;
  const auto r = oracle::check_equivalence(a, b, 0.25);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.max_abs_diff, 0.5);
  EXPECT_EQ(r.argmax_location, (std::array<std::size_t, 4>{0, 1, 2, 0}));
  EXPECT_EQ(r.tolerance, 0.25);
}

TEST(CheckEquivalence, NanNeverPasses) {
  FeatureMap<double> a(1, 1, 1, 2), b(1, 1, 1, 2);
  b(0, 0, 0, 1) = std::numeric_limits<double>::quiet_NaN();
  const auto r = oracle::check_equivalence(a, b, 1.0);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.argmax_location[3], 1u);
}

TEST(CheckEquivalence, ShapeMismatchThrows) {
  EXPECT_THROW(oracle::check_equivalence(FeatureMap<double>(1, 1, 2, 2), FeatureMap<double>(1, 1, 2, 3), 0.0),
               DimensionError);
}

TEST(RelativeError, FloorsDenominator) {
  EXPECT_EQ(oracle::relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(oracle::relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(oracle::relative_error(1e-9, 0.0), 0.1);
}

TEST(ReceptiveField, IdentityOpIsDiagonal) {
  const Shape4 s{1, 1, 3, 3};
  const auto deps = oracle::receptive_field_probe<double>([](const FeatureMap<double> &g) { return g; }, s);
  for (std::size_t p = 0; p < 9; ++p)
    for (std::size_t q = 0; q < 9; ++q)
      EXPECT_EQ(deps[p][q], p == q);
}

suites::Options quick() {
  suites::Options o;
  o.cases = 12;
  o.grad_cases = 3;
  o.model_inputs = 2;
  return o;
}

TEST(Suites, OracleSuitePasses) {
  const auto r = suites::oracle_suite(quick());
  EXPECT_TRUE(r.pass) << suites::to_json(r).dump();
}

TEST(Suites, InjectedFaultIsCaughtAtLargestInput) {
  auto o = quick();
  o.inject_fault = true;
  const auto r = suites::oracle_suite(o);
  ASSERT_FALSE(r.pass);
  const auto &failures = r.details.at("failures");
  ASSERT_FALSE(failures.empty());
  const auto &f = failures.front();
  EXPECT_EQ(f.at("path").get<std::string>().rfind("dwconv7x7/", 0), 0u) << f.dump();

  // A centre-tap perturbation changes output (n, 0, i, j) by delta * x(n, 0, i, j),
  // so the worst position is the largest |x| in channel 0.
  const auto p = suites::make_problem<float>(o.seed, 0);
  std::array<std::size_t, 4> want{};
  float best = -1;
  for (std::size_t n = 0; n < p.x.batch(); ++n)
    for (std::size_t i = 0; i < p.x.height(); ++i)
      for (std::size_t j = 0; j < p.x.width(); ++j)
        if (std::abs(p.x(n, 0, i, j)) > best) {
          best = std::abs(p.x(n, 0, i, j));
          want = {n, 0, i, j};
        }
  EXPECT_EQ((f.at("argmax").get<std::array<std::size_t, 4>>()), want);
}

TEST(Suites, CommuteShiftRfPass) {
  const auto o = quick();
  for (const char *name : {"commute", "shift", "rf"}) {
    const auto r = suites::run_suite(name, o);
    EXPECT_TRUE(r.pass) << name << ": " << suites::to_json(r).dump();
  }
}

TEST(Suites, GradSuitePasses) {
  const auto r = suites::grad_suite(quick());
  EXPECT_TRUE(r.pass) << suites::to_json(r).dump();
  EXPECT_GT(r.cases, 0u);
}

TEST(Suites, ReparamKernelsPass) {
  const auto r = suites::reparam_suite(quick(), false);
  EXPECT_TRUE(r.pass) << suites::to_json(r).dump();
}

TEST(Suites, UnknownNameThrows) {
  EXPECT_THROW(suites::run_suite("nope", quick()), std::invalid_argument);
}

} // namespace
} // namespace parc2
