#include <gtest/gtest.h>

#include <cmath>

#include "fogscene/errors.hpp"
#include "fogscene/optim.hpp"

using namespace fogscene;

TEST(Adam, OneStepOnQuadraticByHand) {
  // f(x) = (x − 3)², x0 = 1, g = −4. First step: m = 0.5·(−4) = −2,
  // v = 0.001·16, bias corrections 0.5 and 0.001 → x1 = 1 + lr·(4/(4 + eps)).
  const AdamOptions opt;
  auto x = torch::tensor({1.0}, torch::kDouble).requires_grad_(true);
  Adam adam({x}, opt);
  (x - 3.0).pow(2).sum().backward();
  adam.step();
  const double expected = 1.0 + opt.lr * 4.0 / (4.0 + opt.eps);
  EXPECT_NEAR(x.item<double>(), expected, 1e-12);
  EXPECT_NEAR(adam.state().exp_avg[0].item<double>(), -2.0, 1e-12);
  EXPECT_NEAR(adam.state().exp_avg_sq[0].item<double>(), 0.016, 1e-12);
}

TEST(Adam, MatchesScalarReferenceOverManySteps) {
  AdamOptions opt;
  opt.lr = 0.05;
  auto x = torch::tensor({2.0, -1.0}, torch::kDouble).requires_grad_(true);
  Adam adam({x}, opt);
  std::array<double, 2> p{2.0, -1.0}, m{}, v{};
  for (int t = 1; t <= 50; ++t) {
    adam.zero_grad();
    (x.pow(4) - 2.0 * x).sum().backward();
    adam.step();
    for (int i = 0; i < 2; ++i) {
      const auto s = adam_scalar_step(p[i], 4 * std::pow(p[i], 3) - 2.0, m[i], v[i], t, opt);
      p[i] = s.param;
      m[i] = s.m;
      v[i] = s.v;
      ASSERT_NEAR(x[i].item<double>(), p[i], 1e-12) << "step " << t;
    }
  }
}

TEST(Adam, SkipsParametersWithoutGradient) {
  auto a = torch::tensor({1.0}, torch::kDouble).requires_grad_(true);
  auto b = torch::tensor({1.0}, torch::kDouble).requires_grad_(true);
  Adam adam({a, b}, {});
  (a * 2.0).sum().backward();
  adam.step();
  EXPECT_NE(a.item<double>(), 1.0);
  EXPECT_EQ(b.item<double>(), 1.0);
  EXPECT_EQ(adam.state().steps, (std::vector<std::int64_t>{1, 0}));
  adam.zero_grad();
  EXPECT_FALSE(a.grad().defined());
}

TEST(Adam, StateValidation) {
  auto a = torch::zeros({3});
  Adam adam({a}, {});
  auto s = adam.state();
  s.exp_avg[0] = torch::zeros({4});
  EXPECT_THROW(adam.load_state(s), FormatError);
  EXPECT_THROW(adam.load_state({}), FormatError);
  AdamOptions bad;
  bad.lr = 0.0;
  EXPECT_THROW(Adam({a}, bad), ConfigError);
  bad = {};
  bad.beta1 = 1.0;
  EXPECT_THROW(Adam({a}, bad), ConfigError);
}

TEST(LrSchedule, ConstantAndPoly) {
  EXPECT_EQ(scheduled_lr(1e-3, LrSchedule::kConstant, 7, 0, 10), 1e-3);
  EXPECT_EQ(scheduled_lr(1e-3, LrSchedule::kPoly, 0, 0, 10), 1e-3);
  EXPECT_NEAR(scheduled_lr(1e-3, LrSchedule::kPoly, 5, 0, 10), 1e-3 * std::pow(0.5, 0.9), 1e-18);
  EXPECT_NEAR(scheduled_lr(2e-3, LrSchedule::kPoly, 105, 100, 110), 2e-3 * std::pow(0.5, 0.9),
              1e-18);
  EXPECT_EQ(scheduled_lr(1e-3, LrSchedule::kPoly, 10, 0, 10), 0.0);
  EXPECT_EQ(scheduled_lr(1e-3, LrSchedule::kPoly, 3, 5, 5), 1e-3);
  double prev = 1.0;
  for (int it = 0; it < 100; ++it) {
    const double lr = scheduled_lr(1.0, LrSchedule::kPoly, it, 0, 100);
    ASSERT_LT(lr, prev + 1e-15);
    prev = lr;
  }
  EXPECT_EQ(parse_lr_schedule(to_string(LrSchedule::kPoly)), LrSchedule::kPoly);
  EXPECT_THROW(parse_lr_schedule("cosine"), ConfigError);
}
