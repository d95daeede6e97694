#include <gtest/gtest.h>

#include <cmath>

#include "fogscene/losses.hpp"
#include "fogscene/optim.hpp"
#include "support/gradcheck.hpp"

using namespace fogscene;
using namespace fogscene::losses;
using fogscene::testing::gradcheck;

namespace {

constexpr double kLossTolerance = 1e-4;

torch::Tensor dbl(std::initializer_list<double> v) {
  return torch::tensor(std::vector<double>(v), torch::kDouble);
}

torch::Tensor logits(double value, std::int64_t n = 16) {
  return torch::full({1, 1, 1, n}, value, torch::kDouble);
}

torch::Tensor randn(at::IntArrayRef shape, std::uint64_t seed) {
  torch::manual_seed(seed);
  return torch::randn(shape, torch::kDouble).requires_grad_(true);
}

void expect_gradcheck(const std::function<torch::Tensor()>& f,
                      const std::vector<fogscene::testing::NamedTensor>& wrt) {
  const auto r = gradcheck(f, wrt, 1e-5, 32);
  EXPECT_LT(r.max_rel_error, kLossTolerance) << r.worst;
  EXPECT_LE(2 * r.skipped, r.coordinates);
}

}  // namespace

TEST(Adversarial, Examples) {
  const auto half = logits(0.0);
  EXPECT_NEAR(adversarial_loss(half, half, AdversarialRole::kDiscriminator).item<double>(),
              2.0 * std::log(2.0), 1e-12);
  EXPECT_NEAR(adversarial_loss({}, logits(60.0), AdversarialRole::kGenerator).item<double>(),
              0.0, 1e-12);
  EXPECT_NEAR(
      adversarial_loss(logits(60.0), logits(-60.0), AdversarialRole::kDiscriminator).item<double>(),
      0.0, 1e-12);
}

TEST(Adversarial, SaturatingFormIsLiteralObjective) {
  const auto z = dbl({-1.0, 0.3, 2.0}).view({1, 1, 1, 3});
  const double expected = torch::log(1.0 - torch::sigmoid(z)).mean().item<double>();
  EXPECT_NEAR(
      adversarial_loss({}, z, AdversarialRole::kGenerator, GanForm::kSaturating).item<double>(),
      expected, 1e-12);
  EXPECT_NEAR(adversarial_loss({}, z, AdversarialRole::kGenerator).item<double>(),
              -torch::log(torch::sigmoid(z)).mean().item<double>(), 1e-12);
}

TEST(Adversarial, PerfectDiscriminationIsInfimum) {
  // Over a grid of random logit maps nothing beats σ(real)=1, σ(fake)=0.
  const double best = adversarial_loss(logits(50.0), logits(-50.0),
                                       AdversarialRole::kDiscriminator)
                          .item<double>();
  torch::manual_seed(3);
  for (int i = 0; i < 200; ++i) {
    const auto real = torch::randn({1, 1, 4, 4}, torch::kDouble) * 10.0;
    const auto fake = torch::randn({1, 1, 4, 4}, torch::kDouble) * 10.0;
    ASSERT_GE(adversarial_loss(real, fake, AdversarialRole::kDiscriminator).item<double>(),
              best);
  }
}

TEST(Adversarial, EmptyMapsAreContractErrors) {
  EXPECT_THROW(adversarial_loss(logits(0.0), torch::empty({0}, torch::kDouble),
                                AdversarialRole::kDiscriminator),
               ContractError);
  EXPECT_THROW(adversarial_loss({}, logits(0.0), AdversarialRole::kDiscriminator), ContractError);
}

TEST(Cycle, Examples) {
  const auto x = torch::rand({1, 3, 4, 4}, torch::kDouble);
  const auto y = torch::rand({1, 3, 4, 4}, torch::kDouble);
  EXPECT_EQ(cycle_consistency_loss(x, x, y, y).item<double>(), 0.0);
  EXPECT_NEAR(cycle_consistency_loss(x, x + 0.1, y, y).item<double>(), 0.1, 1e-12);
  const auto xc = x + 0.03 * torch::randn_like(x), yc = y - 0.2;
  EXPECT_DOUBLE_EQ(cycle_consistency_loss(x, xc, y, yc).item<double>(),
                   cycle_consistency_loss(y, yc, x, xc).item<double>());
  EXPECT_THROW(cycle_consistency_loss(x, x.slice(3, 0, 2), y, y), ContractError);
}

TEST(DomainAdapt, Examples) {
  EXPECT_EQ(domain_adaptation_loss(0.0, 0.0, 0.0), 0.0);
  EXPECT_EQ(domain_adaptation_loss(1.0, 1.0, 1.0, 10.0), 12.0);
  EXPECT_EQ(domain_adaptation_loss(1.0, 1.0, 1.0), 12.0);
  // Linear in each argument.
  EXPECT_DOUBLE_EQ(domain_adaptation_loss(3.0, 0.0, 0.0) + domain_adaptation_loss(0.0, 2.0, 0.5),
                   domain_adaptation_loss(3.0, 2.0, 0.5));
}

TEST(Joint, Examples) {
  EXPECT_EQ(joint_seg_loss(0.0, 0.0), 0.0);
  EXPECT_NEAR(joint_seg_loss(2.9444, 0.6931), 3.6375, 1e-12);
  EXPECT_EQ(joint_seg_loss(0.3, 1.1), joint_seg_loss(1.1, 0.3));
  EXPECT_NEAR(joint_depth_loss(0.05, 0.6931), 0.7431, 1e-12);
  EXPECT_LT(joint_depth_loss(0.05, 0.1), joint_depth_loss(0.06, 0.1));
  EXPECT_LT(joint_depth_loss(0.05, 0.1), joint_depth_loss(0.05, 0.2));
}

TEST(Segmentation, Examples) {
  const auto uniform = torch::zeros({2, 19, 3, 3}, torch::kDouble);
  const auto labels = torch::randint(0, 19, {2, 3, 3}, torch::kLong);
  EXPECT_NEAR(segmentation_loss(uniform, labels).item<double>(), std::log(19.0), 1e-12);

  const auto onehot =
      torch::one_hot(labels, 19).permute({0, 3, 1, 2}).to(torch::kDouble) * 50.0;
  EXPECT_LT(segmentation_loss(onehot, labels).item<double>(), 1e-9);

  const auto ignored = torch::full({2, 3, 3}, 255, torch::kLong);
  const auto z = torch::randn({2, 19, 3, 3}, torch::kDouble).requires_grad_(true);
  const auto zero = segmentation_loss(z, ignored);
  EXPECT_EQ(zero.item<double>(), 0.0);
  zero.backward();
  EXPECT_TRUE(z.grad().defined());
}

TEST(Segmentation, MatchesBruteForceLogSoftmax) {
  torch::manual_seed(5);
  for (int trial = 0; trial < 10; ++trial) {
    const int k = 2 + trial;
    const auto z = torch::randn({1, k, 4, 4}, torch::kDouble) * 3.0;
    auto labels = torch::randint(0, k, {1, 4, 4}, torch::kLong);
    labels[0][trial % 4][1] = 255;
    double sum = 0.0;
    int n = 0;
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) {
        const auto l = labels[0][y][x].item<std::int64_t>();
        if (l == 255) continue;
        double denom = 0.0;
        for (int c = 0; c < k; ++c) denom += std::exp(z[0][c][y][x].item<double>());
        sum += -(z[0][l][y][x].item<double>() - std::log(denom));
        ++n;
      }
    }
    EXPECT_NEAR(segmentation_loss(z, labels).item<double>(), sum / n, 1e-10);
  }
}

TEST(Segmentation, LabelOutOfRange) {
  const auto z = torch::zeros({1, 3, 2, 2}, torch::kDouble);
  auto labels = torch::zeros({1, 2, 2}, torch::kLong);
  labels[0][0][0] = 3;
  EXPECT_THROW(segmentation_loss(z, labels), ContractError);
  EXPECT_THROW(segmentation_loss(z, torch::zeros({1, 3, 2}, torch::kLong)), ContractError);
}

TEST(Depth, Examples) {
  const auto gt = torch::rand({1, 1, 8, 8}, torch::kDouble) * 0.8 + 0.1;
  const auto [half, mask] = half_scale_target(gt, torch::ones_like(gt));
  EXPECT_EQ(depth_loss(gt, half, gt).item<double>(), 0.0);
  EXPECT_NEAR(depth_loss(gt + 0.05, half, gt).item<double>(), 0.05, 1e-12);
  const auto pred = gt + 0.1 * torch::randn_like(gt);
  const auto ph = half + 0.1 * torch::randn_like(half);
  EXPECT_NEAR(depth_loss(pred, ph, gt).item<double>(),
              depth_loss(pred.flip(3), ph.flip(3), gt.flip(3)).item<double>(), 1e-14);
  EXPECT_THROW(depth_loss(gt, half, gt.slice(3, 0, 4)), ContractError);
  EXPECT_THROW(depth_loss(gt, gt, gt), ContractError);
}

TEST(Depth, HalfScaleTargetAveragesValidPixels) {
  auto gt = torch::zeros({1, 1, 2, 2}, torch::kDouble);
  gt[0][0][0][0] = 0.2;
  gt[0][0][0][1] = 0.4;
  auto valid = torch::zeros_like(gt);
  valid[0][0][0][0] = 1;
  valid[0][0][0][1] = 1;
  const auto [code, mask] = half_scale_target(gt, valid);
  EXPECT_NEAR(code.item<double>(), 0.3, 1e-12);
  EXPECT_EQ(mask.item<double>(), 1.0);
  const auto [none, none_mask] = half_scale_target(gt, torch::zeros_like(gt));
  EXPECT_EQ(none.item<double>(), 0.0);
  EXPECT_EQ(none_mask.item<double>(), 0.0);
}

TEST(Depth, InvalidPixelsDoNotCount) {
  const auto gt = torch::full({1, 1, 4, 4}, 0.5, torch::kDouble);
  auto pred = gt.clone();
  pred[0][0][0][0] = 0.9;
  auto valid = torch::ones_like(gt);
  valid[0][0][0][0] = 0;
  const auto [half, m] = half_scale_target(gt, valid);
  EXPECT_EQ(depth_loss(pred, half, gt, valid).item<double>(), 0.0);
}

TEST(Uncertainty, Examples) {
  UncertaintyWeights w;
  const auto a = dbl({0.7}).squeeze(), b = dbl({1.3}).squeeze(), c = dbl({0.2}).squeeze();
  EXPECT_NEAR(combined_loss(a, b, c, w).item<double>(), 2.2, 1e-6);
  EXPECT_NEAR(combined_loss({}, b, {}, w).item<double>(), 1.3, 1e-6);
  EXPECT_THROW(combined_loss({}, {}, {}, w), ContractError);
}

TEST(Uncertainty, DerivativeLaw) {
  for (double s0 : {-1.0, 0.0, 0.4}) {
    for (double l : {0.3, 1.0, 2.5}) {
      const auto s = dbl({s0}).squeeze().requires_grad_(true);
      uncertainty_term(dbl({l}).squeeze(), s).backward();
      const double analytic = 1.0 - std::exp(-s0) * l;
      EXPECT_NEAR(s.grad().item<double>(), analytic, 1e-12);
      const double h = 1e-5;
      const double fd = ((std::exp(-(s0 + h)) * l + s0 + h) - (std::exp(-(s0 - h)) * l + s0 - h)) /
                        (2 * h);
      EXPECT_NEAR(fd, analytic, 1e-6);
    }
  }
  const auto s = dbl({0.0}).squeeze().requires_grad_(true);
  uncertainty_term(dbl({1.0}).squeeze(), s).backward();
  EXPECT_EQ(s.grad().item<double>(), 0.0);
}

TEST(Uncertainty, MinimumAtLogLoss) {
  for (double l : {0.2, 1.0, 4.0}) {
    const double at_min = std::log(l) + 1.0;
    EXPECT_NEAR(uncertainty_term(dbl({l}).squeeze(), dbl({std::log(l)}).squeeze()).item<double>(),
                at_min, 1e-12);
    for (double s = -5.0; s <= 5.0; s += 0.01) {
      ASSERT_GE(std::exp(-s) * l + s, at_min - 1e-12);
    }
  }
}

TEST(Uncertainty, AdamFindsLogLoss) {
  // Adam moves s by at most about lr per step, so the targets are chosen
  // within reach of 2000 steps at the default lr of 1e-3.
  UncertaintyWeights w;
  const double la = 0.5, ls = 1.5, ld = 2.0;
  Adam opt({w->log_vars}, {});
  for (int i = 0; i < 2000; ++i) {
    opt.zero_grad();
    combined_loss(torch::tensor(la), torch::tensor(ls), torch::tensor(ld), w).backward();
    opt.step();
  }
  EXPECT_NEAR(w->value(UncertaintyWeightsImpl::kDomainAdapt), std::log(la), 1e-2);
  EXPECT_NEAR(w->value(UncertaintyWeightsImpl::kSeg), std::log(ls), 1e-2);
  EXPECT_NEAR(w->value(UncertaintyWeightsImpl::kDepth), std::log(ld), 1e-2);
}

TEST(Uncertainty, UndefinedTasksLeaveWeightsAlone) {
  UncertaintyWeights w;
  combined_loss({}, torch::tensor(2.0), {}, w).backward();
  const auto g = w->log_vars.grad();
  EXPECT_EQ(g[0].item<float>(), 0.0f);
  EXPECT_NE(g[1].item<float>(), 0.0f);
  EXPECT_EQ(g[2].item<float>(), 0.0f);
}

// Finite-difference checks, double precision.

TEST(LossGradients, Adversarial) {
  const auto real = randn({2, 1, 3, 3}, 1), fake = randn({2, 1, 3, 3}, 2);
  expect_gradcheck([&] { return adversarial_loss(real, fake, AdversarialRole::kDiscriminator); },
                   {{"real", real}, {"fake", fake}});
  expect_gradcheck([&] { return adversarial_loss({}, fake, AdversarialRole::kGenerator); },
                   {{"fake", fake}});
  expect_gradcheck(
      [&] { return adversarial_loss({}, fake, AdversarialRole::kGenerator, GanForm::kSaturating); },
      {{"fake", fake}});
}

TEST(LossGradients, Cycle) {
  const auto x = randn({1, 3, 4, 4}, 3), xc = randn({1, 3, 4, 4}, 4);
  const auto y = randn({1, 3, 4, 4}, 5), yc = randn({1, 3, 4, 4}, 6);
  expect_gradcheck([&] { return cycle_consistency_loss(x, xc, y, yc); },
                   {{"x", x}, {"x_cycled", xc}, {"y", y}, {"y_cycled", yc}});
}

TEST(LossGradients, Segmentation) {
  const auto z = randn({2, 5, 4, 4}, 7);
  auto labels = torch::randint(0, 5, {2, 4, 4}, torch::kLong);
  labels[0][0][0] = 255;
  expect_gradcheck([&] { return segmentation_loss(z, labels); }, {{"logits", z}});
}

TEST(LossGradients, Depth) {
  torch::manual_seed(8);
  const auto pf = torch::rand({1, 1, 8, 8}, torch::kDouble).requires_grad_(true);
  const auto ph = torch::rand({1, 1, 4, 4}, torch::kDouble).requires_grad_(true);
  const auto gt = torch::rand({1, 1, 8, 8}, torch::kDouble);
  auto valid = torch::ones_like(gt);
  valid[0][0][2][3] = 0;
  expect_gradcheck([&] { return depth_loss(pf, ph, gt, valid); }, {{"full", pf}, {"half", ph}});
}

TEST(LossGradients, Combined) {
  const auto s = randn({3}, 9);
  const auto l = (torch::rand({3}, torch::kDouble) + 0.1).requires_grad_(true);
  UncertaintyWeights w;
  expect_gradcheck(
      [&] { return uncertainty_term(l[0], s[0]) + uncertainty_term(l[1], s[1]) + uncertainty_term(l[2], s[2]); },
      {{"s", s}, {"losses", l}});
  {
    torch::NoGradGuard ng;
    w->log_vars.copy_(torch::tensor({0.3, -0.2, 0.7}));
  }
  w->to(torch::kDouble);
  expect_gradcheck([&] { return combined_loss(l[0], l[1], l[2], w); },
                   {{"log_vars", w->log_vars}, {"losses", l}});
}
