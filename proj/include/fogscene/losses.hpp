#pragma once

// Scalar training objectives. Every function returns a 0-dim tensor that keeps
// the autograd graph of its inputs.

#include <torch/torch.h>

#include <map>
#include <string>

#include "fogscene/errors.hpp"

namespace fogscene::losses {

enum class AdversarialRole { kDiscriminator, kGenerator };

/// kNonSaturating: the generator minimises −log σ(D(fake)).
/// kSaturating: the generator minimises log(1 − σ(D(fake))), the literal
/// min-max objective.
enum class GanForm { kNonSaturating, kSaturating };

std::string to_string(GanForm f);
GanForm parse_gan_form(const std::string& s);

/// Discriminator role: BCE with targets 1 for `real_logits` and 0 for
/// `fake_logits`, i.e. −mean log σ(real) − mean log(1 − σ(fake)).
/// Generator role: ignores `real_logits` (may be undefined).
torch::Tensor adversarial_loss(const torch::Tensor& real_logits,
                               const torch::Tensor& fake_logits,
                               AdversarialRole role,
                               GanForm form = GanForm::kNonSaturating);

/// mean|x_cycled − x| + mean|y_cycled − y|.
torch::Tensor cycle_consistency_loss(const torch::Tensor& x,
                                     const torch::Tensor& x_cycled,
                                     const torch::Tensor& y,
                                     const torch::Tensor& y_cycled);

inline constexpr double kDefaultLambdaCycle = 10.0;

template <typename T>
T domain_adaptation_loss(const T& adv_xy, const T& adv_yx, const T& cyc,
                         double lambda_cyc = kDefaultLambdaCycle) {
  return adv_xy + adv_yx + lambda_cyc * cyc;
}

/// Mean per-pixel cross-entropy over pixels whose label is not `ignore`.
/// Returns 0 (still attached to `logits`) when every pixel is ignored.
/// `logits` N×K×H×W, `labels` N×H×W integer.
torch::Tensor segmentation_loss(const torch::Tensor& logits,
                                const torch::Tensor& labels,
                                std::int64_t ignore = 255);

/// Average pooling of a full-resolution depth code to half resolution, over
/// valid pixels only. Returns (code, valid mask).
std::pair<torch::Tensor, torch::Tensor> half_scale_target(
    const torch::Tensor& gt_full, const torch::Tensor& valid_full);

/// L1 at full scale plus L1 at half scale against the average-pooled target,
/// both over valid pixels. `valid` (N×1×H×W, 0/1) defaults to all ones.
torch::Tensor depth_loss(const torch::Tensor& pred_full,
                         const torch::Tensor& pred_half,
                         const torch::Tensor& gt_full,
                         const torch::Tensor& valid = {});

template <typename T>
T joint_seg_loss(const T& seg_ce, const T& seg_adv) {
  return seg_ce + seg_adv;
}

template <typename T>
T joint_depth_loss(const T& depth_l1, const T& depth_adv) {
  return depth_l1 + depth_adv;
}

/// Learnable log-variances s_da, s_seg, s_depth, initialised to 0.
class UncertaintyWeightsImpl : public torch::nn::Module {
 public:
  enum Task : std::int64_t { kDomainAdapt = 0, kSeg = 1, kDepth = 2 };
  UncertaintyWeightsImpl();
  torch::Tensor s(Task t) const { return log_vars[t]; }
  double value(Task t) const { return log_vars[t].item<double>(); }

  torch::Tensor log_vars;
};
TORCH_MODULE(UncertaintyWeights);

/// exp(−s)·L + s.
torch::Tensor uncertainty_term(const torch::Tensor& loss, const torch::Tensor& s);

/// Σ exp(−s_i)·L_i + s_i over the three tasks. Undefined task losses are left
/// out, so a stage that trains a subset of the tasks only optimises their
/// weights.
torch::Tensor combined_loss(const torch::Tensor& da, const torch::Tensor& joint_seg,
                            const torch::Tensor& joint_depth,
                            const UncertaintyWeights& w);

/// Named scalar loss components of one iteration.
using LossBreakdown = std::map<std::string, double>;

}  // namespace fogscene::losses
