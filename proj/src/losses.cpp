#include "fogscene/losses.hpp"

namespace fogscene::losses {

namespace F = torch::nn::functional;

std::string to_string(GanForm f) {
  return f == GanForm::kNonSaturating ? "non_saturating" : "saturating";
}

GanForm parse_gan_form(const std::string& s) {
  if (s == "non_saturating") return GanForm::kNonSaturating;
  if (s == "saturating") return GanForm::kSaturating;
  throw ConfigError("unknown gan_form '" + s + "'");
}

torch::Tensor adversarial_loss(const torch::Tensor& real_logits,
                               const torch::Tensor& fake_logits,
                               AdversarialRole role, GanForm form) {
  if (!fake_logits.defined() || fake_logits.numel() == 0) {
    throw ContractError("adversarial_loss: empty fake logit map");
  }
  // −log σ(z) = softplus(−z), −log(1 − σ(z)) = softplus(z).
  if (role == AdversarialRole::kGenerator) {
    return form == GanForm::kNonSaturating ? F::softplus(-fake_logits).mean()
                                           : -F::softplus(fake_logits).mean();
  }
  if (!real_logits.defined() || real_logits.numel() == 0) {
    throw ContractError("adversarial_loss: empty real logit map");
  }
  return F::softplus(-real_logits).mean() + F::softplus(fake_logits).mean();
}

torch::Tensor cycle_consistency_loss(const torch::Tensor& x,
                                     const torch::Tensor& x_cycled,
                                     const torch::Tensor& y,
                                     const torch::Tensor& y_cycled) {
  if (x.sizes() != x_cycled.sizes() || y.sizes() != y_cycled.sizes()) {
    throw ContractError("cycle_consistency_loss: shape mismatch");
  }
  return (x_cycled - x).abs().mean() + (y_cycled - y).abs().mean();
}

torch::Tensor segmentation_loss(const torch::Tensor& logits,
                                const torch::Tensor& labels, std::int64_t ignore) {
  if (logits.dim() != 4 || labels.dim() != 3 || logits.size(0) != labels.size(0) ||
      logits.size(2) != labels.size(1) || logits.size(3) != labels.size(2)) {
    throw ContractError("segmentation_loss: logits N×K×H×W vs labels N×H×W");
  }
  const auto target = labels.to(torch::kLong);
  const auto valid = target != ignore;
  const std::int64_t n_valid = valid.sum().item<std::int64_t>();
  if (n_valid > 0) {
    const auto used = target.masked_select(valid);
    if (used.min().item<std::int64_t>() < 0 ||
        used.max().item<std::int64_t>() >= logits.size(1)) {
      throw ContractError("segmentation_loss: label outside [0, K)");
    }
  }
  if (n_valid == 0) return (logits * 0.0).sum();
  return F::cross_entropy(logits, target,
                          F::CrossEntropyFuncOptions().ignore_index(ignore));
}

std::pair<torch::Tensor, torch::Tensor> half_scale_target(
    const torch::Tensor& gt_full, const torch::Tensor& valid_full) {
  const auto valid_frac = F::avg_pool2d(valid_full, F::AvgPool2dFuncOptions(2));
  const auto summed = F::avg_pool2d(gt_full * valid_full, F::AvgPool2dFuncOptions(2));
  const auto valid_half = (valid_frac > 0).to(gt_full.dtype());
  const auto code = summed / valid_frac.clamp_min(1e-12) * valid_half;
  return {code, valid_half};
}

namespace {
torch::Tensor masked_l1(const torch::Tensor& pred, const torch::Tensor& gt,
                        const torch::Tensor& valid) {
  const auto n = valid.sum();
  return ((pred - gt).abs() * valid).sum() / n.clamp_min(1.0);
}
}  // namespace

torch::Tensor depth_loss(const torch::Tensor& pred_full, const torch::Tensor& pred_half,
                         const torch::Tensor& gt_full, const torch::Tensor& valid) {
  if (pred_full.sizes() != gt_full.sizes()) {
    throw ContractError("depth_loss: full-scale prediction and target differ in shape");
  }
  const auto mask = valid.defined() ? valid.to(gt_full.dtype())
                                    : torch::ones_like(gt_full);
  if (mask.sizes() != gt_full.sizes()) {
    throw ContractError("depth_loss: validity mask shape mismatch");
  }
  auto [gt_half, mask_half] = half_scale_target(gt_full, mask);
  if (pred_half.sizes() != gt_half.sizes()) {
    throw ContractError("depth_loss: half-scale prediction has the wrong shape");
  }
  return masked_l1(pred_full, gt_full, mask) + masked_l1(pred_half, gt_half, mask_half);
}

UncertaintyWeightsImpl::UncertaintyWeightsImpl() {
  log_vars = register_parameter("log_vars", torch::zeros({3}));
}

torch::Tensor uncertainty_term(const torch::Tensor& loss, const torch::Tensor& s) {
  return torch::exp(-s) * loss + s;
}

torch::Tensor combined_loss(const torch::Tensor& da, const torch::Tensor& joint_seg,
                            const torch::Tensor& joint_depth,
                            const UncertaintyWeights& w) {
  torch::Tensor total;
  auto add = [&](const torch::Tensor& l, UncertaintyWeightsImpl::Task t) {
    if (!l.defined()) return;
    auto term = uncertainty_term(l, w->s(t).to(l.dtype()));
    total = total.defined() ? total + term : term;
  };
  add(da, UncertaintyWeightsImpl::kDomainAdapt);
  add(joint_seg, UncertaintyWeightsImpl::kSeg);
  add(joint_depth, UncertaintyWeightsImpl::kDepth);
  if (!total.defined()) throw ContractError("combined_loss: no task loss given");
  return total;
}

}  // namespace fogscene::losses
