#include "fogscene/optim.hpp"

#include <algorithm>
#include <cmath>

#include "fogscene/errors.hpp"

namespace fogscene {

std::string to_string(LrSchedule s) { return s == LrSchedule::kPoly ? "poly" : "constant"; }

LrSchedule parse_lr_schedule(const std::string& s) {
  if (s == "constant") return LrSchedule::kConstant;
  if (s == "poly") return LrSchedule::kPoly;
  throw ConfigError("unknown lr_schedule '" + s + "'");
}

double scheduled_lr(double base, LrSchedule s, std::int64_t it, std::int64_t begin,
                    std::int64_t end) {
  if (s == LrSchedule::kConstant || end <= begin) return base;
  const double t = static_cast<double>(it - begin) / static_cast<double>(end - begin);
  return base * std::pow(1.0 - std::clamp(t, 0.0, 1.0), 0.9);
}

AdamScalarStep adam_scalar_step(double param, double grad, double m, double v,
                                std::int64_t step, const AdamOptions& opt) {
  m = opt.beta1 * m + (1.0 - opt.beta1) * grad;
  v = opt.beta2 * v + (1.0 - opt.beta2) * grad * grad;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
  const double denom = std::sqrt(v) / std::sqrt(bc2) + opt.eps;
  return {param - opt.lr / bc1 * m / denom, m, v};
}

Adam::Adam(std::vector<torch::Tensor> params, AdamOptions opt)
    : params_(std::move(params)), opt_(opt) {
  if (!(opt.lr > 0.0)) throw ConfigError("learning rate must be > 0");
  if (opt.beta1 < 0.0 || opt.beta1 >= 1.0 || opt.beta2 < 0.0 || opt.beta2 >= 1.0) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  for (const auto& p : params_) {
    state_.exp_avg.push_back(torch::zeros_like(p));
    state_.exp_avg_sq.push_back(torch::zeros_like(p));
    state_.steps.push_back(0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    if (p.grad().defined()) p.mutable_grad() = torch::Tensor();
  }
}

void Adam::step() {
  torch::NoGradGuard guard;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.grad().defined()) continue;
    const auto& g = p.grad();
    auto& m = state_.exp_avg[i];
    auto& v = state_.exp_avg_sq[i];
    const auto t = ++state_.steps[i];
    m.mul_(opt_.beta1).add_(g, 1.0 - opt_.beta1);
    v.mul_(opt_.beta2).addcmul_(g, g, 1.0 - opt_.beta2);
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t));
    const auto denom = (v.sqrt() / std::sqrt(bc2)).add_(opt_.eps);
    p.addcdiv_(m, denom, -opt_.lr / bc1);
  }
}

void Adam::load_state(State s) {
  const auto n = params_.size();
  if (s.exp_avg.size() != n || s.exp_avg_sq.size() != n || s.steps.size() != n) {
    throw FormatError("optimizer state holds " + std::to_string(s.exp_avg.size()) +
                      " tensors, model has " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (s.exp_avg[i].sizes() != params_[i].sizes() ||
        s.exp_avg_sq[i].sizes() != params_[i].sizes()) {
      throw FormatError("optimizer state shape mismatch at parameter " +
                        std::to_string(i));
    }
  }
  state_ = std::move(s);
}

}  // namespace fogscene
