#include "support/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace fogscene::testing {

GradCheckResult gradcheck(const std::function<torch::Tensor()>& f,
                          const std::vector<NamedTensor>& wrt, double h, int max_coords,
                          std::uint64_t seed, double kink_tolerance) {
  for (const auto& w : wrt) {
    if (w.tensor.grad().defined()) w.tensor.mutable_grad().zero_();
  }
  f().backward();
  std::vector<torch::Tensor> analytic;
  for (const auto& w : wrt) {
    analytic.push_back(w.tensor.grad().defined() ? w.tensor.grad().clone()
                                                 : torch::zeros_like(w.tensor));
  }

  // Gradients far below the largest one are compared on its scale: their
  // finite differences are dominated by rounding in f.
  double scale = 0.0;
  for (const auto& a : analytic) scale = std::max(scale, a.abs().max().item<double>());
  const double kink_floor = std::max(1e-3 * scale, 1e-12);

  std::mt19937_64 rng(seed);
  std::vector<std::pair<std::vector<double>, std::vector<double>>> probes;
  GradCheckResult r;
  torch::NoGradGuard guard;
  for (std::size_t t = 0; t < wrt.size(); ++t) {
    auto flat = wrt[t].tensor.view(-1);
    const auto a = analytic[t].reshape(-1);
    std::vector<std::int64_t> idx(flat.numel());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min<std::size_t>(idx.size(), max_coords));
    std::vector<double> an, nu;
    auto central = [&](std::int64_t i, double orig, double step) {
      flat[i].fill_(orig + step);
      const double up = f().item<double>();
      flat[i].fill_(orig - step);
      const double down = f().item<double>();
      flat[i].fill_(orig);
      return (up - down) / (2.0 * step);
    };
    for (auto i : idx) {
      const double orig = flat[i].item<double>();
      const double full = central(i, orig, h);
      const double half = central(i, orig, h / 2);
      // Away from kinks the two estimates agree to O(h²); a ReLU or max-pool
      // switch inside the window makes them disagree at first order.
      if (std::abs(full - half) >
          kink_tolerance * std::max({std::abs(full), std::abs(half), kink_floor})) {
        ++r.skipped;
        continue;
      }
      nu.push_back(full);
      an.push_back(a[i].item<double>());
    }
    r.coordinates += static_cast<std::int64_t>(nu.size());
    probes.emplace_back(std::move(an), std::move(nu));
  }

  auto norm = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  double largest = 0.0;
  for (const auto& [an, nu] : probes) largest = std::max({largest, norm(an), norm(nu)});
  const double floor = std::max(1e-3 * largest, 1e-12);
  for (std::size_t t = 0; t < probes.size(); ++t) {
    const auto& [an, nu] = probes[t];
    std::vector<double> diff(an.size());
    for (std::size_t i = 0; i < an.size(); ++i) diff[i] = an[i] - nu[i];
    const double err = norm(diff) / std::max({norm(an), norm(nu), floor});
    if (err >= r.max_rel_error) {
      r.max_rel_error = err;
      r.worst = wrt[t].name;
    }
  }
  return r;
}

std::vector<NamedTensor> with_parameters(torch::nn::Module& m, std::vector<NamedTensor> extra) {
  for (auto& p : m.named_parameters(true)) extra.push_back({p.key(), p.value()});
  return extra;
}

torch::Tensor project(const torch::Tensor& out, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  const auto r = at::randn(out.sizes(), gen, out.options().requires_grad(false));
  return (out * r).sum();
}

}  // namespace fogscene::testing
