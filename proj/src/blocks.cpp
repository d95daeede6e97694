#include "fogscene/blocks.hpp"

#include <algorithm>
#include <string>

namespace fogscene::blocks {

namespace nn = torch::nn;

TensorShape shape_of(const torch::Tensor& t) {
  if (t.dim() != 4) throw ContractError("expected an NCHW tensor");
  return {t.size(1), t.size(2), t.size(3)};
}

std::int64_t conv_params(std::int64_t in, std::int64_t out, std::int64_t kh,
                         std::int64_t kw, bool bias) {
  return in * out * kh * kw + (bias ? out : 0);
}

std::int64_t batchnorm_params(std::int64_t ch) { return 2 * ch; }

std::int64_t downsampler_params(std::int64_t in, std::int64_t out) {
  return conv_params(in, out - in, 3, 3) + batchnorm_params(out);
}

std::int64_t non_bottleneck_params(std::int64_t ch) {
  return 2 * conv_params(ch, ch, 3, 1) + 2 * conv_params(ch, ch, 1, 3) +
         2 * batchnorm_params(ch);
}

std::int64_t dense_block_params(std::int64_t in, std::int64_t modules,
                                std::int64_t growth) {
  std::int64_t total = 0;
  for (std::int64_t k = 0; k < modules; ++k) {
    total += conv_params(in + k * growth, growth, 3, 3) + batchnorm_params(growth);
  }
  return total;
}

std::int64_t transition_params(std::int64_t in, std::int64_t out) {
  return conv_params(in, out, 1, 1);
}

std::int64_t upsampler_params(std::int64_t in, std::int64_t out,
                              bool with_refinement) {
  return conv_params(in, out, 3, 3) + batchnorm_params(out) +
         (with_refinement ? 2 * non_bottleneck_params(out) : 0);
}

std::int64_t patch_discriminator_params(std::int64_t in, std::int64_t base,
                                        int scales) {
  std::int64_t total = 0, prev = in, width = base;
  for (int s = 0; s < scales; ++s) {
    total += conv_params(prev, width, 4, 4);
    prev = width;
    width = std::min(width * 2, 8 * base);
  }
  return total + conv_params(prev, 1, 3, 3);
}

std::int64_t count_parameters(const nn::Module& m) {
  std::int64_t n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

// ---------------------------------------------------------------------------

DownsamplerImpl::DownsamplerImpl(std::int64_t in_ch, std::int64_t out_ch) {
  if (out_ch <= in_ch) {
    throw ConfigError("downsampler needs out_ch > in_ch (got " +
                      std::to_string(in_ch) + " -> " + std::to_string(out_ch) +
                      ")");
  }
  conv = register_module(
      "conv", nn::Conv2d(nn::Conv2dOptions(in_ch, out_ch - in_ch, 3)
                             .stride(2)
                             .padding(1)));
  pool = register_module("pool", nn::MaxPool2d(nn::MaxPool2dOptions(2).stride(2)));
  bn = register_module("bn", nn::BatchNorm2d(nn::BatchNorm2dOptions(out_ch).eps(1e-3)));
}

torch::Tensor DownsamplerImpl::forward(const torch::Tensor& x) {
  if (x.size(2) % 2 != 0 || x.size(3) % 2 != 0) {
    throw ContractError("downsampler input must have even H and W");
  }
  return torch::relu(bn(torch::cat({conv(x), pool(x)}, 1)));
}

NonBottleneck1dImpl::NonBottleneck1dImpl(std::int64_t ch, std::int64_t dilation,
                                         double dropout)
    : dropout_p(dropout) {
  if (ch < 1 || dilation < 1) {
    throw ConfigError("non-bottleneck needs ch >= 1 and dilation >= 1");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError("dropout must lie in [0, 1)");
  }
  const std::int64_t d = dilation;
  conv3x1_1 = register_module(
      "conv3x1_1", nn::Conv2d(nn::Conv2dOptions(ch, ch, {3, 1}).padding({1, 0})));
  conv1x3_1 = register_module(
      "conv1x3_1", nn::Conv2d(nn::Conv2dOptions(ch, ch, {1, 3}).padding({0, 1})));
  bn1 = register_module("bn1", nn::BatchNorm2d(nn::BatchNorm2dOptions(ch).eps(1e-3)));
  conv3x1_2 = register_module(
      "conv3x1_2",
      nn::Conv2d(nn::Conv2dOptions(ch, ch, {3, 1}).padding({d, 0}).dilation({d, 1})));
  conv1x3_2 = register_module(
      "conv1x3_2",
      nn::Conv2d(nn::Conv2dOptions(ch, ch, {1, 3}).padding({0, d}).dilation({1, d})));
  bn2 = register_module("bn2", nn::BatchNorm2d(nn::BatchNorm2dOptions(ch).eps(1e-3)));
  drop = register_module("drop", nn::Dropout2d(nn::Dropout2dOptions(dropout)));
}

torch::Tensor NonBottleneck1dImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(conv3x1_1(x));
  y = torch::relu(bn1(conv1x3_1(y)));
  y = torch::relu(conv3x1_2(y));
  y = bn2(conv1x3_2(y));
  if (dropout_p > 0.0) y = drop(y);
  return torch::relu(y + x);
}

DenseLayerImpl::DenseLayerImpl(std::int64_t in_ch, std::int64_t growth) {
  conv = register_module("conv",
                         nn::Conv2d(nn::Conv2dOptions(in_ch, growth, 3).padding(1)));
  bn = register_module("bn", nn::BatchNorm2d(growth));
}

torch::Tensor DenseLayerImpl::forward(const torch::Tensor& x) {
  return torch::relu(bn(conv(x)));
}

DenseBlockImpl::DenseBlockImpl(std::int64_t in_ch, std::int64_t num_modules,
                               std::int64_t growth)
    : in_channels_(in_ch), growth_(growth),
      out_channels_(in_ch + num_modules * growth) {
  if (num_modules < 1 || growth < 1) {
    throw ConfigError("dense block needs at least one module and growth >= 1");
  }
  layers = register_module("layers", nn::ModuleList());
  for (std::int64_t k = 0; k < num_modules; ++k) {
    layers->push_back(DenseLayer(in_ch + k * growth, growth));
  }
}

std::vector<std::int64_t> DenseBlockImpl::module_input_channels() const {
  std::vector<std::int64_t> out;
  for (std::size_t k = 0; k < layers->size(); ++k) {
    out.push_back(in_channels_ + static_cast<std::int64_t>(k) * growth_);
  }
  return out;
}

torch::Tensor DenseBlockImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> features{x};
  for (const auto& layer : *layers) {
    auto input = features.size() == 1 ? x : torch::cat(features, 1);
    features.push_back(layer->as<DenseLayer>()->forward(input));
  }
  return torch::cat(features, 1);
}

TransitionImpl::TransitionImpl(std::int64_t in_ch, std::int64_t out_ch, bool pool)
    : pool(pool) {
  conv = register_module("conv", nn::Conv2d(nn::Conv2dOptions(in_ch, out_ch, 1)));
}

torch::Tensor TransitionImpl::forward(const torch::Tensor& x) {
  auto y = conv(x);
  if (!pool) return y;
  if (y.size(2) % 2 != 0 || y.size(3) % 2 != 0) {
    throw ContractError("transition input must have even H and W");
  }
  return torch::avg_pool2d(y, 2, 2);
}

torch::nn::ConvTranspose2d make_upsampling_head(std::int64_t in_ch,
                                                std::int64_t out_ch) {
  return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in_ch, out_ch, 3)
                                 .stride(2)
                                 .padding(1)
                                 .output_padding(1));
}

UpsamplerStageImpl::UpsamplerStageImpl(std::int64_t in_ch, std::int64_t out_ch,
                                       bool with_refinement) {
  deconv = register_module("deconv", make_upsampling_head(in_ch, out_ch));
  bn = register_module("bn", nn::BatchNorm2d(nn::BatchNorm2dOptions(out_ch).eps(1e-3)));
  if (with_refinement) {
    refine = register_module(
        "refine", nn::Sequential(NonBottleneck1d(out_ch, 1, 0.0),
                                 NonBottleneck1d(out_ch, 1, 0.0)));
  }
}

torch::Tensor UpsamplerStageImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(bn(deconv(x)));
  return refine ? refine->forward(y) : y;
}

torch::Tensor fuse(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) {
    throw ContractError("fuse: shape mismatch");
  }
  return a + b;
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(std::int64_t in_ch,
                                               std::int64_t base_width,
                                               int num_scales)
    : in_channels_(in_ch), num_scales_(num_scales) {
  if (num_scales < 1 || base_width < 1) {
    throw ConfigError("discriminator needs num_scales >= 1 and base_width >= 1");
  }
  convs = register_module("convs", nn::ModuleList());
  norms = register_module("norms", nn::ModuleList());
  std::int64_t prev = in_ch, width = base_width;
  for (int s = 0; s < num_scales; ++s) {
    widths_.push_back(width);
    convs->push_back(
        nn::Conv2d(nn::Conv2dOptions(prev, width, 4).stride(2).padding(1)));
    if (s > 0) norms->push_back(nn::InstanceNorm2d(width));
    prev = width;
    width = std::min(width * 2, 8 * base_width);
  }
  head = register_module("head", nn::Conv2d(nn::Conv2dOptions(prev, 1, 3).padding(1)));
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& x) {
  const std::int64_t div = std::int64_t{1} << num_scales_;
  if (x.dim() != 4 || x.size(1) != in_channels_ || x.size(2) % div != 0 ||
      x.size(3) % div != 0) {
    throw ContractError("discriminator input must be N×" +
                        std::to_string(in_channels_) + "×H×W with H, W divisible by " +
                        std::to_string(div));
  }
  auto y = x;
  for (int s = 0; s < num_scales_; ++s) {
    y = convs[s]->as<nn::Conv2d>()->forward(y);
    if (s > 0) y = norms[s - 1]->as<nn::InstanceNorm2d>()->forward(y);
    y = torch::leaky_relu(y, 0.2);
  }
  return head(y);
}

}  // namespace fogscene::blocks
