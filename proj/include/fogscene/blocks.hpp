#pragma once

// Differentiable building blocks shared by every network in the project.
// All blocks take NCHW tensors; the batch dimension is arbitrary.

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "fogscene/errors.hpp"

namespace fogscene::blocks {

struct TensorShape {
  std::int64_t channels = 1;
  std::int64_t height = 1;
  std::int64_t width = 1;
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

/// Shape of one batch element of an NCHW tensor.
TensorShape shape_of(const torch::Tensor& t);

// Closed-form parameter counts. BatchNorm contributes 2·C affine parameters;
// running statistics are buffers and are not counted.
std::int64_t conv_params(std::int64_t in, std::int64_t out, std::int64_t kh,
                         std::int64_t kw, bool bias = true);
std::int64_t batchnorm_params(std::int64_t ch);
std::int64_t downsampler_params(std::int64_t in, std::int64_t out);
std::int64_t non_bottleneck_params(std::int64_t ch);
std::int64_t dense_block_params(std::int64_t in, std::int64_t modules,
                                std::int64_t growth);
std::int64_t transition_params(std::int64_t in, std::int64_t out);
std::int64_t upsampler_params(std::int64_t in, std::int64_t out,
                              bool with_refinement);
std::int64_t patch_discriminator_params(std::int64_t in, std::int64_t base,
                                        int scales);

/// Number of trainable scalars of a module.
std::int64_t count_parameters(const torch::nn::Module& m);

/// Channel concatenation of a 3×3 stride-2 convolution (out − in filters) and
/// a 2×2 max-pool of the input, followed by BatchNorm and ReLU.
class DownsamplerImpl : public torch::nn::Module {
 public:
  DownsamplerImpl(std::int64_t in_ch, std::int64_t out_ch);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
  torch::nn::MaxPool2d pool{nullptr};
  torch::nn::BatchNorm2d bn{nullptr};
};
TORCH_MODULE(Downsampler);

/// Residual block with 3×3 convolutions factorised into 3×1 and 1×3 pairs:
/// conv3×1, ReLU, conv1×3, BN, ReLU, conv3×1(dil), ReLU, conv1×3(dil), BN,
/// dropout, + input, ReLU.
class NonBottleneck1dImpl : public torch::nn::Module {
 public:
  NonBottleneck1dImpl(std::int64_t ch, std::int64_t dilation, double dropout);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv3x1_1{nullptr}, conv1x3_1{nullptr};
  torch::nn::Conv2d conv3x1_2{nullptr}, conv1x3_2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
  torch::nn::Dropout2d drop{nullptr};
  double dropout_p;
};
TORCH_MODULE(NonBottleneck1d);

/// One dense module: 3×3 conv to `growth` channels, BN, ReLU.
class DenseLayerImpl : public torch::nn::Module {
 public:
  DenseLayerImpl(std::int64_t in_ch, std::int64_t growth);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d bn{nullptr};
};
TORCH_MODULE(DenseLayer);

/// Module k sees the concatenation of the block input and the outputs of
/// modules 1..k−1; the block emits the full concatenation.
class DenseBlockImpl : public torch::nn::Module {
 public:
  DenseBlockImpl(std::int64_t in_ch, std::int64_t num_modules,
                 std::int64_t growth);
  torch::Tensor forward(const torch::Tensor& x);
  std::int64_t out_channels() const { return out_channels_; }
  std::vector<std::int64_t> module_input_channels() const;

  torch::nn::ModuleList layers;

 private:
  std::int64_t in_channels_, growth_, out_channels_;
};
TORCH_MODULE(DenseBlock);

/// 1×1 convolution, then (when `pool`) 2×2 average pooling with stride 2.
class TransitionImpl : public torch::nn::Module {
 public:
  TransitionImpl(std::int64_t in_ch, std::int64_t out_ch, bool pool = true);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
  bool pool;
};
TORCH_MODULE(Transition);

/// 3×3 stride-2 transposed convolution doubling H and W, BN and ReLU,
/// optionally refined by two non-bottleneck modules.
class UpsamplerStageImpl : public torch::nn::Module {
 public:
  UpsamplerStageImpl(std::int64_t in_ch, std::int64_t out_ch,
                     bool with_refinement);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::ConvTranspose2d deconv{nullptr};
  torch::nn::BatchNorm2d bn{nullptr};
  torch::nn::Sequential refine{nullptr};  // null without refinement
};
TORCH_MODULE(UpsamplerStage);

/// 3×3 stride-2 transposed convolution used as a prediction head (no BN or
/// activation).
torch::nn::ConvTranspose2d make_upsampling_head(std::int64_t in_ch,
                                                std::int64_t out_ch);

/// Elementwise sum of two equally shaped feature maps.
torch::Tensor fuse(const torch::Tensor& a, const torch::Tensor& b);

/// Stride-2 4×4 convolutions doubling the width per scale (capped at
/// 8·base), LeakyReLU(0.2), instance normalisation after all but the first,
/// and a final 3×3 convolution to one logit per patch.
class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  PatchDiscriminatorImpl(std::int64_t in_ch, std::int64_t base_width,
                         int num_scales);
  torch::Tensor forward(const torch::Tensor& x);
  std::vector<std::int64_t> scale_widths() const { return widths_; }

  torch::nn::ModuleList convs;
  torch::nn::ModuleList norms;
  torch::nn::Conv2d head{nullptr};

 private:
  std::int64_t in_channels_;
  int num_scales_;
  std::vector<std::int64_t> widths_;
};
TORCH_MODULE(PatchDiscriminator);

}  // namespace fogscene::blocks
