#pragma once

// Networks assembled from `blocks`: the RGB and luminance/depth encoders, the
// segmentation and depth decoders, the multi-task network and the image
// translation generators used for fog→clear domain adaptation.

#include <torch/torch.h>

#include <array>
#include <memory>
#include <optional>

#include "fogscene/blocks.hpp"
#include "fogscene/fogdata.hpp"

namespace fogscene::models {

enum class LdMode { kLumOnly, kLumAndDepth };
/// Which decoders are built. The stage-II depth estimator only needs the
/// depth decoder.
enum class Heads { kSegAndDepth, kDepthOnly };

std::string to_string(LdMode m);
LdMode parse_ld_mode(const std::string& s);
std::string to_string(Heads h);
Heads parse_heads(const std::string& s);

struct SegDepthConfig {
  int num_classes = 19;
  std::array<std::int64_t, 3> stage_widths{16, 64, 128};
  int rgb_stage2_modules = 5;
  int rgb_stage3_modules = 8;
  std::array<int, 3> ld_dense_modules{4, 3, 4};
  std::array<std::int64_t, 3> dense_growth{12, 22, 32};
  Resolution input_resolution{128, 256};
  LdMode ld_mode = LdMode::kLumAndDepth;
  double dropout = 0.1;
  Heads heads = Heads::kSegAndDepth;

  /// Throws ConfigError on non-increasing widths, resolutions not divisible by
  /// 8 or class counts outside [2, 254].
  void validate() const;
  int ld_in_channels() const { return ld_mode == LdMode::kLumOnly ? 1 : 2; }
  friend bool operator==(const SegDepthConfig&, const SegDepthConfig&) = default;
};

/// Dilation rates of the third RGB stage: 2, 4, 8, 16 repeated.
std::vector<std::int64_t> rgb_stage3_dilations(int modules);

struct NetworkOutput {
  torch::Tensor seg_logits;  // N×K×H×W; undefined for depth-only networks
  torch::Tensor depth_full;  // N×1×H×W, sigmoid
  torch::Tensor depth_half;  // N×1×H/2×W/2, sigmoid
};

struct StageOutputs {
  torch::Tensor s1, s2, s3;  // H/2, H/4, H/8
};

/// Three downsampler stages; stage 2 ends with `rgb_stage2_modules`
/// non-bottleneck modules, stage 3 with `rgb_stage3_modules` dilated ones.
class RgbEncoderImpl : public torch::nn::Module {
 public:
  explicit RgbEncoderImpl(const SegDepthConfig& cfg);
  StageOutputs forward(const torch::Tensor& rgb);
  int non_bottleneck_count() const;

  blocks::Downsampler down1{nullptr}, down2{nullptr}, down3{nullptr};
  torch::nn::Sequential stage2{nullptr}, stage3{nullptr};
};
TORCH_MODULE(RgbEncoder);

/// Downsampler followed by dense block / transition stages whose outputs match
/// the RGB encoder's stage shapes. The last transition keeps the resolution.
class LdEncoderImpl : public torch::nn::Module {
 public:
  LdEncoderImpl(const SegDepthConfig& cfg, std::int64_t in_channels);
  StageOutputs forward(const torch::Tensor& x);

  torch::Tensor stage1(const torch::Tensor& x);
  torch::Tensor stage2(const torch::Tensor& s1);
  torch::Tensor stage3(const torch::Tensor& s2);

  blocks::Downsampler down{nullptr};
  blocks::DenseBlock dense1{nullptr}, dense2{nullptr}, dense3{nullptr};
  blocks::Transition trans1{nullptr}, trans2{nullptr}, trans3{nullptr};
};
TORCH_MODULE(LdEncoder);

/// Two refined upsampling stages with skip sums, then a transposed
/// convolution to class logits.
class SegDecoderImpl : public torch::nn::Module {
 public:
  explicit SegDecoderImpl(const SegDepthConfig& cfg);
  torch::Tensor forward(const StageOutputs& fused);

  blocks::UpsamplerStage up1{nullptr}, up2{nullptr};
  torch::nn::ConvTranspose2d head{nullptr};
};
TORCH_MODULE(SegDecoder);

/// Same upsampling path with sigmoid depth heads at full and half resolution.
class DepthDecoderImpl : public torch::nn::Module {
 public:
  explicit DepthDecoderImpl(const SegDepthConfig& cfg);
  std::pair<torch::Tensor, torch::Tensor> forward(const StageOutputs& fused);

  blocks::UpsamplerStage up1{nullptr}, up2{nullptr};
  torch::nn::ConvTranspose2d head_full{nullptr}, head_half{nullptr};
};
TORCH_MODULE(DepthDecoder);

/// The multi-task network. The two encoders are fused by summation after
/// every stage; each fused map feeds the next RGB stage and the decoder stage
/// of matching resolution; the last fused map feeds both decoders.
class SegDepthNetImpl : public torch::nn::Module {
 public:
  explicit SegDepthNetImpl(SegDepthConfig cfg);

  /// `rgb` N×3×H×W in [0,1], `lum` N×1×H×W, `depth_in` N×1×H×W (normalised
  /// depth) iff the config is LUM_AND_DEPTH. H, W must be divisible by 8.
  NetworkOutput forward(const torch::Tensor& rgb, const torch::Tensor& lum,
                        const std::optional<torch::Tensor>& depth_in = {});

  StageOutputs fused_stages(const torch::Tensor& rgb, const torch::Tensor& ld);

  const SegDepthConfig& config() const { return cfg_; }

  /// Trainable scalars of the encoders plus the segmentation decoder.
  std::int64_t segmentation_path_parameters() const;

  RgbEncoder rgb_encoder{nullptr};
  LdEncoder ld_encoder{nullptr};
  SegDecoder seg_decoder{nullptr};  // null for depth-only networks
  DepthDecoder depth_decoder{nullptr};

 private:
  SegDepthConfig cfg_;
};
TORCH_MODULE(SegDepthNet);

// Closed-form parameter counts derived from the block formulas.
std::int64_t expected_rgb_encoder_parameters(const SegDepthConfig& cfg);
std::int64_t expected_ld_encoder_parameters(const SegDepthConfig& cfg,
                                            std::int64_t in_channels);
std::int64_t expected_seg_decoder_parameters(const SegDepthConfig& cfg);
std::int64_t expected_depth_decoder_parameters(const SegDepthConfig& cfg);
std::int64_t expected_segdepth_parameters(const SegDepthConfig& cfg);

/// Sigmoid depth code ↔ meters: d = d_min + s·(d_max − d_min).
torch::Tensor depth_to_code(const torch::Tensor& meters);
torch::Tensor code_to_depth(const torch::Tensor& code);

// ---------------------------------------------------------------------------
// Domain adaptation

/// Image→image network on N×3×H×W tensors in [0,1].
class ImageGenerator : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(const torch::Tensor& image) = 0;
};

/// ResNet translation generator: 7×7 conv, two stride-2 convs, residual
/// blocks, two transposed convs and a 7×7 output conv whose tanh is added to
/// the input (clamped to [0,1]). The output conv starts at zero, so a fresh
/// generator is the identity.
class TranslationGenerator : public ImageGenerator {
 public:
  TranslationGenerator(std::int64_t width, int num_residual);
  torch::Tensor forward(const torch::Tensor& image) override;
  std::int64_t width() const { return width_; }
  int num_residual() const { return num_residual_; }

 private:
  std::int64_t width_;
  int num_residual_;
  torch::nn::Sequential body_{nullptr};
};

std::int64_t expected_generator_parameters(std::int64_t width, int num_residual);

struct TranslationConfig {
  std::int64_t generator_width = 32;
  int generator_residual = 6;
  std::int64_t disc_base_width = 64;
  int disc_scales = 3;
  friend bool operator==(const TranslationConfig&, const TranslationConfig&) = default;
};

/// G_{X→Y} (foggy→clear), G_{Y→X} (clear→foggy) and the discriminators D_X
/// (foggy images) and D_Y (clear images).
struct TranslationPair {
  std::shared_ptr<ImageGenerator> gen_xy;
  std::shared_ptr<ImageGenerator> gen_yx;
  blocks::PatchDiscriminator disc_x{nullptr};
  blocks::PatchDiscriminator disc_y{nullptr};

  static TranslationPair build(const TranslationConfig& cfg);
  std::int64_t parameter_count() const;
  /// Every module under a stable name prefix (for checkpoints).
  std::vector<std::pair<std::string, std::shared_ptr<torch::nn::Module>>>
  named_modules() const;
};

/// Applies a generator without recording gradients. Throws ContractError for
/// non-3-channel input or H, W not divisible by 4.
torch::Tensor translate(ImageGenerator& gen, const torch::Tensor& image);

/// BT.601 luminance of an N×3×H×W tensor.
torch::Tensor luminance(const torch::Tensor& rgb);

}  // namespace fogscene::models
