#include "fogscene/models.hpp"

#include <string>

namespace fogscene::models {

namespace nn = torch::nn;
using blocks::conv_params;

std::string to_string(LdMode m) {
  return m == LdMode::kLumOnly ? "lum_only" : "lum_and_depth";
}

std::string to_string(Heads h) {
  return h == Heads::kSegAndDepth ? "seg_and_depth" : "depth_only";
}

Heads parse_heads(const std::string& s) {
  if (s == "seg_and_depth") return Heads::kSegAndDepth;
  if (s == "depth_only") return Heads::kDepthOnly;
  throw ConfigError("unknown heads '" + s + "'");
}

LdMode parse_ld_mode(const std::string& s) {
  if (s == "lum_only") return LdMode::kLumOnly;
  if (s == "lum_and_depth") return LdMode::kLumAndDepth;
  throw ConfigError("unknown ld_mode '" + s + "'");
}

void SegDepthConfig::validate() const {
  if (num_classes < 2 || num_classes > 254) {
    throw ConfigError("num_classes must be in [2, 254]");
  }
  if (!(0 < stage_widths[0] && stage_widths[0] < stage_widths[1] &&
        stage_widths[1] < stage_widths[2])) {
    throw ConfigError("stage widths must be positive and strictly increasing");
  }
  if (input_resolution.height <= 0 || input_resolution.width <= 0 ||
      input_resolution.height % 8 != 0 || input_resolution.width % 8 != 0) {
    throw ConfigError("input resolution must be divisible by 8");
  }
  if (rgb_stage2_modules < 0 || rgb_stage3_modules < 0) {
    throw ConfigError("module counts must be non-negative");
  }
  for (int i = 0; i < 3; ++i) {
    if (ld_dense_modules[i] < 1 || dense_growth[i] < 1) {
      throw ConfigError("dense blocks need >= 1 module and growth >= 1");
    }
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
}

std::vector<std::int64_t> rgb_stage3_dilations(int modules) {
  static constexpr std::int64_t kCycle[] = {2, 4, 8, 16};
  std::vector<std::int64_t> out;
  for (int i = 0; i < modules; ++i) out.push_back(kCycle[i % 4]);
  return out;
}

RgbEncoderImpl::RgbEncoderImpl(const SegDepthConfig& cfg) {
  const auto& w = cfg.stage_widths;
  down1 = register_module("down1", blocks::Downsampler(3, w[0]));
  down2 = register_module("down2", blocks::Downsampler(w[0], w[1]));
  stage2 = register_module("stage2", nn::Sequential());
  for (int i = 0; i < cfg.rgb_stage2_modules; ++i) {
    stage2->push_back(blocks::NonBottleneck1d(w[1], 1, cfg.dropout));
  }
  down3 = register_module("down3", blocks::Downsampler(w[1], w[2]));
  stage3 = register_module("stage3", nn::Sequential());
  for (std::int64_t d : rgb_stage3_dilations(cfg.rgb_stage3_modules)) {
    stage3->push_back(blocks::NonBottleneck1d(w[2], d, cfg.dropout));
  }
}

namespace {
torch::Tensor run(nn::Sequential& seq, torch::Tensor x) {
  return seq->size() == 0 ? x : seq->forward(x);
}
}  // namespace

StageOutputs RgbEncoderImpl::forward(const torch::Tensor& rgb) {
  StageOutputs o;
  o.s1 = down1(rgb);
  o.s2 = run(stage2, down2(o.s1));
  o.s3 = run(stage3, down3(o.s2));
  return o;
}

int RgbEncoderImpl::non_bottleneck_count() const {
  return static_cast<int>(stage2->size() + stage3->size());
}

LdEncoderImpl::LdEncoderImpl(const SegDepthConfig& cfg, std::int64_t in_channels) {
  if (in_channels != 1 && in_channels != 2) {
    throw ConfigError("luminance/depth encoder takes 1 or 2 channels");
  }
  const auto& w = cfg.stage_widths;
  const auto& m = cfg.ld_dense_modules;
  const auto& g = cfg.dense_growth;
  down = register_module("down", blocks::Downsampler(in_channels, w[0]));
  dense1 = register_module("dense1", blocks::DenseBlock(w[0], m[0], g[0]));
  trans1 = register_module("trans1", blocks::Transition(dense1->out_channels(), w[1]));
  dense2 = register_module("dense2", blocks::DenseBlock(w[1], m[1], g[1]));
  trans2 = register_module("trans2", blocks::Transition(dense2->out_channels(), w[2]));
  dense3 = register_module("dense3", blocks::DenseBlock(w[2], m[2], g[2]));
  trans3 = register_module(
      "trans3", blocks::Transition(dense3->out_channels(), w[2], /*pool=*/false));
}

torch::Tensor LdEncoderImpl::stage1(const torch::Tensor& x) { return down(x); }
torch::Tensor LdEncoderImpl::stage2(const torch::Tensor& s1) {
  return trans1(dense1(s1));
}
torch::Tensor LdEncoderImpl::stage3(const torch::Tensor& s2) {
  return trans3(dense3(trans2(dense2(s2))));
}

StageOutputs LdEncoderImpl::forward(const torch::Tensor& x) {
  StageOutputs o;
  o.s1 = stage1(x);
  o.s2 = stage2(o.s1);
  o.s3 = stage3(o.s2);
  return o;
}

SegDecoderImpl::SegDecoderImpl(const SegDepthConfig& cfg) {
  const auto& w = cfg.stage_widths;
  up1 = register_module("up1", blocks::UpsamplerStage(w[2], w[1], true));
  up2 = register_module("up2", blocks::UpsamplerStage(w[1], w[0], true));
  head = register_module("head", blocks::make_upsampling_head(w[0], cfg.num_classes));
}

torch::Tensor SegDecoderImpl::forward(const StageOutputs& f) {
  auto x = blocks::fuse(up1(f.s3), f.s2);
  x = blocks::fuse(up2(x), f.s1);
  return head(x);
}

DepthDecoderImpl::DepthDecoderImpl(const SegDepthConfig& cfg) {
  const auto& w = cfg.stage_widths;
  up1 = register_module("up1", blocks::UpsamplerStage(w[2], w[1], true));
  up2 = register_module("up2", blocks::UpsamplerStage(w[1], w[0], true));
  head_full = register_module("head_full", blocks::make_upsampling_head(w[0], 1));
  head_half = register_module("head_half", blocks::make_upsampling_head(w[1], 1));
}

std::pair<torch::Tensor, torch::Tensor> DepthDecoderImpl::forward(
    const StageOutputs& f) {
  auto x = blocks::fuse(up1(f.s3), f.s2);
  auto half = torch::sigmoid(head_half(x));
  x = blocks::fuse(up2(x), f.s1);
  return {torch::sigmoid(head_full(x)), half};
}

SegDepthNetImpl::SegDepthNetImpl(SegDepthConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  rgb_encoder = register_module("rgb_encoder", RgbEncoder(cfg_));
  ld_encoder = register_module("ld_encoder", LdEncoder(cfg_, cfg_.ld_in_channels()));
  if (cfg_.heads == Heads::kSegAndDepth) {
    seg_decoder = register_module("seg_decoder", SegDecoder(cfg_));
  }
  depth_decoder = register_module("depth_decoder", DepthDecoder(cfg_));
}

StageOutputs SegDepthNetImpl::fused_stages(const torch::Tensor& rgb,
                                           const torch::Tensor& ld) {
  auto& r = *rgb_encoder;
  StageOutputs f;
  const auto l1 = ld_encoder->stage1(ld);
  f.s1 = blocks::fuse(r.down1(rgb), l1);
  const auto l2 = ld_encoder->stage2(l1);
  f.s2 = blocks::fuse(run(r.stage2, r.down2(f.s1)), l2);
  const auto l3 = ld_encoder->stage3(l2);
  f.s3 = blocks::fuse(run(r.stage3, r.down3(f.s2)), l3);
  return f;
}

NetworkOutput SegDepthNetImpl::forward(const torch::Tensor& rgb,
                                       const torch::Tensor& lum,
                                       const std::optional<torch::Tensor>& depth_in) {
  if (rgb.dim() != 4 || rgb.size(1) != 3) {
    throw ContractError("rgb input must be N×3×H×W");
  }
  if (rgb.size(2) % 8 != 0 || rgb.size(3) % 8 != 0) {
    throw ContractError("input H and W must be divisible by 8");
  }
  if (lum.dim() != 4 || lum.size(1) != 1 || lum.size(0) != rgb.size(0) ||
      lum.size(2) != rgb.size(2) || lum.size(3) != rgb.size(3)) {
    throw ContractError("luminance must be N×1×H×W matching rgb");
  }
  torch::Tensor ld = lum;
  if (cfg_.ld_mode == LdMode::kLumAndDepth) {
    if (!depth_in || !depth_in->defined()) {
      throw ContractError("LUM_AND_DEPTH network needs a depth input");
    }
    if (depth_in->sizes() != lum.sizes()) {
      throw ContractError("depth input must be N×1×H×W matching rgb");
    }
    ld = torch::cat({lum, *depth_in}, 1);
  } else if (depth_in && depth_in->defined()) {
    throw ContractError("LUM_ONLY network takes no depth input");
  }
  const StageOutputs fused = fused_stages(rgb, ld);
  NetworkOutput out;
  if (seg_decoder) out.seg_logits = seg_decoder(fused);
  std::tie(out.depth_full, out.depth_half) = depth_decoder(fused);
  return out;
}

std::int64_t SegDepthNetImpl::segmentation_path_parameters() const {
  return blocks::count_parameters(*rgb_encoder) +
         blocks::count_parameters(*ld_encoder) +
         (seg_decoder ? blocks::count_parameters(*seg_decoder) : 0);
}

std::int64_t expected_rgb_encoder_parameters(const SegDepthConfig& cfg) {
  const auto& w = cfg.stage_widths;
  return blocks::downsampler_params(3, w[0]) + blocks::downsampler_params(w[0], w[1]) +
         cfg.rgb_stage2_modules * blocks::non_bottleneck_params(w[1]) +
         blocks::downsampler_params(w[1], w[2]) +
         cfg.rgb_stage3_modules * blocks::non_bottleneck_params(w[2]);
}

std::int64_t expected_ld_encoder_parameters(const SegDepthConfig& cfg,
                                            std::int64_t in_channels) {
  const auto& w = cfg.stage_widths;
  const auto& m = cfg.ld_dense_modules;
  const auto& g = cfg.dense_growth;
  const std::int64_t c1 = w[0] + m[0] * g[0];
  const std::int64_t c2 = w[1] + m[1] * g[1];
  const std::int64_t c3 = w[2] + m[2] * g[2];
  return blocks::downsampler_params(in_channels, w[0]) +
         blocks::dense_block_params(w[0], m[0], g[0]) +
         blocks::transition_params(c1, w[1]) +
         blocks::dense_block_params(w[1], m[1], g[1]) +
         blocks::transition_params(c2, w[2]) +
         blocks::dense_block_params(w[2], m[2], g[2]) +
         blocks::transition_params(c3, w[2]);
}

std::int64_t expected_seg_decoder_parameters(const SegDepthConfig& cfg) {
  const auto& w = cfg.stage_widths;
  return blocks::upsampler_params(w[2], w[1], true) +
         blocks::upsampler_params(w[1], w[0], true) +
         conv_params(w[0], cfg.num_classes, 3, 3);
}

std::int64_t expected_depth_decoder_parameters(const SegDepthConfig& cfg) {
  const auto& w = cfg.stage_widths;
  return blocks::upsampler_params(w[2], w[1], true) +
         blocks::upsampler_params(w[1], w[0], true) + conv_params(w[0], 1, 3, 3) +
         conv_params(w[1], 1, 3, 3);
}

std::int64_t expected_segdepth_parameters(const SegDepthConfig& cfg) {
  return expected_rgb_encoder_parameters(cfg) +
         expected_ld_encoder_parameters(cfg, cfg.ld_in_channels()) +
         (cfg.heads == Heads::kSegAndDepth ? expected_seg_decoder_parameters(cfg) : 0) +
         expected_depth_decoder_parameters(cfg);
}

torch::Tensor depth_to_code(const torch::Tensor& meters) {
  return ((meters - kMinDepthMeters) / (kMaxDepthMeters - kMinDepthMeters))
      .clamp(0.0, 1.0);
}

torch::Tensor code_to_depth(const torch::Tensor& code) {
  return kMinDepthMeters + code * (kMaxDepthMeters - kMinDepthMeters);
}

// ---------------------------------------------------------------------------

namespace {

class ResidualBlockImpl : public nn::Module {
 public:
  explicit ResidualBlockImpl(std::int64_t ch) {
    body = register_module(
        "body", nn::Sequential(nn::ReflectionPad2d(1), nn::Conv2d(nn::Conv2dOptions(ch, ch, 3)),
                               nn::InstanceNorm2d(ch), nn::ReLU(), nn::ReflectionPad2d(1),
                               nn::Conv2d(nn::Conv2dOptions(ch, ch, 3)),
                               nn::InstanceNorm2d(ch)));
  }
  torch::Tensor forward(const torch::Tensor& x) { return x + body->forward(x); }
  nn::Sequential body{nullptr};
};
TORCH_MODULE(ResidualBlock);

}  // namespace

TranslationGenerator::TranslationGenerator(std::int64_t width, int num_residual)
    : width_(width), num_residual_(num_residual) {
  if (width < 8) throw ConfigError("generator width must be >= 8");
  if (num_residual < 0) throw ConfigError("residual block count must be >= 0");
  const std::int64_t w = width;
  nn::Sequential seq(
      nn::ReflectionPad2d(3), nn::Conv2d(nn::Conv2dOptions(3, w, 7)), nn::InstanceNorm2d(w),
      nn::ReLU(), nn::Conv2d(nn::Conv2dOptions(w, 2 * w, 3).stride(2).padding(1)),
      nn::InstanceNorm2d(2 * w), nn::ReLU(),
      nn::Conv2d(nn::Conv2dOptions(2 * w, 4 * w, 3).stride(2).padding(1)),
      nn::InstanceNorm2d(4 * w), nn::ReLU());
  for (int i = 0; i < num_residual; ++i) seq->push_back(ResidualBlock(4 * w));
  seq->push_back(blocks::make_upsampling_head(4 * w, 2 * w));
  seq->push_back(nn::InstanceNorm2d(2 * w));
  seq->push_back(nn::ReLU());
  seq->push_back(blocks::make_upsampling_head(2 * w, w));
  seq->push_back(nn::InstanceNorm2d(w));
  seq->push_back(nn::ReLU());
  seq->push_back(nn::ReflectionPad2d(3));
  nn::Conv2d out(nn::Conv2dOptions(w, 3, 7));
  // Zero output layer: the generator starts as the identity map.
  {
    torch::NoGradGuard guard;
    out->weight.zero_();
    out->bias.zero_();
  }
  seq->push_back(out);
  body_ = register_module("body", seq);
}

torch::Tensor TranslationGenerator::forward(const torch::Tensor& image) {
  return (image + torch::tanh(body_->forward(image * 2.0 - 1.0))).clamp(0.0, 1.0);
}

std::int64_t expected_generator_parameters(std::int64_t w, int num_residual) {
  return conv_params(3, w, 7, 7) + conv_params(w, 2 * w, 3, 3) +
         conv_params(2 * w, 4 * w, 3, 3) +
         num_residual * 2 * conv_params(4 * w, 4 * w, 3, 3) +
         conv_params(4 * w, 2 * w, 3, 3) + conv_params(2 * w, w, 3, 3) +
         conv_params(w, 3, 7, 7);
}

TranslationPair TranslationPair::build(const TranslationConfig& cfg) {
  TranslationPair p;
  p.gen_xy = std::make_shared<TranslationGenerator>(cfg.generator_width,
                                                    cfg.generator_residual);
  p.gen_yx = std::make_shared<TranslationGenerator>(cfg.generator_width,
                                                    cfg.generator_residual);
  p.disc_x = blocks::PatchDiscriminator(3, cfg.disc_base_width, cfg.disc_scales);
  p.disc_y = blocks::PatchDiscriminator(3, cfg.disc_base_width, cfg.disc_scales);
  return p;
}

std::int64_t TranslationPair::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, m] : named_modules()) n += blocks::count_parameters(*m);
  return n;
}

std::vector<std::pair<std::string, std::shared_ptr<torch::nn::Module>>>
TranslationPair::named_modules() const {
  return {{"gen_xy", gen_xy},
          {"gen_yx", gen_yx},
          {"disc_x", disc_x.ptr()},
          {"disc_y", disc_y.ptr()}};
}

torch::Tensor translate(ImageGenerator& gen, const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3) {
    throw ContractError("translate expects an N×3×H×W image");
  }
  if (image.size(2) % 4 != 0 || image.size(3) % 4 != 0) {
    throw ContractError("translate needs H and W divisible by 4");
  }
  torch::NoGradGuard no_grad;
  return gen.forward(image);
}

torch::Tensor luminance(const torch::Tensor& rgb) {
  const auto w = torch::tensor({kLumaCoefficients[0], kLumaCoefficients[1],
                                kLumaCoefficients[2]},
                               rgb.options())
                     .view({1, 3, 1, 1});
  return (rgb * w).sum(1, /*keepdim=*/true).clamp(0.0, 1.0);
}

}  // namespace fogscene::models
