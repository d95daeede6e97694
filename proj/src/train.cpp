#include "fogscene/train.hpp"

#include <chrono>
#include <fstream>

#include "fogscene/image_io.hpp"

namespace fogscene {

namespace fs = std::filesystem;
using nlohmann::json;
using losses::AdversarialRole;
using losses::LossBreakdown;

std::string to_string(Stage s) {
  switch (s) {
    case Stage::kDomainAdapt: return "da";
    case Stage::kDepth: return "depth";
    case Stage::kSeg: return "seg";
    case Stage::kFinetune: return "finetune";
  }
  return "?";
}

Stage parse_stage(const std::string& s) {
  if (s == "da") return Stage::kDomainAdapt;
  if (s == "depth") return Stage::kDepth;
  if (s == "seg") return Stage::kSeg;
  if (s == "finetune") return Stage::kFinetune;
  throw ConfigError("unknown stage '" + s + "' (expected da, depth, seg or finetune)");
}

std::string to_string(DatasetLayout l) {
  return l == DatasetLayout::kSynthetic ? "synthetic" : "cityscapes";
}

DatasetLayout parse_layout(const std::string& s) {
  if (s == "synthetic") return DatasetLayout::kSynthetic;
  if (s == "cityscapes") return DatasetLayout::kCityscapes;
  throw ConfigError("unknown dataset layout '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be > 0");
  if (adam.beta1 < 0.0 || adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (iterations < 0) throw ConfigError("iteration count must be >= 0");
  // The generators need H, W divisible by 4, the networks and the three-scale
  // discriminators by 8.
  const int div = std::max(8, 1 << std::max(output_disc_scales, translation.disc_scales));
  if (resolution.height <= 0 || resolution.width <= 0 || resolution.height % div != 0 ||
      resolution.width % div != 0) {
    throw ConfigError("training resolution must be positive and divisible by " +
                      std::to_string(div));
  }
  if (lambda_cyc < 0.0) throw ConfigError("lambda_cyc must be >= 0");
  if (output_disc_width < 1 || output_disc_scales < 1) {
    throw ConfigError("output discriminator needs width >= 1 and scales >= 1");
  }
  if (translation.generator_width < 8 || translation.generator_residual < 0 ||
      translation.disc_base_width < 1 || translation.disc_scales < 1) {
    throw ConfigError("invalid translation network configuration");
  }
  if (sample_every < 0) throw ConfigError("sample_every must be >= 0");
  if (!(finetune_lr_scale > 0.0)) throw ConfigError("finetune lr scale must be > 0");
  if (refined_train < 1 || refined_test < 0) {
    throw ConfigError("refined split needs >= 1 training sample");
  }
  auto m = model;
  m.input_resolution = resolution;
  m.validate();
}

void TrainLog::write_jsonl(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write training log " + path.string());
  for (const auto& r : history) {
    json j;
    j["iteration"] = r.iteration;
    j["domain"] = r.domain ? json(to_string(*r.domain)) : json(nullptr);
    j["losses"] = r.losses;
    j["lr"] = r.lr;
    j["wall"] = r.wall_seconds;
    os << j.dump() << '\n';
  }
}

fs::path checkpoint_path(const fs::path& out_dir, Stage stage, bool finetuned) {
  return out_dir / (to_string(stage) + (finetuned ? "_ft" : "") + ".ckpt");
}

// ---------------------------------------------------------------------------
// Data

torch::Tensor to_tensor(const Image& img) {
  auto t = torch::empty({1, img.channels, img.height, img.width}, torch::kFloat32);
  auto a = t.accessor<float, 4>();
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        a[0][c][y][x] = static_cast<float>(img.at(y, x, c));
      }
    }
  }
  return t;
}

Image to_image(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  if (c.dim() == 4) {
    if (c.size(0) != 1) throw ContractError("to_image expects a single image");
    c = c[0];
  }
  if (c.dim() != 3) throw ContractError("to_image expects C×H×W");
  Image img(static_cast<int>(c.size(1)), static_cast<int>(c.size(2)),
            static_cast<int>(c.size(0)));
  auto a = c.accessor<double, 3>();
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int ch = 0; ch < img.channels; ++ch) img.at(y, x, ch) = a[ch][y][x];
    }
  }
  return img;
}

Batch make_batch(const std::vector<const SceneSample*>& samples, Domain domain) {
  if (samples.empty()) throw ContractError("make_batch needs at least one sample");
  std::vector<torch::Tensor> rgb, lum, depth, labels;
  Batch b;
  b.domain = domain;
  for (const SceneSample* s : samples) {
    rgb.push_back(to_tensor(s->rgb));
    lum.push_back(to_tensor(s->luminance));
    depth.push_back(to_tensor(s->depth));
    auto l = torch::empty({1, s->labels.height, s->labels.width}, torch::kInt64);
    auto a = l.accessor<std::int64_t, 3>();
    for (int y = 0; y < s->labels.height; ++y) {
      for (int x = 0; x < s->labels.width; ++x) a[0][y][x] = s->labels.at(y, x);
    }
    labels.push_back(l);
    b.ids.push_back(s->id);
  }
  b.rgb = torch::cat(rgb);
  b.lum = torch::cat(lum);
  const auto meters = torch::cat(depth);
  b.valid = (meters > 0.0).to(torch::kFloat32);
  b.depth = models::depth_to_code(meters) * b.valid;
  b.labels = torch::cat(labels);
  return b;
}

TrainingData::TrainingData(const DatasetManifest& manifest, int num_classes) {
  for (const auto& e : manifest.entries) {
    if (e.depth_path.empty()) has_depth_ = false;
    auto s = load_sample(e, num_classes);
    (e.domain == Domain::kNormal ? normal_ : foggy_).push_back(std::move(s));
  }
}

std::size_t TrainingData::count(Domain d) const {
  return d == Domain::kNormal ? normal_.size() : foggy_.size();
}

Batch TrainingData::batch(Domain d, std::uint64_t seed, std::int64_t iteration,
                          int batch_size, Resolution target) const {
  const auto& pool = d == Domain::kNormal ? normal_ : foggy_;
  if (pool.empty()) {
    throw DatasetError("no " + to_string(d) + " training samples available");
  }
  SplitMix rng(mix_seed(seed, static_cast<std::uint64_t>(iteration),
                        d == Domain::kNormal ? 1 : 2));
  std::vector<SceneSample> augmented;
  augmented.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    const int idx = rng.uniform_int(0, static_cast<int>(pool.size()) - 1);
    augmented.push_back(augment(pool[idx], rng.next(), target));
  }
  std::vector<const SceneSample*> ptrs;
  for (const auto& s : augmented) ptrs.push_back(&s);
  return make_batch(ptrs, d);
}

std::vector<Batch> TrainingData::ordered_batches(Domain d, int batch_size,
                                                 Resolution target) const {
  const auto& pool = d == Domain::kNormal ? normal_ : foggy_;
  std::vector<Batch> out;
  for (std::size_t i = 0; i < pool.size(); i += batch_size) {
    std::vector<SceneSample> resized;
    for (std::size_t j = i; j < std::min(pool.size(), i + batch_size); ++j) {
      resized.push_back(augment(pool[j], 0, target, FlipMode::kNever));
    }
    std::vector<const SceneSample*> ptrs;
    for (const auto& s : resized) ptrs.push_back(&s);
    out.push_back(make_batch(ptrs, d));
  }
  return out;
}

DatasetManifest load_manifest(const fs::path& root, DatasetLayout layout) {
  if (layout == DatasetLayout::kSynthetic) return load_dataset(root);
  auto normal = load_cityscapes_layout(root, Domain::kNormal);
  DatasetManifest foggy;
  try {
    foggy = load_cityscapes_layout(root, Domain::kFoggy);
  } catch (const DatasetError&) {
    return normal;
  }
  normal.entries.insert(normal.entries.end(), foggy.entries.begin(), foggy.entries.end());
  normal.warnings += foggy.warnings;
  return normal;
}

DatasetManifest load_training_manifest(const TrainConfig& cfg) {
  auto m = load_manifest(cfg.data_root, cfg.layout).filter(Split::kTrain, std::nullopt);
  if (m.size() == 0) {
    throw DatasetError("dataset at " + cfg.data_root.string() + " has no training samples");
  }
  if (m.num_classes > cfg.model.num_classes) {
    throw ConfigError("dataset has " + std::to_string(m.num_classes) +
                      " classes but the model is configured for " +
                      std::to_string(cfg.model.num_classes));
  }
  return m;
}

Domain scheduled_domain(std::int64_t iteration, bool foggy_stream) {
  return foggy_stream && iteration % 2 == 1 ? Domain::kFoggy : Domain::kNormal;
}

// ---------------------------------------------------------------------------
// Configuration <-> JSON

namespace {

json to_json(const models::SegDepthConfig& c) {
  return {{"num_classes", c.num_classes},
          {"stage_widths", c.stage_widths},
          {"rgb_stage2_modules", c.rgb_stage2_modules},
          {"rgb_stage3_modules", c.rgb_stage3_modules},
          {"ld_dense_modules", c.ld_dense_modules},
          {"dense_growth", c.dense_growth},
          {"input_resolution", {c.input_resolution.height, c.input_resolution.width}},
          {"ld_mode", models::to_string(c.ld_mode)},
          {"dropout", c.dropout},
          {"heads", models::to_string(c.heads)}};
}

models::SegDepthConfig seg_config_from_json(const json& j) {
  models::SegDepthConfig c;
  c.num_classes = j.at("num_classes").get<int>();
  c.stage_widths = j.at("stage_widths").get<std::array<std::int64_t, 3>>();
  c.rgb_stage2_modules = j.at("rgb_stage2_modules").get<int>();
  c.rgb_stage3_modules = j.at("rgb_stage3_modules").get<int>();
  c.ld_dense_modules = j.at("ld_dense_modules").get<std::array<int, 3>>();
  c.dense_growth = j.at("dense_growth").get<std::array<std::int64_t, 3>>();
  const auto r = j.at("input_resolution").get<std::array<int, 2>>();
  c.input_resolution = {r[0], r[1]};
  c.ld_mode = models::parse_ld_mode(j.at("ld_mode").get<std::string>());
  c.dropout = j.at("dropout").get<double>();
  c.heads = models::parse_heads(j.at("heads").get<std::string>());
  return c;
}

json to_json(const models::TranslationConfig& c) {
  return {{"generator_width", c.generator_width},
          {"generator_residual", c.generator_residual},
          {"disc_base_width", c.disc_base_width},
          {"disc_scales", c.disc_scales}};
}

models::TranslationConfig translation_config_from_json(const json& j) {
  models::TranslationConfig c;
  c.generator_width = j.at("generator_width").get<std::int64_t>();
  c.generator_residual = j.at("generator_residual").get<int>();
  c.disc_base_width = j.at("disc_base_width").get<std::int64_t>();
  c.disc_scales = j.at("disc_scales").get<int>();
  return c;
}

std::vector<torch::Tensor> params_of(
    std::initializer_list<const torch::nn::Module*> modules) {
  std::vector<torch::Tensor> out;
  for (const auto* m : modules) {
    for (const auto& p : m->parameters()) out.push_back(p);
  }
  return out;
}

AdamOptions adam_from_meta(const Checkpoint& ckpt, const std::string& prefix) {
  const auto& j = ckpt.meta.at("optimizers").at(prefix);
  return {j.at("lr").get<double>(), j.at("beta1").get<double>(),
          j.at("beta2").get<double>(), j.at("eps").get<double>()};
}

void expect_kind(const Checkpoint& ckpt, const std::string& kind) {
  const auto it = ckpt.meta.find("kind");
  if (it == ckpt.meta.end() || *it != kind) {
    throw FormatError("expected a '" + kind + "' checkpoint, found '" +
                      (it == ckpt.meta.end() ? std::string("none") : it->dump()) + "'");
  }
}

void freeze(torch::nn::Module& m) {
  for (auto& p : m.parameters()) p.set_requires_grad(false);
  m.eval();
}

// Reads a checkpoint, translating json errors into format errors.
template <typename F>
auto decode(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint metadata malformed: ") + e.what());
  }
}

torch::Tensor zero_like_loss(const torch::Tensor& ref) {
  return torch::zeros({}, ref.options());
}

}  // namespace

models::SegDepthConfig depth_network_config(models::SegDepthConfig base) {
  base.ld_mode = models::LdMode::kLumOnly;
  base.heads = models::Heads::kDepthOnly;
  return base;
}

models::SegDepthConfig seg_network_config(models::SegDepthConfig base) {
  base.ld_mode = models::LdMode::kLumAndDepth;
  base.heads = models::Heads::kSegAndDepth;
  return base;
}

// ---------------------------------------------------------------------------
// Stage state

DaState DaState::create(const models::TranslationConfig& cfg, const AdamOptions& adam,
                        std::uint64_t seed) {
  torch::manual_seed(seed);
  DaState s;
  s.cfg = cfg;
  s.pair = models::TranslationPair::build(cfg);
  s.opt_gen = std::make_unique<Adam>(
      params_of({s.pair.gen_xy.get(), s.pair.gen_yx.get()}), adam);
  s.opt_disc = std::make_unique<Adam>(
      params_of({s.pair.disc_x.get(), s.pair.disc_y.get()}), adam);
  return s;
}

Checkpoint DaState::to_checkpoint(Stage stage, std::uint64_t seed) const {
  Checkpoint c;
  c.meta["kind"] = "da";
  c.meta["stage"] = to_string(stage);
  c.meta["seed"] = seed;
  c.meta["iteration"] = iteration;
  c.meta["translation"] = to_json(cfg);
  for (const auto& [name, m] : pair.named_modules()) c.put_module(name, *m);
  c.put_optimizer("opt_gen", *opt_gen);
  c.put_optimizer("opt_disc", *opt_disc);
  c.put_torch_rng();
  return c;
}

DaState DaState::from_checkpoint(const Checkpoint& ckpt) {
  expect_kind(ckpt, "da");
  return decode([&] {
    DaState s;
    s.cfg = translation_config_from_json(ckpt.meta.at("translation"));
    s.pair = models::TranslationPair::build(s.cfg);
    for (const auto& [name, m] : s.pair.named_modules()) ckpt.load_module(name, *m);
    s.opt_gen = std::make_unique<Adam>(
        params_of({s.pair.gen_xy.get(), s.pair.gen_yx.get()}),
        adam_from_meta(ckpt, "opt_gen"));
    s.opt_disc = std::make_unique<Adam>(
        params_of({s.pair.disc_x.get(), s.pair.disc_y.get()}),
        adam_from_meta(ckpt, "opt_disc"));
    ckpt.load_optimizer("opt_gen", *s.opt_gen);
    ckpt.load_optimizer("opt_disc", *s.opt_disc);
    s.iteration = ckpt.meta.at("iteration").get<std::int64_t>();
    return s;
  });
}

void DomainNorms::capture(torch::nn::Module& net, Domain d) {
  auto& v = stats[d];
  v.clear();
  for (const auto& b : net.named_buffers(true)) v.push_back(b.value().detach().clone());
}

void DomainNorms::apply(torch::nn::Module& net, Domain d) const {
  const auto it = stats.find(d);
  if (it == stats.end()) return;
  torch::NoGradGuard guard;
  const auto buffers = net.named_buffers(true);
  if (buffers.size() != it->second.size()) {
    throw ContractError("normalisation statistics do not match the network");
  }
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    buffers[i].value().copy_(it->second[i]);
  }
}

void DomainNorms::put(Checkpoint& c, const std::string& prefix,
                      const torch::nn::Module& net) const {
  const auto buffers = net.named_buffers(true);
  for (const auto& [d, v] : stats) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      c.put(prefix + "/" + to_string(d) + "/" + buffers[i].key(), v[i]);
    }
  }
}

DomainNorms DomainNorms::load(const Checkpoint& c, const std::string& prefix,
                              torch::nn::Module& net) {
  DomainNorms n;
  const auto buffers = net.named_buffers(true);
  for (Domain d : {Domain::kNormal, Domain::kFoggy}) {
    const auto base = prefix + "/" + to_string(d) + "/";
    if (buffers.size() == 0 || !c.has(base + buffers[0].key())) continue;
    auto& v = n.stats[d];
    for (const auto& b : buffers) {
      const auto& t = c.get(base + b.key());
      if (t.sizes() != b.value().sizes() || t.dtype() != b.value().dtype()) {
        throw FormatError("normalisation statistics " + base + b.key() +
                          " do not match the network");
      }
      v.push_back(t);
    }
  }
  return n;
}

DepthState DepthState::create(models::SegDepthConfig cfg, std::int64_t disc_width,
                              int disc_scales, const AdamOptions& adam,
                              std::uint64_t seed) {
  torch::manual_seed(seed);
  DepthState s;
  s.cfg = depth_network_config(std::move(cfg));
  s.net = models::SegDepthNet(s.cfg);
  s.disc = blocks::PatchDiscriminator(1, disc_width, disc_scales);
  s.weights = losses::UncertaintyWeights();
  s.disc_width = disc_width;
  s.disc_scales = disc_scales;
  s.opt_net = std::make_unique<Adam>(params_of({s.net.get(), s.weights.get()}), adam);
  s.opt_disc = std::make_unique<Adam>(params_of({s.disc.get()}), adam);
  return s;
}

Checkpoint DepthState::to_checkpoint(Stage stage, std::uint64_t seed) const {
  Checkpoint c;
  c.meta["kind"] = "depth";
  c.meta["stage"] = to_string(stage);
  c.meta["seed"] = seed;
  c.meta["iteration"] = iteration;
  c.meta["model"] = to_json(cfg);
  c.meta["disc"] = {{"width", disc_width}, {"scales", disc_scales}};
  c.meta["uncertainty"] = std::vector<double>{weights->value(weights->kDomainAdapt),
                                              weights->value(weights->kSeg),
                                              weights->value(weights->kDepth)};
  c.put_module("depth_net", *net);
  norms.put(c, "depth_net_norms", *net);
  c.put_module("disc_depth", *disc);
  c.put_module("uncertainty", *weights);
  c.put_optimizer("opt_net", *opt_net);
  c.put_optimizer("opt_disc", *opt_disc);
  c.put_torch_rng();
  return c;
}

DepthState DepthState::from_checkpoint(const Checkpoint& ckpt) {
  expect_kind(ckpt, "depth");
  return decode([&] {
    DepthState s;
    s.cfg = seg_config_from_json(ckpt.meta.at("model"));
    s.disc_width = ckpt.meta.at("disc").at("width").get<std::int64_t>();
    s.disc_scales = ckpt.meta.at("disc").at("scales").get<int>();
    s.net = models::SegDepthNet(s.cfg);
    s.disc = blocks::PatchDiscriminator(1, s.disc_width, s.disc_scales);
    s.weights = losses::UncertaintyWeights();
    ckpt.load_module("depth_net", *s.net);
    s.norms = DomainNorms::load(ckpt, "depth_net_norms", *s.net);
    ckpt.load_module("disc_depth", *s.disc);
    ckpt.load_module("uncertainty", *s.weights);
    s.opt_net = std::make_unique<Adam>(params_of({s.net.get(), s.weights.get()}),
                                       adam_from_meta(ckpt, "opt_net"));
    s.opt_disc = std::make_unique<Adam>(params_of({s.disc.get()}),
                                        adam_from_meta(ckpt, "opt_disc"));
    ckpt.load_optimizer("opt_net", *s.opt_net);
    ckpt.load_optimizer("opt_disc", *s.opt_disc);
    s.iteration = ckpt.meta.at("iteration").get<std::int64_t>();
    return s;
  });
}

Checkpoint SegState::to_checkpoint(Stage stage, std::uint64_t seed) const {
  Checkpoint c;
  c.meta["kind"] = "seg";
  c.meta["stage"] = to_string(stage);
  c.meta["seed"] = seed;
  c.meta["iteration"] = iteration;
  c.meta["model"] = to_json(cfg);
  c.meta["depth_model"] = to_json(depth_cfg);
  c.meta["translation"] = to_json(translation_cfg);
  c.meta["use_translation"] = use_translation;
  c.meta["disc"] = {{"width", disc_width}, {"scales", disc_scales}};
  c.meta["uncertainty"] = std::vector<double>{weights->value(weights->kDomainAdapt),
                                              weights->value(weights->kSeg),
                                              weights->value(weights->kDepth)};
  c.put_module("seg_net", *net);
  norms.put(c, "seg_net_norms", *net);
  c.put_module("disc_seg", *disc);
  c.put_module("uncertainty", *weights);
  c.put_module("gen_xy", *gen_xy);
  c.put_module("depth_net", *depth_net);
  depth_norms.put(c, "depth_net_norms", *depth_net);
  c.put_optimizer("opt_net", *opt_net);
  c.put_optimizer("opt_disc", *opt_disc);
  c.put_torch_rng();
  return c;
}

SegState SegState::from_checkpoint(const Checkpoint& ckpt) {
  expect_kind(ckpt, "seg");
  return decode([&] {
    SegState s;
    s.cfg = seg_config_from_json(ckpt.meta.at("model"));
    s.depth_cfg = seg_config_from_json(ckpt.meta.at("depth_model"));
    s.translation_cfg = translation_config_from_json(ckpt.meta.at("translation"));
    s.use_translation = ckpt.meta.at("use_translation").get<bool>();
    s.disc_width = ckpt.meta.at("disc").at("width").get<std::int64_t>();
    s.disc_scales = ckpt.meta.at("disc").at("scales").get<int>();
    s.net = models::SegDepthNet(s.cfg);
    s.disc = blocks::PatchDiscriminator(s.cfg.num_classes, s.disc_width, s.disc_scales);
    s.weights = losses::UncertaintyWeights();
    s.gen_xy = std::make_shared<models::TranslationGenerator>(
        s.translation_cfg.generator_width, s.translation_cfg.generator_residual);
    s.depth_net = models::SegDepthNet(s.depth_cfg);
    ckpt.load_module("seg_net", *s.net);
    ckpt.load_module("disc_seg", *s.disc);
    ckpt.load_module("uncertainty", *s.weights);
    ckpt.load_module("gen_xy", *s.gen_xy);
    ckpt.load_module("depth_net", *s.depth_net);
    s.norms = DomainNorms::load(ckpt, "seg_net_norms", *s.net);
    s.depth_norms = DomainNorms::load(ckpt, "depth_net_norms", *s.depth_net);
    freeze(*s.gen_xy);
    freeze(*s.depth_net);
    s.opt_net = std::make_unique<Adam>(params_of({s.net.get(), s.weights.get()}),
                                       adam_from_meta(ckpt, "opt_net"));
    s.opt_disc = std::make_unique<Adam>(params_of({s.disc.get()}),
                                        adam_from_meta(ckpt, "opt_disc"));
    ckpt.load_optimizer("opt_net", *s.opt_net);
    ckpt.load_optimizer("opt_disc", *s.opt_disc);
    s.iteration = ckpt.meta.at("iteration").get<std::int64_t>();
    return s;
  });
}

SegInputs prepare_seg_inputs(SegState& s, const torch::Tensor& rgb, Domain domain,
                             bool translate) {
  torch::NoGradGuard guard;
  SegInputs in;
  in.rgb = translate ? models::translate(*s.gen_xy, rgb) : rgb;
  in.lum = models::luminance(in.rgb);
  s.depth_net->eval();
  s.depth_norms.apply(*s.depth_net, domain);
  in.depth_code = s.depth_net->forward(in.rgb, in.lum).depth_full;
  return in;
}

// ---------------------------------------------------------------------------
// Single steps

LossBreakdown da_step(DaState& s, const Batch& foggy, const Batch& normal,
                      double lambda_cyc, losses::GanForm form) {
  auto& p = s.pair;
  p.gen_xy->train();
  p.gen_yx->train();
  const auto& x = foggy.rgb;
  const auto& y = normal.rgb;

  const auto fake_y = p.gen_xy->forward(x);
  const auto fake_x = p.gen_yx->forward(y);
  const auto rec_x = p.gen_yx->forward(fake_y);
  const auto rec_y = p.gen_xy->forward(fake_x);
  const auto adv_xy = losses::adversarial_loss({}, p.disc_y->forward(fake_y),
                                               AdversarialRole::kGenerator, form);
  const auto adv_yx = losses::adversarial_loss({}, p.disc_x->forward(fake_x),
                                               AdversarialRole::kGenerator, form);
  const auto cyc = losses::cycle_consistency_loss(x, rec_x, y, rec_y);
  const auto da = losses::domain_adaptation_loss(adv_xy, adv_yx, cyc, lambda_cyc);
  s.opt_gen->zero_grad();
  da.backward();
  s.opt_gen->step();

  s.opt_disc->zero_grad();
  const auto d_y = losses::adversarial_loss(p.disc_y->forward(y),
                                            p.disc_y->forward(fake_y.detach()),
                                            AdversarialRole::kDiscriminator);
  const auto d_x = losses::adversarial_loss(p.disc_x->forward(x),
                                            p.disc_x->forward(fake_x.detach()),
                                            AdversarialRole::kDiscriminator);
  (d_x + d_y).backward();
  s.opt_disc->step();
  ++s.iteration;

  return {{"adv_xy", adv_xy.item<double>()}, {"adv_yx", adv_yx.item<double>()},
          {"cyc", cyc.item<double>()},       {"domain_adapt", da.item<double>()},
          {"disc_x", d_x.item<double>()},    {"disc_y", d_y.item<double>()}};
}

LossBreakdown depth_step(DepthState& s, const Batch& b, bool adversarial,
                         losses::GanForm form) {
  s.net->train();
  const auto out = s.net->forward(b.rgb, b.lum);
  const auto l1 = losses::depth_loss(out.depth_full, out.depth_half, b.depth, b.valid);
  const bool adv_on = adversarial && b.domain == Domain::kFoggy;
  const auto adv = adv_on ? losses::adversarial_loss({}, s.disc->forward(out.depth_full),
                                                     AdversarialRole::kGenerator, form)
                          : zero_like_loss(l1);
  const auto joint = losses::joint_depth_loss(l1, adv);
  const auto total = losses::combined_loss({}, {}, joint, s.weights);
  s.opt_net->zero_grad();
  total.backward();
  s.opt_net->step();

  LossBreakdown r{{"depth_l1", l1.item<double>()},
                  {"depth_adv", adv.item<double>()},
                  {"joint_depth", joint.item<double>()},
                  {"combined", total.item<double>()},
                  {"s_depth", s.weights->value(s.weights->kDepth)}};
  if (adv_on) {
    s.opt_disc->zero_grad();
    const auto d = losses::adversarial_loss(s.disc->forward(b.depth),
                                            s.disc->forward(out.depth_full.detach()),
                                            AdversarialRole::kDiscriminator);
    d.backward();
    s.opt_disc->step();
    r["disc_depth"] = d.item<double>();
  }
  ++s.iteration;
  return r;
}

namespace {

// One-hot encoding of a label map; ignored pixels become all-zero vectors.
torch::Tensor one_hot_labels(const torch::Tensor& labels, std::int64_t k) {
  const auto valid = labels != kIgnoreLabel;
  const auto safe = torch::where(valid, labels, torch::zeros_like(labels));
  auto oh = torch::one_hot(safe, k).permute({0, 3, 1, 2}).to(torch::kFloat32);
  return oh * valid.unsqueeze(1).to(torch::kFloat32);
}

}  // namespace

LossBreakdown seg_step(SegState& s, const Batch& b, bool adversarial,
                       losses::GanForm form) {
  s.net->train();
  const bool foggy = b.domain == Domain::kFoggy;
  const auto in = prepare_seg_inputs(s, b.rgb, b.domain, foggy && s.use_translation);
  const auto out = s.net->forward(in.rgb, in.lum, in.depth_code);
  const auto ce = losses::segmentation_loss(out.seg_logits, b.labels, kIgnoreLabel);
  const auto probs = torch::softmax(out.seg_logits, 1);
  const bool adv_on = adversarial && foggy;
  const auto adv = adv_on ? losses::adversarial_loss({}, s.disc->forward(probs),
                                                     AdversarialRole::kGenerator, form)
                          : zero_like_loss(ce);
  const auto l1 = losses::depth_loss(out.depth_full, out.depth_half, b.depth, b.valid);
  const auto joint_seg = losses::joint_seg_loss(ce, adv);
  const auto joint_depth = losses::joint_depth_loss(l1, zero_like_loss(l1));
  const auto total = losses::combined_loss({}, joint_seg, joint_depth, s.weights);
  s.opt_net->zero_grad();
  total.backward();
  s.opt_net->step();

  LossBreakdown r{{"seg_ce", ce.item<double>()},
                  {"seg_adv", adv.item<double>()},
                  {"joint_seg", joint_seg.item<double>()},
                  {"depth_l1", l1.item<double>()},
                  {"joint_depth", joint_depth.item<double>()},
                  {"combined", total.item<double>()},
                  {"s_seg", s.weights->value(s.weights->kSeg)},
                  {"s_depth", s.weights->value(s.weights->kDepth)}};
  if (adv_on) {
    s.opt_disc->zero_grad();
    const auto real = one_hot_labels(b.labels, s.cfg.num_classes);
    const auto d = losses::adversarial_loss(s.disc->forward(real),
                                            s.disc->forward(probs.detach()),
                                            AdversarialRole::kDiscriminator);
    d.backward();
    s.opt_disc->step();
    r["disc_seg"] = d.item<double>();
  }
  ++s.iteration;
  return r;
}

// ---------------------------------------------------------------------------
// Drivers

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::uint64_t stage_seed(std::uint64_t seed, Stage stage) {
  return mix_seed(seed, 0x57A6E, static_cast<std::uint64_t>(stage));
}

void write_sample(const fs::path& path, const torch::Tensor& foggy,
                  const torch::Tensor& translated) {
  const auto strip = torch::cat({foggy[0], translated[0]}, 2);
  fs::create_directories(path.parent_path());
  write_png8(path, quantize8(to_image(strip)));
}

// Replaces the moving BatchNorm averages with exact per-domain averages over
// the un-augmented training images. The moving averages trail the weights and
// mix tiny single-domain batches of both domains, a mixture neither twin ever
// normalised with. Dropout stays off, so no random numbers are drawn. The
// network is left holding the NORMAL statistics.
template <typename Forward>
DomainNorms recalibrate_batch_norm(torch::nn::Module& net, const TrainingData& data,
                                   const TrainConfig& cfg, Forward forward) {
  torch::NoGradGuard guard;
  std::vector<torch::nn::BatchNorm2dImpl*> norms;
  for (const auto& m : net.modules()) {
    if (auto* bn = m->as<torch::nn::BatchNorm2d>()) norms.push_back(bn);
  }
  DomainNorms out;
  for (Domain d : {Domain::kFoggy, Domain::kNormal}) {
    if (data.count(d) == 0) continue;
    net.eval();
    for (auto* bn : norms) {
      bn->reset_running_stats();
      bn->options.momentum(std::nullopt);  // cumulative average
      bn->train();
    }
    for (const auto& b : data.ordered_batches(d, cfg.batch_size, cfg.resolution)) {
      forward(b);
    }
    for (auto* bn : norms) bn->options.momentum(0.1);
    net.eval();
    out.capture(net, d);
  }
  out.apply(net, Domain::kNormal);
  return out;
}

void recalibrate(DepthState& s, const TrainingData& data, const TrainConfig& cfg) {
  s.norms = recalibrate_batch_norm(*s.net, data, cfg,
                                   [&](const Batch& b) { s.net->forward(b.rgb, b.lum); });
}

void recalibrate(SegState& s, const TrainingData& data, const TrainConfig& cfg) {
  s.norms = recalibrate_batch_norm(*s.net, data, cfg, [&](const Batch& b) {
    const auto in = prepare_seg_inputs(s, b.rgb, b.domain,
                                       b.domain == Domain::kFoggy && s.use_translation);
    s.net->forward(in.rgb, in.lum, in.depth_code);
  });
}

void finish_log(TrainLog& log, const TrainConfig& cfg, const fs::path& ckpt) {
  log.checkpoint = ckpt.filename().string();
  log.write_jsonl(cfg.out_dir / "logs" / (log.stage + ".jsonl"));
}

// One pass of a trainer over iterations [begin, end) of its counter; the
// learning-rate schedule spans the same range.
struct Run {
  const TrainConfig& cfg;
  const TrainingData& data;
  std::uint64_t data_seed;
  std::string name;
  std::int64_t begin, end;
  double base_lr;

  double lr(std::int64_t it) const {
    return scheduled_lr(base_lr, cfg.lr_schedule, it, begin, end);
  }
};

TrainLog run_da(DaState& s, const Run& run) {
  const auto& cfg = run.cfg;
  TrainLog log;
  log.stage = run.name;
  log.lr = run.base_lr;
  const auto t0 = Clock::now();
  for (std::int64_t it = s.iteration; it < run.end; ++it) {
    const double lr = run.lr(it);
    s.opt_gen->set_lr(lr);
    s.opt_disc->set_lr(lr);
    const auto fog = run.data.batch(Domain::kFoggy, run.data_seed, it, cfg.batch_size,
                                    cfg.resolution);
    const auto clear = run.data.batch(Domain::kNormal, run.data_seed, it, cfg.batch_size,
                                      cfg.resolution);
    auto losses = da_step(s, fog, clear, cfg.lambda_cyc, cfg.gan_form);
    log.history.push_back({it, std::nullopt, std::move(losses), seconds_since(t0), lr});
    if (cfg.sample_every > 0 && it % cfg.sample_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "%s_%06lld.png", run.name.c_str(),
                    static_cast<long long>(it));
      write_sample(cfg.out_dir / "samples" / name, fog.rgb,
                   models::translate(*s.pair.gen_xy, fog.rgb));
    }
  }
  log.wall_seconds = seconds_since(t0);
  return log;
}

template <typename State, typename Step>
TrainLog run_twin(State& s, const Run& run, bool adversarial, Step step) {
  const auto& cfg = run.cfg;
  TrainLog log;
  log.stage = run.name;
  log.lr = run.base_lr;
  const auto t0 = Clock::now();
  for (std::int64_t it = s.iteration; it < run.end; ++it) {
    const double lr = run.lr(it);
    s.opt_net->set_lr(lr);
    s.opt_disc->set_lr(lr);
    const Domain d = scheduled_domain(it, cfg.foggy_stream);
    const auto b = run.data.batch(d, run.data_seed, it, cfg.batch_size, cfg.resolution);
    auto losses = step(s, b, adversarial, cfg.gan_form);
    log.history.push_back({it, d, std::move(losses), seconds_since(t0), lr});
  }
  log.wall_seconds = seconds_since(t0);
  return log;
}

Checkpoint load_prerequisite(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) {
    throw PipelineError("missing " + what + " checkpoint " + path.string() +
                        " (run the earlier stage first)");
  }
  return load_checkpoint(path);
}

void check_depth_available(const TrainingData& data) {
  if (!data.has_depth()) {
    throw DatasetError("depth training needs depth ground truth for every sample");
  }
}

template <typename State, typename Create>
State resume_or_create(const TrainConfig& cfg, Create create) {
  if (!cfg.resume) return create();
  const auto ckpt = load_checkpoint(*cfg.resume);
  auto s = State::from_checkpoint(ckpt);
  ckpt.restore_torch_rng();
  return s;
}

SegState build_seg_state(const TrainConfig& cfg, const DaState& da,
                         const DepthState& depth) {
  torch::manual_seed(stage_seed(cfg.seed, Stage::kSeg));
  SegState s;
  s.cfg = seg_network_config(cfg.model);
  s.cfg.input_resolution = cfg.resolution;
  s.net = models::SegDepthNet(s.cfg);
  s.disc_width = cfg.output_disc_width;
  s.disc_scales = cfg.output_disc_scales;
  s.disc = blocks::PatchDiscriminator(s.cfg.num_classes, s.disc_width, s.disc_scales);
  s.weights = losses::UncertaintyWeights();
  {
    // Start from the depth stage's task weight.
    torch::NoGradGuard guard;
    s.weights->log_vars.copy_(depth.weights->log_vars);
  }
  s.use_translation = cfg.use_translation;
  s.translation_cfg = da.cfg;
  s.gen_xy = da.pair.gen_xy;
  s.depth_cfg = depth.cfg;
  s.depth_net = depth.net;
  s.depth_norms = depth.norms;
  freeze(*s.gen_xy);
  freeze(*s.depth_net);
  s.opt_net = std::make_unique<Adam>(params_of({s.net.get(), s.weights.get()}), cfg.adam);
  s.opt_disc = std::make_unique<Adam>(params_of({s.disc.get()}), cfg.adam);
  return s;
}

}  // namespace

TrainLog train_domain_adaptation(const TrainConfig& cfg) {
  cfg.validate();
  const TrainingData data(load_training_manifest(cfg), cfg.model.num_classes);
  for (Domain d : {Domain::kNormal, Domain::kFoggy}) {
    if (data.count(d) == 0) {
      throw DatasetError("domain adaptation needs " + to_string(d) + " training images");
    }
  }
  auto s = resume_or_create<DaState>(cfg, [&] {
    return DaState::create(cfg.translation, cfg.adam,
                           stage_seed(cfg.seed, Stage::kDomainAdapt));
  });
  auto log = run_da(s, {cfg, data, cfg.seed, "da", 0, cfg.iterations, cfg.adam.lr});
  const auto path = checkpoint_path(cfg.out_dir, Stage::kDomainAdapt);
  save_checkpoint(s.to_checkpoint(Stage::kDomainAdapt, cfg.seed), path);
  finish_log(log, cfg, path);
  return log;
}

TrainLog train_depth(const TrainConfig& cfg) {
  cfg.validate();
  const TrainingData data(load_training_manifest(cfg), cfg.model.num_classes);
  check_depth_available(data);
  auto model = cfg.model;
  model.input_resolution = cfg.resolution;
  auto s = resume_or_create<DepthState>(cfg, [&] {
    return DepthState::create(model, cfg.output_disc_width, cfg.output_disc_scales,
                              cfg.adam, stage_seed(cfg.seed, Stage::kDepth));
  });
  auto log = run_twin(s, {cfg, data, cfg.seed, "depth", 0, cfg.iterations, cfg.adam.lr},
                      cfg.adversarial_depth, depth_step);
  recalibrate(s, data, cfg);
  const auto path = checkpoint_path(cfg.out_dir, Stage::kDepth);
  save_checkpoint(s.to_checkpoint(Stage::kDepth, cfg.seed), path);
  finish_log(log, cfg, path);
  return log;
}

TrainLog train_segmentation(const TrainConfig& cfg, const fs::path& da_checkpoint,
                            const fs::path& depth_checkpoint) {
  cfg.validate();
  const auto da_ckpt = load_prerequisite(da_checkpoint, "domain adaptation");
  const auto depth_ckpt = load_prerequisite(depth_checkpoint, "depth");
  const TrainingData data(load_training_manifest(cfg), cfg.model.num_classes);
  auto s = resume_or_create<SegState>(cfg, [&] {
    return build_seg_state(cfg, DaState::from_checkpoint(da_ckpt),
                           DepthState::from_checkpoint(depth_ckpt));
  });
  auto log = run_twin(s, {cfg, data, cfg.seed, "seg", 0, cfg.iterations, cfg.adam.lr},
                      cfg.adversarial_seg, seg_step);
  recalibrate(s, data, cfg);
  const auto path = checkpoint_path(cfg.out_dir, Stage::kSeg);
  save_checkpoint(s.to_checkpoint(Stage::kSeg, cfg.seed), path);
  finish_log(log, cfg, path);
  return log;
}

std::vector<TrainLog> finetune(const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.resume) throw ConfigError("fine-tuning cannot be resumed; rerun it");
  const auto da_ckpt = load_prerequisite(checkpoint_path(cfg.out_dir, Stage::kDomainAdapt),
                                         "domain adaptation");
  const auto depth_ckpt =
      load_prerequisite(checkpoint_path(cfg.out_dir, Stage::kDepth), "depth");
  const auto seg_ckpt =
      load_prerequisite(checkpoint_path(cfg.out_dir, Stage::kSeg), "segmentation");

  const auto refined =
      split_refined(load_training_manifest(cfg), cfg.refined_train, cfg.refined_test,
                    mix_seed(cfg.seed, 0x8EF1)).first;
  const TrainingData data(refined, cfg.model.num_classes);
  const std::uint64_t data_seed = mix_seed(cfg.seed, 0xF7);
  const double lr = cfg.adam.lr * cfg.finetune_lr_scale;
  // Iteration counters continue from the source checkpoints; fine-tuning runs
  // `cfg.iterations` more.

  std::vector<TrainLog> logs;
  auto da = DaState::from_checkpoint(da_ckpt);
  da.opt_gen->set_lr(lr);
  da.opt_disc->set_lr(lr);
  if (cfg.iterations > 0) {
    for (Domain d : {Domain::kNormal, Domain::kFoggy}) {
      if (data.count(d) == 0) {
        throw DatasetError("refined split has no " + to_string(d) + " images");
      }
    }
  }
  logs.push_back(run_da(da, {cfg, data, data_seed, "da_ft", da.iteration,
                             da.iteration + cfg.iterations, lr}));
  const auto da_path = checkpoint_path(cfg.out_dir, Stage::kDomainAdapt, true);
  save_checkpoint(da.to_checkpoint(Stage::kFinetune, cfg.seed), da_path);
  finish_log(logs.back(), cfg, da_path);

  auto depth = DepthState::from_checkpoint(depth_ckpt);
  check_depth_available(data);
  depth.opt_net->set_lr(lr);
  depth.opt_disc->set_lr(lr);
  logs.push_back(run_twin(depth,
                          {cfg, data, data_seed, "depth_ft", depth.iteration,
                           depth.iteration + cfg.iterations, lr},
                          cfg.adversarial_depth, depth_step));
  if (cfg.iterations > 0) recalibrate(depth, data, cfg);
  const auto depth_path = checkpoint_path(cfg.out_dir, Stage::kDepth, true);
  save_checkpoint(depth.to_checkpoint(Stage::kFinetune, cfg.seed), depth_path);
  finish_log(logs.back(), cfg, depth_path);

  auto seg = SegState::from_checkpoint(seg_ckpt);
  // The segmentation stage consumes the fine-tuned translator and depth model.
  seg.gen_xy = da.pair.gen_xy;
  seg.depth_net = depth.net;
  seg.depth_norms = depth.norms;
  freeze(*seg.gen_xy);
  freeze(*seg.depth_net);
  seg.opt_net->set_lr(lr);
  seg.opt_disc->set_lr(lr);
  logs.push_back(run_twin(seg,
                          {cfg, data, data_seed, "seg_ft", seg.iteration,
                           seg.iteration + cfg.iterations, lr},
                          cfg.adversarial_seg, seg_step));
  if (cfg.iterations > 0) recalibrate(seg, data, cfg);
  const auto seg_path = checkpoint_path(cfg.out_dir, Stage::kSeg, true);
  save_checkpoint(seg.to_checkpoint(Stage::kFinetune, cfg.seed), seg_path);
  finish_log(logs.back(), cfg, seg_path);
  return logs;
}

std::vector<TrainLog> run_stage(const TrainConfig& cfg) {
  switch (cfg.stage) {
    case Stage::kDomainAdapt: return {train_domain_adaptation(cfg)};
    case Stage::kDepth: return {train_depth(cfg)};
    case Stage::kSeg:
      return {train_segmentation(cfg, checkpoint_path(cfg.out_dir, Stage::kDomainAdapt),
                                 checkpoint_path(cfg.out_dir, Stage::kDepth))};
    case Stage::kFinetune: return finetune(cfg);
  }
  throw ConfigError("unknown stage");
}

}  // namespace fogscene
