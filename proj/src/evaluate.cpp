#include "fogscene/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "fogscene/image_io.hpp"

namespace fogscene {

namespace fs = std::filesystem;

Predictor::Predictor(const fs::path& checkpoint)
    : Predictor(SegState::from_checkpoint(load_checkpoint(checkpoint))) {}

Predictor::Predictor(SegState state) : state_(std::move(state)) {
  state_.net->eval();
  state_.gen_xy->eval();
  state_.depth_net->eval();
}

Prediction Predictor::predict(const Image& rgb, bool apply_da, Domain domain) {
  if (rgb.channels != 3) throw ContractError("predict expects an RGB image");
  const Resolution original = rgb.resolution();
  const auto x = to_tensor(resize_bilinear(rgb, resolution()));

  torch::NoGradGuard guard;
  state_.net->eval();
  state_.norms.apply(*state_.net, domain);
  const auto in = prepare_seg_inputs(state_, x, domain, apply_da);
  const auto out = state_.net->forward(in.rgb, in.lum, in.depth_code);

  Prediction p;
  const auto labels = out.seg_logits.argmax(1)[0].to(torch::kUInt8).contiguous();
  LabelMap lm(static_cast<int>(labels.size(0)), static_cast<int>(labels.size(1)), 1);
  std::copy_n(labels.data_ptr<std::uint8_t>(), lm.data.size(), lm.data.begin());
  p.labels = resize_nearest(lm, original);

  const auto depth =
      models::code_to_depth(out.depth_full).clamp(kMinDepthMeters, kMaxDepthMeters);
  p.depth_m = resize_bilinear(to_image(depth), original);
  if (apply_da) p.translated = resize_bilinear(to_image(in.rgb), original);
  return p;
}

Image Predictor::translate(const Image& rgb) {
  const auto x = to_tensor(resize_bilinear(rgb, resolution()));
  return resize_bilinear(to_image(models::translate(*state_.gen_xy, x)),
                         rgb.resolution());
}

void write_prediction(const Prediction& p, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  if (p.translated) write_png8(out_dir / "translated.png", quantize8(*p.translated));
  Grid<std::uint8_t> color(p.labels.height, p.labels.width, 3);
  const auto& palette = class_palette();
  for (std::size_t i = 0; i < p.labels.data.size(); ++i) {
    const auto& c = palette[p.labels.data[i] % palette.size()];
    for (int ch = 0; ch < 3; ++ch) color.data[i * 3 + ch] = static_cast<std::uint8_t>(c[ch]);
  }
  write_png8(out_dir / "labels.png", color);
  write_png8(out_dir / "labels_raw.png", p.labels);
  write_png16(out_dir / "depth.png", encode_depth16(p.depth_m));
}

Prediction infer(const fs::path& checkpoint, const fs::path& image, const fs::path& out_dir,
                 bool apply_da, Domain domain) {
  Predictor predictor(checkpoint);
  auto raw = read_png8(image);
  if (raw.channels == 1) {
    Grid<std::uint8_t> rgb(raw.height, raw.width, 3);
    for (std::size_t i = 0; i < raw.data.size(); ++i) {
      for (int c = 0; c < 3; ++c) rgb.data[i * 3 + c] = raw.data[i];
    }
    raw = std::move(rgb);
  }
  auto p = predictor.predict(dequantize8(raw), apply_da, domain);
  write_prediction(p, out_dir);
  return p;
}

EvalReport evaluate(Predictor& predictor, const DatasetManifest& manifest,
                    const EvalOptions& opt) {
  const auto selected = manifest.filter(opt.split, opt.domain);
  if (selected.size() == 0) {
    throw DatasetError("no " + to_string(opt.domain) + " samples in the " +
                       to_string(opt.split) + " split");
  }
  const int k = predictor.num_classes();
  ConfusionMatrix cm(k);
  DepthAccumulator depth;
  for (const auto& e : selected.entries) {
    const auto s = load_sample(e, k);
    Prediction p;
    if (opt.oracle) {
      p.labels = s.labels;
      for (auto& v : p.labels.data) {
        if (v == kIgnoreLabel) v = 0;
      }
      p.depth_m = s.depth;
    } else {
      p = predictor.predict(s.rgb, opt.apply_da, e.domain);
    }
    for (auto& d : p.depth_m.data) d = std::clamp(d, kMinDepthMeters, kMaxDepthMeters);
    accumulate_confusion(cm, p.labels, s.labels);
    depth.add(p.depth_m, s.depth);
  }
  EvalReport r;
  r.seg = segmentation_metrics(cm);
  r.depth = depth.result();
  r.samples = static_cast<std::int64_t>(selected.size());
  r.apply_da = opt.apply_da;
  return r;
}

EvalReport evaluate(const fs::path& checkpoint, const DatasetManifest& manifest,
                    const EvalOptions& opt) {
  Predictor predictor(checkpoint);
  return evaluate(predictor, manifest, opt);
}

namespace {

double mean_abs_diff(const Image& a, const Image& b) {
  if (a.data.size() != b.data.size()) throw ContractError("image size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
  return s / static_cast<double>(a.data.size());
}

}  // namespace

TranslationError translation_error(Predictor& predictor, const DatasetManifest& manifest,
                                   Split split) {
  std::map<std::string, const ManifestEntry*> clear;
  for (const auto& e : manifest.entries) {
    if (e.split == split && e.domain == Domain::kNormal) clear[e.scene] = &e;
  }
  TranslationError r;
  const int k = predictor.num_classes();
  for (const auto& e : manifest.entries) {
    if (e.split != split || e.domain != Domain::kFoggy) continue;
    const auto it = clear.find(e.scene);
    if (it == clear.end()) continue;
    const auto foggy = load_sample(e, k);
    const auto gt = load_sample(*it->second, k);
    r.foggy_mae += mean_abs_diff(foggy.rgb, gt.rgb);
    r.translated_mae += mean_abs_diff(predictor.translate(foggy.rgb), gt.rgb);
    ++r.pairs;
  }
  if (r.pairs == 0) throw DatasetError("no foggy/clear pairs in the selected split");
  r.foggy_mae /= static_cast<double>(r.pairs);
  r.translated_mae /= static_cast<double>(r.pairs);
  return r;
}

}  // namespace fogscene
