#include "fogscene/fogdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <regex>

#include "json.hpp"

#include "fogscene/image_io.hpp"

namespace fogscene {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Domain d) {
  return d == Domain::kNormal ? "normal" : "foggy";
}
std::string to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

Domain parse_domain(const std::string& s) {
  if (s == "normal") return Domain::kNormal;
  if (s == "foggy") return Domain::kFoggy;
  throw ConfigError("unknown domain '" + s + "'");
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split '" + s + "'");
}

std::uint64_t SplitMix::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

int SplitMix::uniform_int(int lo, int hi_inclusive) {
  const auto span = static_cast<std::uint64_t>(hi_inclusive - lo + 1);
  return lo + static_cast<int>(next() % span);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  SplitMix m(a);
  std::uint64_t h = m.next() ^ (b * 0xD6E8FEB86659FD93ull);
  SplitMix m2(h);
  return m2.next() ^ (c * 0x9E3779B97F4A7C15ull + 0x632BE59BD9B4E019ull);
}

void validate_sample(const SceneSample& s, int num_classes) {
  const Resolution r = s.rgb.resolution();
  if (s.rgb.channels != 3) throw ContractError("rgb must have 3 channels");
  if (s.depth.resolution() != r || s.labels.resolution() != r ||
      s.luminance.resolution() != r) {
    throw ContractError("sample '" + s.id + "': spatial sizes differ");
  }
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!std::all_of(s.rgb.data.begin(), s.rgb.data.end(), in_unit) ||
      !std::all_of(s.luminance.data.begin(), s.luminance.data.end(), in_unit)) {
    throw ContractError("sample '" + s.id + "': intensity outside [0,1]");
  }
  for (double d : s.depth.data) {
    if (!(d >= 0.0) || !std::isfinite(d)) {
      throw ContractError("sample '" + s.id + "': negative or non-finite depth");
    }
  }
  for (std::uint8_t l : s.labels.data) {
    if (l != kIgnoreLabel && l >= num_classes) {
      throw ContractError("sample '" + s.id + "': label " + std::to_string(l) +
                          " out of range");
    }
  }
}

namespace {

// Cityscapes trainId palette, used as the base colour of each synthetic class.
constexpr std::array<std::array<int, 3>, 19> kPalette{{
    {70, 130, 180},  {128, 64, 128}, {70, 70, 70},    {0, 0, 142},
    {107, 142, 35},  {220, 20, 60},  {250, 170, 30},  {244, 35, 232},
    {102, 102, 156}, {190, 153, 153}, {153, 153, 153}, {220, 220, 0},
    {152, 251, 152}, {255, 0, 0},    {0, 0, 70},      {0, 60, 100},
    {0, 80, 100},    {0, 0, 230},    {119, 11, 32},
}};

constexpr double kCameraHeight = 1.5;  // meters
constexpr double kFocalPerWidth = 0.5;  // focal length in units of image width

void check_resolution(Resolution r) {
  if (r.height <= 0 || r.width <= 0 || r.height % 8 != 0 || r.width % 8 != 0) {
    throw ConfigError("resolution " + std::to_string(r.height) + "x" +
                      std::to_string(r.width) +
                      " must be positive and divisible by 8");
  }
}

double ground_depth(double row_center, double horizon, double focal) {
  const double below = row_center - horizon;
  if (below <= 0.0) return kMaxDepthMeters;
  return std::clamp(focal * kCameraHeight / below, kMinDepthMeters,
                    kMaxDepthMeters);
}

}  // namespace

SceneSample generate_scene(std::uint64_t seed, Resolution res,
                           int num_classes) {
  check_resolution(res);
  if (num_classes < 2 || num_classes > 19) {
    throw ConfigError("num_classes must be in [2, 19], got " +
                      std::to_string(num_classes));
  }
  const int H = res.height, W = res.width;
  SplitMix rng(mix_seed(seed, 0x5CE7E));
  const double focal = kFocalPerWidth * W;
  const double horizon = H * rng.uniform(0.35, 0.5);

  SceneSample s;
  s.id = "scene_" + std::to_string(seed);
  s.domain = Domain::kNormal;
  s.rgb = Image(H, W, 3);
  s.depth = Image(H, W, 1);
  s.labels = LabelMap(H, W, 1);

  std::array<std::array<double, 3>, 19> colors{};
  for (int k = 0; k < 19; ++k) {
    for (int c = 0; c < 3; ++c) {
      colors[k][c] = std::clamp(kPalette[k][c] / 255.0 + rng.uniform(-0.06, 0.06),
                                0.0, 1.0);
    }
  }

  auto paint = [&](int y, int x, int cls, double depth, double shade) {
    s.labels.at(y, x) = static_cast<std::uint8_t>(cls);
    s.depth.at(y, x) = depth;
    for (int c = 0; c < 3; ++c) {
      s.rgb.at(y, x, c) =
          std::clamp(colors[cls][c] * shade + rng.uniform(-0.02, 0.02), 0.0, 1.0);
    }
  };

  for (int y = 0; y < H; ++y) {
    const double rc = y + 0.5;
    for (int x = 0; x < W; ++x) {
      if (rc <= horizon) {
        paint(y, x, 0, kMaxDepthMeters, 0.85 + 0.15 * rc / horizon);
      } else {
        const double d = ground_depth(rc, horizon, focal);
        paint(y, x, 1, d, 0.75 + 0.25 * (1.0 - d / kMaxDepthMeters));
      }
    }
  }

  struct Box {
    int cls, top, bottom, left, right;
    double depth;
  };
  std::vector<Box> boxes;
  if (num_classes > 2) {
    const int first_ground_row = static_cast<int>(std::floor(horizon + 0.5));
    const int n = rng.uniform_int(3, 7);
    for (int i = 0; i < n; ++i) {
      Box b{};
      b.cls = rng.uniform_int(2, num_classes - 1);
      // Log-uniform distance keeps near objects from filling the frame.
      const double dist = std::exp(rng.uniform(std::log(5.0), std::log(60.0)));
      b.bottom = std::clamp(static_cast<int>(horizon + focal * kCameraHeight / dist),
                            std::min(first_ground_row, H - 1), H - 1);
      b.depth = ground_depth(b.bottom + 0.5, horizon, focal);
      const double height_m = rng.uniform(1.5, 6.0);
      const double width_m = rng.uniform(1.5, 8.0);
      const int hpx = std::max(2, static_cast<int>(focal * height_m / b.depth));
      const int wpx = std::max(2, static_cast<int>(focal * width_m / b.depth));
      b.top = std::max(0, b.bottom - hpx + 1);
      const int cx = rng.uniform_int(0, W - 1);
      b.left = std::max(0, cx - wpx / 2);
      b.right = std::min(W - 1, cx + wpx / 2);
      boxes.push_back(b);
    }
    // Painter's order: far boxes first.
    std::stable_sort(boxes.begin(), boxes.end(),
                     [](const Box& a, const Box& b) { return a.depth > b.depth; });
    for (const Box& b : boxes) {
      for (int y = b.top; y <= b.bottom; ++y) {
        for (int x = b.left; x <= b.right; ++x) {
          const double shade = 0.8 + 0.2 * (y - b.top + 1) / (b.bottom - b.top + 1);
          paint(y, x, b.cls, b.depth, shade);
        }
      }
    }
  }
  s.luminance = to_luminance(s.rgb);
  return s;
}

const std::array<std::array<int, 3>, 19>& class_palette() { return kPalette; }

Image to_luminance(const Image& rgb) {
  if (rgb.channels != 3) throw ContractError("to_luminance expects 3 channels");
  Image out(rgb.height, rgb.width, 1);
  for (int y = 0; y < rgb.height; ++y) {
    for (int x = 0; x < rgb.width; ++x) {
      double v = kLumaCoefficients[0] * rgb.at(y, x, 0) +
                 kLumaCoefficients[1] * rgb.at(y, x, 1) +
                 kLumaCoefficients[2] * rgb.at(y, x, 2);
      out.at(y, x) = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

SceneSample synthesize_fog(const SceneSample& sample, const FogParams& fog) {
  if (!(fog.beta >= 0.0)) {
    throw ConfigError("fog beta must be >= 0, got " + std::to_string(fog.beta));
  }
  for (double a : fog.atmosphere) {
    if (!(a >= 0.0 && a <= 1.0)) {
      throw ConfigError("atmosphere components must lie in [0,1]");
    }
  }
  SceneSample out = sample;
  for (int y = 0; y < sample.rgb.height; ++y) {
    for (int x = 0; x < sample.rgb.width; ++x) {
      const double d = sample.depth.at(y, x);
      if (d <= 0.0) continue;
      const double t = std::exp(-fog.beta * d);
      for (int c = 0; c < 3; ++c) {
        out.rgb.at(y, x, c) =
            sample.rgb.at(y, x, c) * t + fog.atmosphere[c] * (1.0 - t);
      }
    }
  }
  out.luminance = to_luminance(out.rgb);
  out.domain = Domain::kFoggy;
  out.fog = fog;
  return out;
}

FogParams sample_fog(std::uint64_t seed, double beta_min, double beta_max,
                     std::array<double, 3> atmosphere) {
  if (!(beta_min >= 0.0) || beta_max < beta_min) {
    throw ConfigError("fog beta range must satisfy 0 <= min <= max");
  }
  SplitMix rng(mix_seed(seed, 0xF06));
  return FogParams{rng.uniform(beta_min, beta_max), atmosphere};
}

namespace {

template <typename T>
Grid<T> flip_grid(const Grid<T>& g) {
  Grid<T> out(g.height, g.width, g.channels);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      for (int c = 0; c < g.channels; ++c) {
        out.at(y, g.width - 1 - x, c) = g.at(y, x, c);
      }
    }
  }
  return out;
}

}  // namespace

SceneSample flip_horizontal(const SceneSample& sample) {
  SceneSample out = sample;
  out.rgb = flip_grid(sample.rgb);
  out.depth = flip_grid(sample.depth);
  out.labels = flip_grid(sample.labels);
  out.luminance = flip_grid(sample.luminance);
  return out;
}

Image resize_bilinear(const Image& src, Resolution target) {
  if (src.resolution() == target) return src;
  Image out(target.height, target.width, src.channels);
  const double sy = static_cast<double>(src.height) / target.height;
  const double sx = static_cast<double>(src.width) / target.width;
  for (int y = 0; y < target.height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < target.width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        const double top = src.at(y0, x0, c) * (1 - wx) + src.at(y0, x1, c) * wx;
        const double bot = src.at(y1, x0, c) * (1 - wx) + src.at(y1, x1, c) * wx;
        out.at(y, x, c) = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

LabelMap resize_nearest(const LabelMap& src, Resolution target) {
  if (src.resolution() == target) return src;
  LabelMap out(target.height, target.width, src.channels);
  for (int y = 0; y < target.height; ++y) {
    const int sy = std::min(src.height - 1, static_cast<int>((y + 0.5) *
                                                             src.height /
                                                             target.height));
    for (int x = 0; x < target.width; ++x) {
      const int sx = std::min(src.width - 1, static_cast<int>((x + 0.5) *
                                                              src.width /
                                                              target.width));
      for (int c = 0; c < src.channels; ++c) out.at(y, x, c) = src.at(sy, sx, c);
    }
  }
  return out;
}

SceneSample augment(const SceneSample& sample, std::uint64_t seed,
                    Resolution target, FlipMode mode) {
  const Resolution source = sample.rgb.resolution();
  check_resolution(target);
  check_resolution(source);
  if (target.height > source.height || target.width > source.width) {
    throw ContractError("augment cannot upsample");
  }
  bool flip = mode == FlipMode::kForce;
  if (mode == FlipMode::kRandom) {
    SplitMix rng(mix_seed(seed, 0xF11B));
    flip = rng.uniform() < 0.5;
  }
  SceneSample out = flip ? flip_horizontal(sample) : sample;
  if (target != source) {
    out.rgb = resize_bilinear(out.rgb, target);
    out.luminance = resize_bilinear(out.luminance, target);
    out.depth = resize_bilinear(out.depth, target);
    out.labels = resize_nearest(out.labels, target);
  }
  return out;
}

// ---------------------------------------------------------------------------

DatasetManifest DatasetManifest::filter(std::optional<Split> split,
                                        std::optional<Domain> domain) const {
  DatasetManifest out = *this;
  out.entries.clear();
  for (const auto& e : entries) {
    if (split && e.split != *split) continue;
    if (domain && e.domain != *domain) continue;
    out.entries.push_back(e);
  }
  return out;
}

const ManifestEntry* DatasetManifest::find(const std::string& id) const {
  for (const auto& e : entries) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

void validate_options(const SyntheticDatasetOptions& opt) {
  if (opt.num_train < 1 || opt.num_test < 0) {
    throw ConfigError("need num_train >= 1 and num_test >= 0 (got " +
                      std::to_string(opt.num_train) + ", " + std::to_string(opt.num_test) +
                      ")");
  }
  check_resolution(opt.resolution);
  if (opt.num_classes < 2 || opt.num_classes > 19) {
    throw ConfigError("num_classes must be in [2, 19]");
  }
  if (opt.beta_min < 0 || opt.beta_max < opt.beta_min || opt.test_beta_min < 0 ||
      opt.test_beta_max < opt.test_beta_min) {
    throw ConfigError("fog beta ranges must satisfy 0 <= min <= max");
  }
  for (double a : opt.atmosphere) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("atmosphere outside [0,1]");
  }
}

SyntheticCorpus generate_corpus(const SyntheticDatasetOptions& opt) {
  validate_options(opt);
  SyntheticCorpus corpus;
  const int total = opt.num_train + opt.num_test;
  for (int i = 0; i < total; ++i) {
    const bool train = i < opt.num_train;
    char scene[16];
    std::snprintf(scene, sizeof(scene), "s%04d", i);
    SceneSample clear = generate_scene(mix_seed(opt.seed, 0xC1EA, i),
                                       opt.resolution, opt.num_classes);
    clear.id = std::string(scene) + "_normal";
    const FogParams fog =
        train ? sample_fog(mix_seed(opt.seed, 0xF0, i), opt.beta_min,
                           opt.beta_max, opt.atmosphere)
              : sample_fog(mix_seed(opt.seed, 0xF0, i), opt.test_beta_min,
                           opt.test_beta_max, opt.atmosphere);
    SceneSample foggy = synthesize_fog(clear, fog);
    foggy.id = std::string(scene) + "_foggy";
    const Split split = train ? Split::kTrain : Split::kTest;
    corpus.samples.push_back(std::move(clear));
    corpus.splits.push_back(split);
    corpus.samples.push_back(std::move(foggy));
    corpus.splits.push_back(split);
  }
  return corpus;
}

namespace {

std::string scene_of(const std::string& id) {
  const auto pos = id.rfind('_');
  return pos == std::string::npos ? id : id.substr(0, pos);
}

json fog_to_json(const FogParams& f) {
  return json{{"beta", f.beta},
              {"atmosphere", {f.atmosphere[0], f.atmosphere[1], f.atmosphere[2]}}};
}

FogParams fog_from_json(const json& j) {
  FogParams f;
  f.beta = j.at("beta").get<double>();
  const auto a = j.at("atmosphere").get<std::vector<double>>();
  if (a.size() != 3) throw FormatError("atmosphere must have 3 components");
  std::copy(a.begin(), a.end(), f.atmosphere.begin());
  return f;
}

}  // namespace

DatasetManifest write_dataset(const fs::path& root, const SyntheticCorpus& corpus,
                              Resolution resolution, int num_classes) {
  DatasetManifest m;
  m.root = root;
  m.resolution = resolution;
  m.num_classes = num_classes;
  json samples = json::array();
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const SceneSample& s = corpus.samples[i];
    validate_sample(s, num_classes);
    const std::string split = to_string(corpus.splits[i]);
    for (const char* sub : {"rgb", "depth", "labels"}) {
      fs::create_directories(root / split / sub);
    }
    ManifestEntry e;
    e.id = s.id;
    e.split = corpus.splits[i];
    e.domain = s.domain;
    e.scene = scene_of(s.id);
    e.fog = s.fog;
    e.rgb_path = root / split / "rgb" / (s.id + ".png");
    e.depth_path = root / split / "depth" / (s.id + ".png");
    e.labels_path = root / split / "labels" / (s.id + ".png");
    write_png8(e.rgb_path, quantize8(s.rgb));
    write_png16(e.depth_path, encode_depth16(s.depth));
    write_png8(e.labels_path, s.labels);

    json j{{"id", e.id},
           {"split", split},
           {"domain", to_string(e.domain)},
           {"scene", e.scene}};
    if (e.fog) j["fog"] = fog_to_json(*e.fog);
    samples.push_back(std::move(j));
    m.entries.push_back(std::move(e));
  }
  json doc{{"format", "fogscene-dataset"},
           {"version", 1},
           {"resolution", {resolution.height, resolution.width}},
           {"num_classes", num_classes},
           {"samples", std::move(samples)}};
  std::ofstream out(root / "manifest.json");
  out << doc.dump(2) << "\n";
  if (!out) throw Error("failed writing " + (root / "manifest.json").string());
  return m;
}

DatasetManifest load_dataset(const fs::path& root) {
  const fs::path path = root / "manifest.json";
  std::ifstream in(path);
  if (!in) throw DatasetError("dataset manifest not found: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.root = root;
  try {
    if (doc.at("format") != "fogscene-dataset") {
      throw FormatError("not a fogscene dataset manifest: " + path.string());
    }
    const auto res = doc.at("resolution").get<std::vector<int>>();
    if (res.size() != 2) throw FormatError("resolution must be [H, W]");
    m.resolution = {res[0], res[1]};
    m.num_classes = doc.at("num_classes").get<int>();
    for (const auto& j : doc.at("samples")) {
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      const std::string split = j.at("split").get<std::string>();
      e.split = parse_split(split);
      e.domain = parse_domain(j.at("domain").get<std::string>());
      e.scene = j.value("scene", scene_of(e.id));
      if (j.contains("fog")) e.fog = fog_from_json(j.at("fog"));
      e.rgb_path = root / split / "rgb" / (e.id + ".png");
      e.depth_path = root / split / "depth" / (e.id + ".png");
      e.labels_path = root / split / "labels" / (e.id + ".png");
      if (m.find(e.id)) throw DatasetError("duplicate sample id " + e.id);
      for (const auto* p : {&e.rgb_path, &e.depth_path, &e.labels_path}) {
        if (!fs::exists(*p)) throw DatasetError("missing file " + p->string());
      }
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
  if (m.entries.empty()) throw DatasetError("dataset is empty: " + root.string());
  return m;
}

DatasetManifest load_cityscapes_layout(const fs::path& root, Domain domain) {
  if (!fs::is_directory(root)) {
    throw DatasetError("dataset root is not a directory: " + root.string());
  }
  const bool foggy = domain == Domain::kFoggy;
  const fs::path images = root / (foggy ? "leftImg8bit_foggy" : "leftImg8bit");
  const std::regex pattern(foggy ? R"((.+)_leftImg8bit_foggy_beta_([0-9.]+)\.png)"
                                 : R"((.+)_leftImg8bit\.png)");
  DatasetManifest m;
  m.root = root;
  m.num_classes = 19;
  if (!fs::is_directory(images)) {
    throw DatasetError("no images under " + images.string());
  }
  std::vector<fs::path> files;
  for (const auto& f : fs::recursive_directory_iterator(images)) {
    if (f.is_regular_file()) files.push_back(f.path());
  }
  std::sort(files.begin(), files.end());
  for (const fs::path& f : files) {
    std::smatch match;
    const std::string name = f.filename().string();
    if (!std::regex_match(name, match, pattern)) continue;
    const fs::path rel = fs::relative(f.parent_path(), images);  // split/city
    const std::string split_name = rel.begin()->string();
    Split split;
    if (split_name == "train") {
      split = Split::kTrain;
    } else if (split_name == "val" || split_name == "test") {
      split = Split::kTest;
    } else {
      continue;
    }
    const std::string stem = match[1];
    ManifestEntry e;
    e.id = foggy ? stem + "_beta_" + std::string(match[2]) : stem;
    e.scene = stem;
    e.split = split;
    e.domain = domain;
    if (foggy) e.fog = FogParams{std::stod(match[2]), kDefaultAtmosphere};
    e.rgb_path = f;
    e.labels_path = root / "gtFine" / rel / (stem + "_gtFine_labelTrainIds.png");
    e.depth_path = root / "disparity" / rel / (stem + "_disparity.png");
    e.depth_is_disparity = true;
    if (!fs::exists(e.labels_path) || !fs::exists(e.depth_path)) {
      ++m.warnings;
      continue;
    }
    m.entries.push_back(std::move(e));
  }
  if (m.entries.empty()) {
    throw DatasetError("no complete image/label/disparity triples under " +
                       root.string());
  }
  const auto first = read_png8(m.entries.front().rgb_path);
  m.resolution = first.resolution();
  return m;
}

std::pair<DatasetManifest, DatasetManifest> split_refined(
    const DatasetManifest& manifest, int train_count, int test_count,
    std::uint64_t seed) {
  if (train_count < 0 || test_count < 0) {
    throw ConfigError("split counts must be non-negative");
  }
  const std::size_t need = static_cast<std::size_t>(train_count) + test_count;
  if (need > manifest.size()) {
    throw DatasetError("refined split needs " + std::to_string(need) +
                       " samples but the dataset has " +
                       std::to_string(manifest.size()));
  }
  std::vector<std::size_t> order(manifest.size());
  std::iota(order.begin(), order.end(), 0);
  SplitMix rng(mix_seed(seed, 0x5B11));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.next() % i]);
  }
  DatasetManifest train = manifest, test = manifest;
  train.entries.clear();
  test.entries.clear();
  for (std::size_t i = 0; i < need; ++i) {
    ManifestEntry e = manifest.entries[order[i]];
    if (i < static_cast<std::size_t>(train_count)) {
      e.split = Split::kTrain;
      train.entries.push_back(std::move(e));
    } else {
      e.split = Split::kTest;
      test.entries.push_back(std::move(e));
    }
  }
  return {std::move(train), std::move(test)};
}

SceneSample load_sample(const ManifestEntry& entry, int num_classes) {
  SceneSample s;
  s.id = entry.id;
  s.domain = entry.domain;
  s.fog = entry.fog;
  auto rgb8 = read_png8(entry.rgb_path);
  if (rgb8.channels == 1) {
    Grid<std::uint8_t> rgb(rgb8.height, rgb8.width, 3);
    for (std::size_t i = 0; i < rgb8.data.size(); ++i) {
      for (int c = 0; c < 3; ++c) rgb.data[i * 3 + c] = rgb8.data[i];
    }
    rgb8 = std::move(rgb);
  }
  s.rgb = dequantize8(rgb8);
  const Resolution r = s.rgb.resolution();

  if (!entry.depth_path.empty()) {
    const auto raw = read_png16(entry.depth_path);
    if (entry.depth_is_disparity) {
      // Cityscapes: disparity = (p - 1) / 256, depth = baseline * fx / disparity.
      constexpr double kBaselineTimesFocal = 0.209313 * 2262.52;
      s.depth = Image(raw.height, raw.width, 1);
      for (std::size_t i = 0; i < raw.data.size(); ++i) {
        const double disp = (static_cast<double>(raw.data[i]) - 1.0) / 256.0;
        s.depth.data[i] = raw.data[i] > 1 ? kBaselineTimesFocal / disp : 0.0;
      }
    } else {
      s.depth = decode_depth16(raw);
    }
  } else {
    s.depth = Image(r.height, r.width, 1, 0.0);
  }

  if (!entry.labels_path.empty()) {
    s.labels = read_png8(entry.labels_path);
    if (s.labels.channels != 1) {
      throw FormatError("label map must be single-channel: " +
                        entry.labels_path.string());
    }
  } else {
    s.labels = LabelMap(r.height, r.width, 1, kIgnoreLabel);
  }
  s.luminance = to_luminance(s.rgb);
  validate_sample(s, num_classes);
  return s;
}

}  // namespace fogscene
