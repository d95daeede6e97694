#pragma once

// Scene samples: procedural generation, fog synthesis, augmentation and the
// on-disk dataset layouts (synthetic layout and Cityscapes convention).

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fogscene/errors.hpp"

namespace fogscene {

inline constexpr std::uint8_t kIgnoreLabel = 255;
inline constexpr double kMinDepthMeters = 1.0;
inline constexpr double kMaxDepthMeters = 80.0;
inline constexpr std::array<double, 3> kLumaCoefficients{0.299, 0.587, 0.114};
inline constexpr std::array<double, 3> kDefaultAtmosphere{0.9, 0.9, 0.92};

enum class Domain { kNormal, kFoggy };
enum class Split { kTrain, kTest };

std::string to_string(Domain d);
std::string to_string(Split s);
Domain parse_domain(const std::string& s);
Split parse_split(const std::string& s);

struct Resolution {
  int height = 0;
  int width = 0;
  friend bool operator==(const Resolution&, const Resolution&) = default;
};

/// Dense row-major H×W×C array.
template <typename T>
struct Grid {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<T> data;

  Grid() = default;
  Grid(int h, int w, int c, T fill = T{})
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t index(int y, int x, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  T& at(int y, int x, int c = 0) { return data[index(y, x, c)]; }
  const T& at(int y, int x, int c = 0) const { return data[index(y, x, c)]; }
  Resolution resolution() const { return {height, width}; }

  friend bool operator==(const Grid&, const Grid&) = default;
};

using Image = Grid<double>;
using LabelMap = Grid<std::uint8_t>;

struct FogParams {
  double beta = 0.0;  // extinction coefficient, 1/m
  std::array<double, 3> atmosphere = kDefaultAtmosphere;
  friend bool operator==(const FogParams&, const FogParams&) = default;
};

struct SceneSample {
  Image rgb;        // 3 channels in [0,1]
  Image depth;      // meters, 0 marks an invalid pixel
  LabelMap labels;  // class index or kIgnoreLabel
  Image luminance;  // 1 channel in [0,1]
  Domain domain = Domain::kNormal;
  std::string id;
  std::optional<FogParams> fog;

  friend bool operator==(const SceneSample&, const SceneSample&) = default;
};

/// Throws ContractError when a sample breaks its invariants: mismatched
/// spatial sizes, values outside [0,1], negative depth or labels that are
/// neither below `num_classes` nor the ignore sentinel.
void validate_sample(const SceneSample& s, int num_classes);

/// splitmix64 stream. Independent of the standard library's distribution
/// implementations so samples are reproducible on every toolchain.
class SplitMix {
 public:
  explicit SplitMix(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi_inclusive);

 private:
  std::uint64_t state_;
};

/// Mixes several integers into one seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

/// Renders a scene made of a sky band, a perspective ground plane and
/// axis-aligned boxes standing on the ground. Depth follows a pinhole camera
/// over the ground plane and is clamped to [1, 80] m.
SceneSample generate_scene(std::uint64_t seed, Resolution res, int num_classes);

/// Homogeneous atmospheric scattering I = J·t + A·(1 − t), t = exp(−β·d).
/// Pixels with invalid depth are left untouched.
SceneSample synthesize_fog(const SceneSample& sample, const FogParams& fog);

/// Draws β uniformly from [beta_min, beta_max].
FogParams sample_fog(std::uint64_t seed, double beta_min, double beta_max,
                     std::array<double, 3> atmosphere = kDefaultAtmosphere);

/// Cityscapes colours of the 19 train ids, used for rendering and for
/// colour-coded label maps.
const std::array<std::array<int, 3>, 19>& class_palette();

/// BT.601 luma.
Image to_luminance(const Image& rgb);

enum class FlipMode { kRandom, kForce, kNever };

/// Random horizontal flip (probability 0.5, seeded) of every spatial field,
/// then resize to `target` (bilinear for rgb, luminance and depth; nearest
/// neighbour for labels).
SceneSample augment(const SceneSample& sample, std::uint64_t seed,
                    Resolution target, FlipMode mode = FlipMode::kRandom);

SceneSample flip_horizontal(const SceneSample& sample);
Image resize_bilinear(const Image& src, Resolution target);
LabelMap resize_nearest(const LabelMap& src, Resolution target);

// ---------------------------------------------------------------------------
// Datasets on disk

struct ManifestEntry {
  std::string id;
  Split split = Split::kTrain;
  Domain domain = Domain::kNormal;
  std::string scene;  // shared by the normal and foggy rendering of a scene
  std::optional<FogParams> fog;
  std::filesystem::path rgb_path;
  std::filesystem::path depth_path;   // empty when absent
  std::filesystem::path labels_path;  // empty when absent
  bool depth_is_disparity = false;    // Cityscapes disparity encoding
};

struct DatasetManifest {
  std::filesystem::path root;
  Resolution resolution;
  int num_classes = 0;
  std::vector<ManifestEntry> entries;
  int warnings = 0;  // samples skipped because a modality was missing

  std::size_t size() const { return entries.size(); }
  DatasetManifest filter(std::optional<Split> split,
                         std::optional<Domain> domain) const;
  const ManifestEntry* find(const std::string& id) const;
};

struct SyntheticDatasetOptions {
  int num_train = 32;
  int num_test = 8;
  Resolution resolution{128, 256};
  int num_classes = 5;
  double beta_min = 0.05;
  double beta_max = 0.3;
  double test_beta_min = 0.05;
  double test_beta_max = 0.3;
  std::array<double, 3> atmosphere = kDefaultAtmosphere;
  std::uint64_t seed = 0;
};

/// Throws ConfigError for counts, resolutions or fog ranges that cannot be
/// generated.
void validate_options(const SyntheticDatasetOptions& opt);

/// Paired NORMAL/FOGGY renderings of `num_train + num_test` scenes, in memory.
/// Ids are `s0000_normal`, `s0000_foggy`, ...; scene `s0000`.
struct SyntheticCorpus {
  std::vector<SceneSample> samples;
  std::vector<Split> splits;
};
SyntheticCorpus generate_corpus(const SyntheticDatasetOptions& opt);

/// Writes `<root>/<split>/{rgb,depth,labels}/<id>.png` and
/// `<root>/manifest.json` and returns the manifest.
DatasetManifest write_dataset(const std::filesystem::path& root,
                              const SyntheticCorpus& corpus,
                              Resolution resolution, int num_classes);

/// Reads `<root>/manifest.json` of the synthetic layout. Every referenced
/// file must exist.
DatasetManifest load_dataset(const std::filesystem::path& root);

/// Scans `leftImg8bit/` (or `leftImg8bit_foggy/` for FOGGY),
/// `gtFine/*_labelTrainIds.png` and `disparity/`. Images lacking labels or
/// disparity are skipped and counted in `warnings`.
DatasetManifest load_cityscapes_layout(const std::filesystem::path& root,
                                       Domain domain);

/// Deterministic disjoint train/test subsets of the requested sizes.
std::pair<DatasetManifest, DatasetManifest> split_refined(
    const DatasetManifest& manifest, int train_count, int test_count,
    std::uint64_t seed);

/// Reads one entry's files into a validated sample.
SceneSample load_sample(const ManifestEntry& entry, int num_classes);

}  // namespace fogscene
