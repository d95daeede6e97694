#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "fogscene/fogdata.hpp"
#include "fogscene/image_io.hpp"
#include "support/fixtures.hpp"

using namespace fogscene;
using fogscene::testing::TempDir;
namespace fs = std::filesystem;

namespace {

SceneSample flat_sample(double j, double depth, int h = 8, int w = 8) {
  SceneSample s;
  s.rgb = Image(h, w, 3, j);
  s.depth = Image(h, w, 1, depth);
  s.labels = LabelMap(h, w, 1, 1);
  s.luminance = to_luminance(s.rgb);
  s.id = "flat";
  return s;
}

}  // namespace

TEST(Luminance, DecidedCoefficients) {
  Image px(1, 3, 3, 0.0);
  for (int c = 0; c < 3; ++c) px.at(0, 0, c) = 1.0;
  px.at(0, 2, 0) = 1.0;
  const auto y = to_luminance(px);
  EXPECT_NEAR(y.at(0, 0), 1.0, 1e-12);
  EXPECT_EQ(y.at(0, 1), 0.0);
  EXPECT_NEAR(y.at(0, 2), 0.299, 1e-12);
}

TEST(Luminance, MatchesPerPixelDotProduct) {
  const auto s = generate_scene(3, {16, 32}, 5);
  const auto y = to_luminance(s.rgb);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 32; ++c) {
      double dot = 0.0;
      for (int ch = 0; ch < 3; ++ch) dot += kLumaCoefficients[ch] * s.rgb.at(r, c, ch);
      ASSERT_NEAR(y.at(r, c), dot, 1e-12);
    }
  }
}

TEST(Fog, ZeroBetaIsIdentity) {
  const auto s = generate_scene(1, {16, 32}, 5);
  const auto f = synthesize_fog(s, {0.0, kDefaultAtmosphere});
  EXPECT_EQ(f.rgb, s.rgb);
  EXPECT_EQ(f.labels, s.labels);
  EXPECT_EQ(f.depth, s.depth);
}

TEST(Fog, FarFieldConvergesToAtmosphere) {
  const auto f = synthesize_fog(flat_sample(0.2, 80.0), {1.0, {0.7, 0.8, 0.9}});
  // t = e^{-80}: indistinguishable from the atmosphere in double precision.
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(f.rgb.at(3, 3, c), 0.7 + 0.1 * c, 1e-9);
}

TEST(Fog, AnalyticMidpoint) {
  // beta·d = ln 2 gives t = 1/2, so I = 0.2·0.5 + 1·0.5.
  const auto f = synthesize_fog(flat_sample(0.2, 10.0), {std::log(2.0) / 10.0, {1, 1, 1}});
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(f.rgb.at(0, 0, c), 0.6, 1e-12);
}

TEST(Fog, MonotoneInBeta) {
  const auto s = generate_scene(5, {16, 32}, 5);
  std::vector<double> prev(s.rgb.data.size(), 1e9);
  for (double beta : {0.0, 0.02, 0.05, 0.1, 0.2, 0.4, 0.8}) {
    const auto f = synthesize_fog(s, {beta, kDefaultAtmosphere});
    for (std::size_t i = 0; i < f.rgb.data.size(); ++i) {
      const double dist = std::abs(f.rgb.data[i] - kDefaultAtmosphere[i % 3]);
      ASSERT_LE(dist, prev[i] + 1e-15);
      prev[i] = dist;
    }
  }
}

TEST(Fog, LeavesLabelsAndDepthUntouched) {
  const auto s = generate_scene(8, {16, 32}, 5);
  const auto f = synthesize_fog(s, sample_fog(3, 0.05, 0.3));
  EXPECT_EQ(f.labels, s.labels);
  EXPECT_EQ(f.depth, s.depth);
  EXPECT_EQ(f.domain, Domain::kFoggy);
  ASSERT_TRUE(f.fog.has_value());
}

TEST(Fog, InvalidDepthPixelsUnchanged) {
  auto s = flat_sample(0.3, 10.0);
  s.depth.at(2, 2) = 0.0;
  const auto f = synthesize_fog(s, {0.2, kDefaultAtmosphere});
  for (int c = 0; c < 3; ++c) EXPECT_EQ(f.rgb.at(2, 2, c), 0.3);
  EXPECT_NE(f.rgb.at(1, 1, 0), 0.3);
}

TEST(Fog, CommutesWithFlip) {
  const auto s = generate_scene(9, {16, 32}, 5);
  const FogParams fog{0.17, kDefaultAtmosphere};
  EXPECT_EQ(synthesize_fog(flip_horizontal(s), fog), flip_horizontal(synthesize_fog(s, fog)));
}

TEST(Fog, SampledBetaWithinRange) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto f = sample_fog(seed, 0.15, 0.3);
    EXPECT_GE(f.beta, 0.15);
    EXPECT_LE(f.beta, 0.3);
  }
}

TEST(Scene, ReproducibleAndValid) {
  const auto a = generate_scene(42, {32, 64}, 5);
  EXPECT_EQ(a, generate_scene(42, {32, 64}, 5));
  EXPECT_NE(a.rgb, generate_scene(43, {32, 64}, 5).rgb);
  EXPECT_NO_THROW(validate_sample(a, 5));
  for (double d : a.depth.data) {
    EXPECT_GE(d, kMinDepthMeters);
    EXPECT_LE(d, kMaxDepthMeters);
  }
}

TEST(Scene, TopRowIsSkyAndBottomRowIsNear) {
  const auto s = generate_scene(4, {32, 64}, 2);  // sky and ground only
  for (int x = 0; x < 64; ++x) {
    EXPECT_EQ(s.labels.at(0, x), 0);
    EXPECT_EQ(s.depth.at(0, x), kMaxDepthMeters);
    EXPECT_EQ(s.labels.at(31, x), 1);
    EXPECT_LT(s.depth.at(31, x), 10.0);
  }
}

TEST(Scene, RejectsBadArguments) {
  EXPECT_THROW(generate_scene(0, {12, 32}, 5), ConfigError);
  EXPECT_THROW(generate_scene(0, {16, 32}, 1), ConfigError);
  EXPECT_THROW(generate_scene(0, {16, 32}, 20), ConfigError);
}

TEST(Sample, ValidationCatchesBrokenInvariants) {
  auto s = generate_scene(1, {16, 32}, 5);
  auto bad = s;
  bad.labels.at(0, 0) = 7;
  EXPECT_THROW(validate_sample(bad, 5), ContractError);
  bad = s;
  bad.labels.at(0, 0) = kIgnoreLabel;
  EXPECT_NO_THROW(validate_sample(bad, 5));
  bad = s;
  bad.rgb.at(0, 0, 1) = 1.5;
  EXPECT_THROW(validate_sample(bad, 5), ContractError);
  bad = s;
  bad.depth.at(0, 0) = -1.0;
  EXPECT_THROW(validate_sample(bad, 5), ContractError);
  bad = s;
  bad.depth = Image(8, 32, 1, 1.0);
  EXPECT_THROW(validate_sample(bad, 5), ContractError);
}

TEST(Augment, NoFlipSameResolutionIsIdentity) {
  const auto s = generate_scene(2, {16, 32}, 5);
  EXPECT_EQ(augment(s, 0, {16, 32}, FlipMode::kNever), s);
  // Some seed draws "no flip" in random mode; it must be the identity too.
  int identities = 0;
  for (std::uint64_t seed = 0; seed < 16; ++seed) identities += augment(s, seed, {16, 32}) == s;
  EXPECT_GT(identities, 0);
  EXPECT_LT(identities, 16);
}

TEST(Augment, ForcedFlipIsInvolution) {
  const auto s = generate_scene(2, {16, 32}, 5);
  const auto once = augment(s, 0, {16, 32}, FlipMode::kForce);
  EXPECT_NE(once, s);
  EXPECT_EQ(augment(once, 0, {16, 32}, FlipMode::kForce), s);
}

TEST(Augment, FlipMirrorsEveryFieldTogether) {
  const auto s = generate_scene(6, {16, 32}, 5);
  const auto f = flip_horizontal(s);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 32; ++x) {
      ASSERT_EQ(f.labels.at(y, x), s.labels.at(y, 31 - x));
      ASSERT_EQ(f.depth.at(y, x), s.depth.at(y, 31 - x));
      ASSERT_EQ(f.rgb.at(y, x, 2), s.rgb.at(y, 31 - x, 2));
      ASSERT_EQ(f.luminance.at(y, x), s.luminance.at(y, 31 - x));
    }
  }
}

TEST(Augment, DownsampledLabelsComeFromSourceNeighbourhood) {
  const auto s = generate_scene(12, {32, 64}, 5);
  const auto a = augment(s, 0, {16, 32}, FlipMode::kNever);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 32; ++x) {
      std::set<int> hood;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) hood.insert(s.labels.at(2 * y + dy, 2 * x + dx));
      }
      ASSERT_TRUE(hood.count(a.labels.at(y, x))) << y << "," << x;
    }
  }
}

TEST(Augment, DeterministicAndRejectsUpsampling) {
  const auto s = generate_scene(2, {16, 32}, 5);
  EXPECT_EQ(augment(s, 77, {8, 16}), augment(s, 77, {8, 16}));
  EXPECT_THROW(augment(s, 0, {32, 64}), ContractError);
}

TEST(Resize, ConstantImageStaysConstant) {
  const Image img(16, 32, 3, 0.25);
  const auto r = resize_bilinear(img, {8, 24});
  for (double v : r.data) EXPECT_NEAR(v, 0.25, 1e-12);
}

TEST(ImageIo, PngRoundTrips) {
  TempDir dir;
  Grid<std::uint8_t> rgb(5, 7, 3);
  for (std::size_t i = 0; i < rgb.data.size(); ++i) rgb.data[i] = static_cast<std::uint8_t>(i * 7);
  write_png8(dir / "a.png", rgb);
  EXPECT_EQ(read_png8(dir / "a.png"), rgb);
  Grid<std::uint16_t> d(4, 6, 1);
  for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] = static_cast<std::uint16_t>(i * 977);
  write_png16(dir / "d.png", d);
  EXPECT_EQ(read_png16(dir / "d.png"), d);
}

TEST(ImageIo, DepthEncodingConvention) {
  Image depth(1, 3, 1);
  depth.data = {1.0, 80.0, 0.0};
  const auto raw = encode_depth16(depth);
  EXPECT_EQ(raw.data[0], 256);
  EXPECT_EQ(raw.data[1], 20480);
  EXPECT_EQ(raw.data[2], 0);
  EXPECT_EQ(decode_depth16(raw).data, depth.data);
}

TEST(ImageIo, QuantizeRoundsHalfUp) {
  Image img(1, 3, 1);
  img.data = {0.0, 0.5 / 255.0, 1.0};
  EXPECT_EQ(quantize8(img).data, (std::vector<std::uint8_t>{0, 1, 255}));
}

TEST(ImageIo, UnreadableFileIsFormatError) {
  TempDir dir;
  std::ofstream(dir / "x.png") << "not a png";
  EXPECT_THROW(read_png8(dir / "x.png"), FormatError);
  EXPECT_THROW(read_png8(dir / "missing.png"), Error);
}

TEST(Dataset, WriteLoadRoundTrip) {
  TempDir dir;
  SyntheticDatasetOptions opt;
  opt.num_train = 2;
  opt.num_test = 1;
  opt.resolution = {16, 32};
  const auto corpus = generate_corpus(opt);
  ASSERT_EQ(corpus.samples.size(), 6u);
  const auto written = write_dataset(dir.path(), corpus, opt.resolution, opt.num_classes);
  const auto loaded = load_dataset(dir.path());
  ASSERT_EQ(loaded.size(), 6u);
  EXPECT_EQ(loaded.filter(Split::kTest, Domain::kFoggy).size(), 1u);
  EXPECT_EQ(loaded.filter(Split::kTrain, std::nullopt).size(), 4u);
  const auto* e = loaded.find("s0000_foggy");
  ASSERT_NE(e, nullptr);
  EXPECT_EQ(e->scene, "s0000");
  ASSERT_TRUE(e->fog.has_value());
  const auto s = load_sample(*e, opt.num_classes);
  EXPECT_EQ(s.labels, corpus.samples[1].labels);
  // 8-bit RGB and depth in 1/256 m steps.
  for (std::size_t i = 0; i < s.rgb.data.size(); ++i) {
    ASSERT_NEAR(s.rgb.data[i], corpus.samples[1].rgb.data[i], 0.5 / 255.0 + 1e-12);
  }
  for (std::size_t i = 0; i < s.depth.data.size(); ++i) {
    ASSERT_NEAR(s.depth.data[i], corpus.samples[1].depth.data[i], 0.5 / 256.0 + 1e-12);
  }
}

TEST(Dataset, PairsShareSceneAndTestRangeApplies) {
  SyntheticDatasetOptions opt;
  opt.num_train = 3;
  opt.num_test = 3;
  opt.resolution = {16, 32};
  opt.test_beta_min = 0.15;
  opt.test_beta_max = 0.3;
  const auto corpus = generate_corpus(opt);
  for (std::size_t i = 0; i < corpus.samples.size(); i += 2) {
    const auto& n = corpus.samples[i];
    const auto& f = corpus.samples[i + 1];
    EXPECT_EQ(n.domain, Domain::kNormal);
    EXPECT_EQ(f.domain, Domain::kFoggy);
    EXPECT_EQ(n.labels, f.labels);
    if (corpus.splits[i] == Split::kTest) {
      EXPECT_GE(f.fog->beta, 0.15);
      EXPECT_LE(f.fog->beta, 0.3);
    }
  }
}

TEST(Dataset, OptionValidation) {
  SyntheticDatasetOptions opt;
  opt.num_train = 0;
  EXPECT_THROW(validate_options(opt), ConfigError);
  opt = {};
  opt.beta_min = 0.4;
  EXPECT_THROW(validate_options(opt), ConfigError);
  opt = {};
  opt.resolution = {20, 32};
  EXPECT_THROW(validate_options(opt), ConfigError);
}

TEST(Dataset, MissingManifestIsDatasetError) {
  TempDir dir;
  EXPECT_THROW(load_dataset(dir.path()), DatasetError);
}

namespace {

void write_cityscapes_triple(const fs::path& root, const std::string& stem, bool labels,
                             bool disparity) {
  const fs::path rel = fs::path("train") / "zurich";
  fs::create_directories(root / "leftImg8bit" / rel);
  write_png8(root / "leftImg8bit" / rel / (stem + "_leftImg8bit.png"),
             Grid<std::uint8_t>(8, 16, 3, 100));
  if (labels) {
    fs::create_directories(root / "gtFine" / rel);
    write_png8(root / "gtFine" / rel / (stem + "_gtFine_labelTrainIds.png"),
               Grid<std::uint8_t>(8, 16, 1, 3));
  }
  if (disparity) {
    fs::create_directories(root / "disparity" / rel);
    write_png16(root / "disparity" / rel / (stem + "_disparity.png"),
                Grid<std::uint16_t>(8, 16, 1, 5000));
  }
}

}  // namespace

TEST(Cityscapes, CompleteTriplesAreListed) {
  TempDir dir;
  for (int i = 0; i < 3; ++i) write_cityscapes_triple(dir.path(), "zurich_00000" + std::to_string(i), true, true);
  const auto m = load_cityscapes_layout(dir.path(), Domain::kNormal);
  EXPECT_EQ(m.size(), 3u);
  EXPECT_EQ(m.warnings, 0);
  const auto s = load_sample(m.entries[0], 19);
  EXPECT_GT(s.depth.at(0, 0), 0.0);
}

TEST(Cityscapes, IncompleteTriplesAreSkippedWithWarning) {
  TempDir dir;
  write_cityscapes_triple(dir.path(), "zurich_000000", true, true);
  write_cityscapes_triple(dir.path(), "zurich_000001", true, true);
  write_cityscapes_triple(dir.path(), "zurich_000002", false, true);
  const auto m = load_cityscapes_layout(dir.path(), Domain::kNormal);
  EXPECT_EQ(m.size(), 2u);
  EXPECT_EQ(m.warnings, 1);
}

TEST(Cityscapes, EmptyRootIsDatasetError) {
  TempDir dir;
  EXPECT_THROW(load_cityscapes_layout(dir.path(), Domain::kNormal), DatasetError);
  EXPECT_THROW(load_cityscapes_layout(dir / "nope", Domain::kFoggy), DatasetError);
}

namespace {

DatasetManifest manifest_of(int n) {
  DatasetManifest m;
  for (int i = 0; i < n; ++i) {
    ManifestEntry e;
    e.id = "id" + std::to_string(i);
    m.entries.push_back(e);
  }
  return m;
}

}  // namespace

TEST(SplitRefined, DisjointDeterministicAndSized) {
  const auto m = manifest_of(10);
  const auto [train, test] = split_refined(m, 8, 2, 5);
  EXPECT_EQ(train.size(), 8u);
  EXPECT_EQ(test.size(), 2u);
  std::set<std::string> ids;
  for (const auto& e : train.entries) ids.insert(e.id);
  for (const auto& e : test.entries) EXPECT_FALSE(ids.count(e.id));
  const auto again = split_refined(m, 8, 2, 5);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(again.first.entries[i].id, train.entries[i].id);
}

TEST(SplitRefined, InsufficientSamplesIsDatasetError) {
  EXPECT_THROW(split_refined(manifest_of(10), 498, 52, 0), DatasetError);
}

TEST(SplitMixStream, UniformIntCoversRangeInclusive) {
  SplitMix rng(1);
  std::set<int> seen;
  for (int i = 0; i < 200; ++i) {
    const int v = rng.uniform_int(3, 6);
    ASSERT_GE(v, 3);
    ASSERT_LE(v, 6);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 4u);
  EXPECT_NE(mix_seed(1, 2), mix_seed(2, 1));
}
