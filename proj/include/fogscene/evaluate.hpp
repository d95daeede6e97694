#pragma once

// Inference with a segmentation checkpoint and dataset evaluation.

#include <filesystem>
#include <optional>

#include "fogscene/fogdata.hpp"
#include "fogscene/metrics.hpp"
#include "fogscene/train.hpp"

namespace fogscene {

struct Prediction {
  std::optional<Image> translated;  // set when domain adaptation was applied
  LabelMap labels;                  // values in [0, K)
  Image depth_m;                    // meters in [1, 80]
};

/// Runs the frozen networks of a segmentation checkpoint. Inputs of any size
/// are resized to the model resolution and outputs resized back.
class Predictor {
 public:
  /// FormatError for unreadable or non-segmentation checkpoints.
  explicit Predictor(const std::filesystem::path& checkpoint);
  explicit Predictor(SegState state);

  /// `domain` selects the normalisation statistics (the input's domain).
  Prediction predict(const Image& rgb, bool apply_da, Domain domain = Domain::kFoggy);
  /// G_{X→Y} applied at the model resolution, resized back.
  Image translate(const Image& rgb);

  int num_classes() const { return state_.cfg.num_classes; }
  Resolution resolution() const { return state_.cfg.input_resolution; }
  SegState& state() { return state_; }

 private:
  SegState state_;
};

/// Writes translated.png (with DA), labels.png (palette colours),
/// labels_raw.png (class indices) and depth.png (16-bit, meters × 256).
void write_prediction(const Prediction& p, const std::filesystem::path& out_dir);

Prediction infer(const std::filesystem::path& checkpoint,
                 const std::filesystem::path& image, const std::filesystem::path& out_dir,
                 bool apply_da, Domain domain = Domain::kFoggy);

struct EvalOptions {
  Split split = Split::kTest;
  Domain domain = Domain::kFoggy;
  bool apply_da = true;
  /// Test hook: score the ground truth instead of the network's predictions.
  bool oracle = false;
};

/// Predicts every sample of the selected split and domain and aggregates
/// both metric families (depth clamped to [1, 80] m, valid where gt > 0).
/// DatasetError when the selection is empty.
EvalReport evaluate(Predictor& predictor, const DatasetManifest& manifest,
                    const EvalOptions& opt);
EvalReport evaluate(const std::filesystem::path& checkpoint,
                    const DatasetManifest& manifest, const EvalOptions& opt);

/// Mean absolute error to the clear rendering of the same scene, for raw
/// foggy images and for their translations.
struct TranslationError {
  double foggy_mae = 0.0;
  double translated_mae = 0.0;
  std::int64_t pairs = 0;
};
TranslationError translation_error(Predictor& predictor, const DatasetManifest& manifest,
                                   Split split);

}  // namespace fogscene
