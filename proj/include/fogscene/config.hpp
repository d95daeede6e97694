#pragma once

// Run configuration: an INI document with [data], [model], [train] and
// [eval] sections. Unknown sections or keys are rejected; missing keys take
// their defaults.

#include <filesystem>
#include <string>

#include "fogscene/fogdata.hpp"
#include "fogscene/train.hpp"

namespace fogscene {

struct DataConfig {
  std::filesystem::path root;  // empty: `<out>/data`
  DatasetLayout layout = DatasetLayout::kSynthetic;
  SyntheticDatasetOptions synthetic;  // seed comes from [train] seed
  int refined_train = 24;
  int refined_test = 8;
};

struct EvalConfig {
  Split split = Split::kTest;
  Domain domain = Domain::kFoggy;
  bool apply_da = true;
};

struct RunConfig {
  DataConfig data;

  models::SegDepthConfig model;  // num_classes follows [data]
  models::TranslationConfig translation;
  std::int64_t output_disc_width = 16;
  int output_disc_scales = 3;

  Resolution train_resolution{128, 256};
  int batch_size = 2;
  AdamOptions adam;
  int da_iterations = 2000;
  int depth_iterations = 1500;
  int seg_iterations = 1500;
  int finetune_iterations = 300;
  double finetune_lr_scale = 0.1;
  double lambda_cyc = losses::kDefaultLambdaCycle;
  losses::GanForm gan_form = losses::GanForm::kNonSaturating;
  LrSchedule lr_schedule = LrSchedule::kConstant;
  bool adversarial_depth = true;
  bool adversarial_seg = true;
  bool foggy_stream = true;
  bool use_translation = true;
  int sample_every = 200;
  std::uint64_t seed = 0;
  int threads = 1;

  EvalConfig eval;

  /// Checks every field and every derived stage configuration. ConfigError
  /// names the offending key.
  void validate() const;
  int iterations(Stage s) const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Fully resolved INI text; parse_config(to_ini(c)) reproduces `c`.
std::string to_ini(const RunConfig& c);

/// Synthetic generation options with the run seed filled in.
SyntheticDatasetOptions dataset_options(const RunConfig& c);

/// Stage configuration rooted at `out_dir`; the data root defaults to
/// `<out_dir>/data`.
TrainConfig make_train_config(const RunConfig& c, Stage stage,
                              const std::filesystem::path& out_dir);
std::filesystem::path data_root(const RunConfig& c, const std::filesystem::path& out_dir);

}  // namespace fogscene
