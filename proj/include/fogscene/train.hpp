#pragma once

// The staged training pipeline: (I) fog→clear translation, (II) depth,
// (III) segmentation on translated images with depth input, (IV) fine-tuning
// on a refined subset. Every stage is deterministic given its seed when torch
// runs single-threaded.

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fogscene/checkpoint.hpp"
#include "fogscene/fogdata.hpp"
#include "fogscene/losses.hpp"
#include "fogscene/models.hpp"
#include "fogscene/optim.hpp"

namespace fogscene {

enum class Stage { kDomainAdapt, kDepth, kSeg, kFinetune };
std::string to_string(Stage s);
Stage parse_stage(const std::string& s);

enum class DatasetLayout { kSynthetic, kCityscapes };
std::string to_string(DatasetLayout l);
DatasetLayout parse_layout(const std::string& s);

struct TrainConfig {
  Stage stage = Stage::kDomainAdapt;
  /// One root holds both domains (synthetic manifest, or the Cityscapes tree
  /// with leftImg8bit/ and leftImg8bit_foggy/).
  std::filesystem::path data_root;
  DatasetLayout layout = DatasetLayout::kSynthetic;
  Resolution resolution{128, 256};
  int batch_size = 2;
  int iterations = 0;
  AdamOptions adam;
  LrSchedule lr_schedule = LrSchedule::kConstant;  // over the iterations of a run
  std::uint64_t seed = 0;
  /// Checkpoints go to `<out_dir>/<stage>.ckpt`, logs to `<out_dir>/logs/`,
  /// sample translations to `<out_dir>/samples/`.
  std::filesystem::path out_dir;
  /// Continue a checkpoint of the same stage up to `iterations` in total.
  std::optional<std::filesystem::path> resume;

  // Output-space adversarial terms on FOGGY batches of stages II and III.
  bool adversarial_depth = true;
  bool adversarial_seg = true;
  bool foggy_stream = true;     // alternate NORMAL/FOGGY batches (stages II, III)
  bool use_translation = true;  // translate FOGGY inputs in stage III
  double lambda_cyc = losses::kDefaultLambdaCycle;
  losses::GanForm gan_form = losses::GanForm::kNonSaturating;

  models::SegDepthConfig model;  // num_classes, widths; heads/ld_mode set per stage
  models::TranslationConfig translation;
  std::int64_t output_disc_width = 16;
  int output_disc_scales = 3;

  int sample_every = 0;  // 0 disables sample translations
  double finetune_lr_scale = 0.1;
  int refined_train = 24;
  int refined_test = 8;

  /// ConfigError on non-positive learning rate or batch size, negative
  /// iteration counts, or resolutions the networks cannot process.
  void validate() const;
};

struct IterationRecord {
  std::int64_t iteration = 0;
  std::optional<Domain> domain;  // empty for stage I, which consumes both
  losses::LossBreakdown losses;
  double wall_seconds = 0.0;  // since the start of the stage
  double lr = 0.0;
};

struct TrainLog {
  std::string stage;
  std::vector<IterationRecord> history;
  double wall_seconds = 0.0;
  double lr = 0.0;
  std::string checkpoint;

  /// One JSON object per iteration.
  void write_jsonl(const std::filesystem::path& path) const;
};

/// Checkpoint file names inside `out_dir`. Fine-tuned checkpoints carry an
/// `_ft` suffix.
std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir,
                                      Stage stage, bool finetuned = false);

/// Mini-batch tensors. `depth` is the normalised depth code, `valid` marks
/// pixels with depth ground truth, `labels` are int64.
struct Batch {
  Domain domain = Domain::kNormal;
  torch::Tensor rgb, lum, depth, valid, labels;
  std::vector<std::string> ids;
};

Batch make_batch(const std::vector<const SceneSample*>& samples, Domain domain);

/// 1×C×H×W float32 tensor of an image, and back (accepts C×H×W or 1×C×H×W).
torch::Tensor to_tensor(const Image& img);
Image to_image(const torch::Tensor& t);

/// Training samples held in memory, grouped by domain. Batches are a pure
/// function of (seed, iteration, domain), so training can be resumed without
/// storing sampler state.
class TrainingData {
 public:
  TrainingData(const DatasetManifest& manifest, int num_classes);
  std::size_t count(Domain d) const;
  Batch batch(Domain d, std::uint64_t seed, std::int64_t iteration, int batch_size,
              Resolution target) const;
  bool has_depth() const { return has_depth_; }
  /// Every sample of domain `d`, in order, resized to `target` without flips.
  std::vector<Batch> ordered_batches(Domain d, int batch_size, Resolution target) const;

 private:
  std::vector<SceneSample> normal_, foggy_;
  bool has_depth_ = true;
};

/// Training-split manifest of the configured dataset. DatasetError when it is
/// missing or empty.
DatasetManifest load_training_manifest(const TrainConfig& cfg);
DatasetManifest load_manifest(const std::filesystem::path& root, DatasetLayout layout);

/// Domain of iteration `i` under the alternating NORMAL→FOGGY schedule.
Domain scheduled_domain(std::int64_t iteration, bool foggy_stream);

// ---------------------------------------------------------------------------
// Stage state: networks, optimizers and progress. Each has a checkpoint form.

/// BatchNorm running statistics of one network per domain. The twin
/// sub-models share every learned weight but normalise with the statistics of
/// their own domain, as in training, where each mini-batch holds one domain.
struct DomainNorms {
  std::map<Domain, std::vector<torch::Tensor>> stats;  // named_buffers order

  void capture(torch::nn::Module& net, Domain d);
  /// Copies the statistics of `d` into the network's buffers; no-op when
  /// none were captured.
  void apply(torch::nn::Module& net, Domain d) const;
  void put(Checkpoint& c, const std::string& prefix, const torch::nn::Module& net) const;
  /// FormatError when stored statistics do not match the network.
  static DomainNorms load(const Checkpoint& c, const std::string& prefix,
                          torch::nn::Module& net);
};

struct DaState {
  models::TranslationConfig cfg;
  models::TranslationPair pair;
  std::unique_ptr<Adam> opt_gen, opt_disc;
  std::int64_t iteration = 0;

  static DaState create(const models::TranslationConfig& cfg, const AdamOptions& adam,
                        std::uint64_t seed);
  Checkpoint to_checkpoint(Stage stage, std::uint64_t seed) const;
  static DaState from_checkpoint(const Checkpoint& ckpt);
};

struct DepthState {
  models::SegDepthConfig cfg;
  models::SegDepthNet net{nullptr};
  blocks::PatchDiscriminator disc{nullptr};
  losses::UncertaintyWeights weights{nullptr};
  std::unique_ptr<Adam> opt_net, opt_disc;
  std::int64_t iteration = 0;
  std::int64_t disc_width = 16;
  int disc_scales = 3;
  DomainNorms norms;

  static DepthState create(models::SegDepthConfig cfg, std::int64_t disc_width,
                           int disc_scales, const AdamOptions& adam, std::uint64_t seed);
  Checkpoint to_checkpoint(Stage stage, std::uint64_t seed) const;
  static DepthState from_checkpoint(const Checkpoint& ckpt);
};

/// The segmentation network with frozen copies of the stage-I translator and
/// the stage-II depth network, so inference needs this checkpoint only.
struct SegState {
  models::SegDepthConfig cfg;
  models::SegDepthNet net{nullptr};
  blocks::PatchDiscriminator disc{nullptr};
  losses::UncertaintyWeights weights{nullptr};
  std::unique_ptr<Adam> opt_net, opt_disc;
  std::int64_t iteration = 0;
  std::int64_t disc_width = 16;
  int disc_scales = 3;
  bool use_translation = true;
  DomainNorms norms;

  models::TranslationConfig translation_cfg;
  std::shared_ptr<models::ImageGenerator> gen_xy;
  models::SegDepthConfig depth_cfg;
  models::SegDepthNet depth_net{nullptr};
  DomainNorms depth_norms;

  Checkpoint to_checkpoint(Stage stage, std::uint64_t seed) const;
  static SegState from_checkpoint(const Checkpoint& ckpt);
};

models::SegDepthConfig depth_network_config(models::SegDepthConfig base);
models::SegDepthConfig seg_network_config(models::SegDepthConfig base);

/// Translated image (or the input when translation is off), its luminance
/// and the frozen depth network's depth code (normalised with the statistics
/// of `domain`): the inputs of the segmentation network.
struct SegInputs {
  torch::Tensor rgb, lum, depth_code;
};
SegInputs prepare_seg_inputs(SegState& s, const torch::Tensor& rgb, Domain domain,
                             bool translate);

// ---------------------------------------------------------------------------
// Stage drivers. Each writes its checkpoint and a JSON-lines log under
// `cfg.out_dir` and returns the log.

TrainLog train_domain_adaptation(const TrainConfig& cfg);
TrainLog train_depth(const TrainConfig& cfg);
/// PipelineError when either prerequisite checkpoint is missing.
TrainLog train_segmentation(const TrainConfig& cfg,
                            const std::filesystem::path& da_checkpoint,
                            const std::filesystem::path& depth_checkpoint);

/// Continues all three trainers at lr × `finetune_lr_scale` for
/// `cfg.iterations` iterations on the refined training subset and writes the
/// `_ft` checkpoints. Returns the three logs (da, depth, seg).
std::vector<TrainLog> finetune(const TrainConfig& cfg);

/// Runs one stage by `cfg.stage`, resolving prerequisites from `cfg.out_dir`.
std::vector<TrainLog> run_stage(const TrainConfig& cfg);

// Single-iteration steps, exposed for tests.
losses::LossBreakdown da_step(DaState& s, const Batch& foggy, const Batch& normal,
                              double lambda_cyc, losses::GanForm form);
losses::LossBreakdown depth_step(DepthState& s, const Batch& b, bool adversarial,
                                 losses::GanForm form);
losses::LossBreakdown seg_step(SegState& s, const Batch& b, bool adversarial,
                               losses::GanForm form);

}  // namespace fogscene
