// fogscene: generate | train | eval | infer | pipeline

#include <torch/torch.h>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "fogscene/config.hpp"
#include "fogscene/evaluate.hpp"
#include "fogscene/train.hpp"

namespace fs = std::filesystem;
using namespace fogscene;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "runs/default";
  std::optional<int> iterations;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? parse_config("") : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.iterations) {
    if (*c.iterations < 0) throw ConfigError("--iterations must be >= 0");
    cfg.da_iterations = cfg.depth_iterations = cfg.seg_iterations =
        cfg.finetune_iterations = *c.iterations;
  }
  cfg.validate();
  return cfg;
}

void echo_config(const RunConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  std::ofstream(out / "resolved_config.ini", std::ios::trunc) << to_ini(cfg);
}

void setup_torch(const RunConfig& cfg) {
  torch::set_num_threads(cfg.threads);
}

DatasetManifest generate(const RunConfig& cfg, const fs::path& root) {
  const auto opt = dataset_options(cfg);
  auto corpus = generate_corpus(opt);
  auto m = write_dataset(root, corpus, opt.resolution, opt.num_classes);
  std::printf("wrote %zu samples to %s\n", m.size(), root.string().c_str());
  return m;
}

void print_log(const TrainLog& log) {
  std::printf("stage %s: %zu iterations in %.1f s (lr %g) -> %s\n", log.stage.c_str(),
              log.history.size(), log.wall_seconds, log.lr, log.checkpoint.c_str());
  if (!log.history.empty()) {
    std::printf("  final:");
    for (const auto& [k, v] : log.history.back().losses) std::printf(" %s=%.4f", k.c_str(), v);
    std::printf("\n");
  }
}

fs::path default_seg_checkpoint(const fs::path& out) {
  const auto ft = checkpoint_path(out, Stage::kSeg, true);
  return fs::exists(ft) ? ft : checkpoint_path(out, Stage::kSeg);
}

void run_eval(const RunConfig& cfg, const fs::path& ckpt, const fs::path& out, bool apply_da,
              bool oracle) {
  if (!fs::exists(ckpt)) {
    throw PipelineError("missing segmentation checkpoint " + ckpt.string());
  }
  const auto manifest = load_manifest(data_root(cfg, out), cfg.data.layout);
  Predictor predictor(ckpt);
  const auto dir = out / (apply_da ? "eval_da" : "eval_noda");
  auto report = evaluate(predictor, manifest,
                         {cfg.eval.split, cfg.eval.domain, apply_da, oracle});
  report.write(dir);
  std::printf("eval (%s): mIoU %.4f  global acc %.4f  abs_rel %.4f  delta1 %.4f -> %s\n",
              apply_da ? "with DA" : "no DA", report.seg.miou, report.seg.global_acc,
              report.depth.abs_rel, report.depth.delta1, dir.string().c_str());
  if (apply_da && cfg.eval.domain == Domain::kFoggy) {
    try {
      const auto te = translation_error(predictor, manifest, cfg.eval.split);
      nlohmann::ordered_json j{{"foggy_mae", te.foggy_mae},
                               {"translated_mae", te.translated_mae},
                               {"pairs", te.pairs}};
      std::ofstream(dir / "translation.json", std::ios::trunc) << j.dump(2) << "\n";
      std::printf("  translation MAE to clear: foggy %.4f  translated %.4f\n", te.foggy_mae,
                  te.translated_mae);
    } catch (const DatasetError&) {
      // No paired clear images (e.g. real foggy data): nothing to compare.
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task foggy scene understanding: translation, segmentation, depth"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "INI configuration file");
    sub->add_option("--seed", common.seed, "Seed overriding [train] seed");
    sub->add_option("--out", common.out, "Output directory")->capture_default_str();
  };

  auto* gen = app.add_subcommand("generate", "Write the synthetic paired dataset");
  add_common(gen);

  std::string stage_name;
  std::optional<std::string> resume;
  auto* train = app.add_subcommand("train", "Run one training stage");
  add_common(train);
  train->add_option("--stage", stage_name, "da, depth, seg or finetune")
      ->required()
      ->check(CLI::IsMember({"da", "depth", "seg", "finetune"}));
  train->add_option("--iterations", common.iterations, "Iterations of this stage");
  train->add_option("--resume", resume, "Checkpoint of the same stage to continue");

  std::string checkpoint;
  bool with_da = true, no_da = false, oracle = false;
  auto* ev = app.add_subcommand("eval", "Evaluate a segmentation checkpoint");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint, "Defaults to <out>/seg_ft.ckpt or seg.ckpt");
  auto* ev_with = ev->add_flag("--with-da", with_da, "Translate foggy inputs first");
  auto* ev_without = ev->add_flag("--no-da", no_da, "Feed foggy inputs unchanged");
  ev_with->excludes(ev_without);
  ev->add_flag("--oracle", oracle, "Score ground truth as prediction")->group("");

  std::string image;
  auto* inf = app.add_subcommand("infer", "Predict labels and depth for one image");
  add_common(inf);
  inf->add_option("--checkpoint", checkpoint, "Segmentation checkpoint");
  inf->add_option("--image", image, "Input PNG")->required();
  auto* inf_with = inf->add_flag("--with-da", with_da, "Translate the image first");
  auto* inf_without = inf->add_flag("--no-da", no_da, "Skip translation");
  inf_with->excludes(inf_without);

  auto* pipe = app.add_subcommand("pipeline", "Generate data, run stages I-IV, evaluate");
  add_common(pipe);
  pipe->add_option("--iterations", common.iterations, "Iterations of every stage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const fs::path out = common.out;
    const RunConfig cfg = resolve(common);
    setup_torch(cfg);
    echo_config(cfg, out);

    if (*gen) {
      generate(cfg, data_root(cfg, out));
    } else if (*train) {
      auto tc = make_train_config(cfg, parse_stage(stage_name), out);
      if (resume) tc.resume = fs::path(*resume);
      for (const auto& log : run_stage(tc)) print_log(log);
    } else if (*ev) {
      const bool apply = ev_without->count() ? false
                         : ev_with->count()  ? true
                                             : cfg.eval.apply_da;
      run_eval(cfg, checkpoint.empty() ? default_seg_checkpoint(out) : fs::path(checkpoint),
               out, apply, oracle);
    } else if (*inf) {
      const bool apply = inf_without->count() ? false
                         : inf_with->count()  ? true
                                              : cfg.eval.apply_da;
      const auto ckpt =
          checkpoint.empty() ? default_seg_checkpoint(out) : fs::path(checkpoint);
      if (!fs::exists(ckpt)) throw PipelineError("missing checkpoint " + ckpt.string());
      const auto p = infer(ckpt, image, out / "infer", apply, cfg.eval.domain);
      std::printf("wrote %dx%d predictions to %s\n", p.labels.width, p.labels.height,
                  (out / "infer").string().c_str());
    } else if (*pipe) {
      const auto root = data_root(cfg, out);
      if (cfg.data.layout == DatasetLayout::kSynthetic && cfg.data.root.empty()) {
        generate(cfg, root);
      }
      for (Stage s : {Stage::kDomainAdapt, Stage::kDepth, Stage::kSeg, Stage::kFinetune}) {
        for (const auto& log : run_stage(make_train_config(cfg, s, out))) print_log(log);
      }
      const auto ckpt = checkpoint_path(out, Stage::kSeg, true);
      run_eval(cfg, ckpt, out, true, false);
      run_eval(cfg, ckpt, out, false, false);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
