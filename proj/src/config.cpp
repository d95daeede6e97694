#include "fogscene/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace fogscene {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct Key {
  std::string section, name;
  std::string where() const { return "[" + section + "] " + name; }
};

template <typename T>
T parse_number(const Key& k, const std::string& raw) {
  const std::string v = trim(raw);
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (v.empty() || ec != std::errc() || ptr != end) {
    throw ConfigError(k.where() + ": cannot parse '" + raw + "' as a number");
  }
  return out;
}

bool parse_bool(const Key& k, const std::string& raw) {
  const std::string v = trim(raw);
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError(k.where() + ": expected true/false, got '" + raw + "'");
}

template <typename T, std::size_t N>
std::array<T, N> parse_list(const Key& k, const std::string& raw) {
  std::array<T, N> out{};
  std::stringstream ss(raw);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i == N) break;
    out[i++] = parse_number<T>(k, item);
  }
  if (i != N || std::getline(ss, item, ',')) {
    throw ConfigError(k.where() + ": expected " + std::to_string(N) +
                      " comma-separated values, got '" + raw + "'");
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string fmt(std::int64_t v) { return std::to_string(v); }
std::string fmt(int v) { return std::to_string(v); }
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename T, std::size_t N>
std::string fmt(const std::array<T, N>& a) {
  std::string out;
  for (std::size_t i = 0; i < N; ++i) out += (i ? "," : "") + fmt(a[i]);
  return out;
}

template <typename T>
T wrap(const Key& k, const std::function<T()>& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(k.where() + ": " + e.what());
  }
}

struct Field {
  Key key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const Key&, const std::string&)> set;
};

// Field accessors for members of a given type.
template <typename T>
Field number(std::string sec, std::string name, std::function<T&(RunConfig&)> ref) {
  return {{std::move(sec), std::move(name)},
          [ref](const RunConfig& c) { return fmt(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const Key& k, const std::string& v) {
            ref(c) = parse_number<T>(k, v);
          }};
}

Field boolean(std::string sec, std::string name, std::function<bool&(RunConfig&)> ref) {
  return {{std::move(sec), std::move(name)},
          [ref](const RunConfig& c) { return fmt(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const Key& k, const std::string& v) {
            ref(c) = parse_bool(k, v);
          }};
}

template <typename T, std::size_t N>
Field list(std::string sec, std::string name,
           std::function<std::array<T, N>&(RunConfig&)> ref) {
  return {{std::move(sec), std::move(name)},
          [ref](const RunConfig& c) { return fmt(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const Key& k, const std::string& v) {
            ref(c) = parse_list<T, N>(k, v);
          }};
}

template <typename E>
Field choice(std::string sec, std::string name, std::function<E&(RunConfig&)> ref,
             std::function<E(const std::string&)> parse) {
  return {{std::move(sec), std::move(name)},
          [ref](const RunConfig& c) { return to_string(ref(const_cast<RunConfig&>(c))); },
          [ref, parse](RunConfig& c, const Key& k, const std::string& v) {
            ref(c) = wrap<E>(k, [&] { return parse(trim(v)); });
          }};
}

const std::vector<Field>& schema() {
  using R = RunConfig;
  static const std::vector<Field> fields{
      {{"data", "root"},
       [](const R& c) { return c.data.root.string(); },
       [](R& c, const Key&, const std::string& v) { c.data.root = trim(v); }},
      choice<DatasetLayout>("data", "layout", [](R& c) -> auto& { return c.data.layout; },
                            parse_layout),
      number<int>("data", "num_train", [](R& c) -> auto& { return c.data.synthetic.num_train; }),
      number<int>("data", "num_test", [](R& c) -> auto& { return c.data.synthetic.num_test; }),
      number<int>("data", "height",
                  [](R& c) -> auto& { return c.data.synthetic.resolution.height; }),
      number<int>("data", "width",
                  [](R& c) -> auto& { return c.data.synthetic.resolution.width; }),
      number<int>("data", "num_classes",
                  [](R& c) -> auto& { return c.data.synthetic.num_classes; }),
      number<double>("data", "beta_min", [](R& c) -> auto& { return c.data.synthetic.beta_min; }),
      number<double>("data", "beta_max", [](R& c) -> auto& { return c.data.synthetic.beta_max; }),
      number<double>("data", "test_beta_min",
                     [](R& c) -> auto& { return c.data.synthetic.test_beta_min; }),
      number<double>("data", "test_beta_max",
                     [](R& c) -> auto& { return c.data.synthetic.test_beta_max; }),
      list<double, 3>("data", "atmosphere",
                      [](R& c) -> auto& { return c.data.synthetic.atmosphere; }),
      number<int>("data", "refined_train", [](R& c) -> auto& { return c.data.refined_train; }),
      number<int>("data", "refined_test", [](R& c) -> auto& { return c.data.refined_test; }),

      list<std::int64_t, 3>("model", "stage_widths",
                            [](R& c) -> auto& { return c.model.stage_widths; }),
      number<int>("model", "rgb_stage2_modules",
                  [](R& c) -> auto& { return c.model.rgb_stage2_modules; }),
      number<int>("model", "rgb_stage3_modules",
                  [](R& c) -> auto& { return c.model.rgb_stage3_modules; }),
      list<int, 3>("model", "ld_dense_modules",
                   [](R& c) -> auto& { return c.model.ld_dense_modules; }),
      list<std::int64_t, 3>("model", "dense_growth",
                            [](R& c) -> auto& { return c.model.dense_growth; }),
      number<double>("model", "dropout", [](R& c) -> auto& { return c.model.dropout; }),
      number<std::int64_t>("model", "generator_width",
                           [](R& c) -> auto& { return c.translation.generator_width; }),
      number<int>("model", "generator_residual",
                  [](R& c) -> auto& { return c.translation.generator_residual; }),
      number<std::int64_t>("model", "disc_base_width",
                           [](R& c) -> auto& { return c.translation.disc_base_width; }),
      number<int>("model", "disc_scales", [](R& c) -> auto& { return c.translation.disc_scales; }),
      number<std::int64_t>("model", "output_disc_width",
                           [](R& c) -> auto& { return c.output_disc_width; }),
      number<int>("model", "output_disc_scales",
                  [](R& c) -> auto& { return c.output_disc_scales; }),

      number<int>("train", "height", [](R& c) -> auto& { return c.train_resolution.height; }),
      number<int>("train", "width", [](R& c) -> auto& { return c.train_resolution.width; }),
      number<int>("train", "batch_size", [](R& c) -> auto& { return c.batch_size; }),
      number<double>("train", "lr", [](R& c) -> auto& { return c.adam.lr; }),
      number<double>("train", "beta1", [](R& c) -> auto& { return c.adam.beta1; }),
      number<double>("train", "beta2", [](R& c) -> auto& { return c.adam.beta2; }),
      number<double>("train", "eps", [](R& c) -> auto& { return c.adam.eps; }),
      choice<LrSchedule>("train", "lr_schedule",
                         [](R& c) -> auto& { return c.lr_schedule; }, parse_lr_schedule),
      number<int>("train", "da_iterations", [](R& c) -> auto& { return c.da_iterations; }),
      number<int>("train", "depth_iterations", [](R& c) -> auto& { return c.depth_iterations; }),
      number<int>("train", "seg_iterations", [](R& c) -> auto& { return c.seg_iterations; }),
      number<int>("train", "finetune_iterations",
                  [](R& c) -> auto& { return c.finetune_iterations; }),
      number<double>("train", "finetune_lr_scale",
                     [](R& c) -> auto& { return c.finetune_lr_scale; }),
      number<double>("train", "lambda_cyc", [](R& c) -> auto& { return c.lambda_cyc; }),
      choice<losses::GanForm>("train", "gan_form", [](R& c) -> auto& { return c.gan_form; },
                              losses::parse_gan_form),
      boolean("train", "adversarial_depth", [](R& c) -> auto& { return c.adversarial_depth; }),
      boolean("train", "adversarial_seg", [](R& c) -> auto& { return c.adversarial_seg; }),
      boolean("train", "foggy_stream", [](R& c) -> auto& { return c.foggy_stream; }),
      boolean("train", "use_translation", [](R& c) -> auto& { return c.use_translation; }),
      number<int>("train", "sample_every", [](R& c) -> auto& { return c.sample_every; }),
      number<std::uint64_t>("train", "seed", [](R& c) -> auto& { return c.seed; }),
      number<int>("train", "threads", [](R& c) -> auto& { return c.threads; }),

      choice<Split>("eval", "split", [](R& c) -> auto& { return c.eval.split; }, parse_split),
      choice<Domain>("eval", "domain", [](R& c) -> auto& { return c.eval.domain; },
                     parse_domain),
      boolean("eval", "apply_da", [](R& c) -> auto& { return c.eval.apply_da; }),
  };
  return fields;
}

}  // namespace

int RunConfig::iterations(Stage s) const {
  switch (s) {
    case Stage::kDomainAdapt: return da_iterations;
    case Stage::kDepth: return depth_iterations;
    case Stage::kSeg: return seg_iterations;
    case Stage::kFinetune: return finetune_iterations;
  }
  return 0;
}

void RunConfig::validate() const {
  if (threads < 1) throw ConfigError("[train] threads must be >= 1");
  if (data.layout == DatasetLayout::kSynthetic) {
    try {
      validate_options(dataset_options(*this));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("[data] ") + e.what());
    }
    const auto& r = data.synthetic.resolution;
    if (train_resolution.height > r.height || train_resolution.width > r.width) {
      throw ConfigError("[train] resolution exceeds the generated [data] resolution");
    }
  }
  for (Stage s : {Stage::kDomainAdapt, Stage::kDepth, Stage::kSeg, Stage::kFinetune}) {
    try {
      make_train_config(*this, s, "out").validate();
    } catch (const ConfigError& e) {
      throw ConfigError("[train]/[model] " + std::string(e.what()) + " (stage " +
                        to_string(s) + ")");
    }
  }
}

RunConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.message() + " (line " +
                      std::to_string(e.line()) + ")");
  }
  RunConfig c;
  const auto& fields = schema();
  for (const auto& [section, body] : tree) {
    const bool known_section =
        std::any_of(fields.begin(), fields.end(),
                    [&](const Field& f) { return f.key.section == section; });
    if (!known_section) throw ConfigError("unknown config section [" + section + "]");
    if (!body.data().empty()) {
      throw ConfigError("key '" + section + "' outside any section");
    }
    for (const auto& [name, value] : body) {
      const auto it = std::find_if(fields.begin(), fields.end(), [&](const Field& f) {
        return f.key.section == section && f.key.name == name;
      });
      if (it == fields.end()) {
        throw ConfigError("unknown config key [" + section + "] " + name);
      }
      it->set(c, it->key, value.data());
    }
  }
  c.model.num_classes = c.data.synthetic.num_classes;
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_ini(const RunConfig& c) {
  std::string out, section;
  for (const auto& f : schema()) {
    if (f.key.section != section) {
      section = f.key.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += f.key.name + " = " + f.get(c) + "\n";
  }
  return out;
}

SyntheticDatasetOptions dataset_options(const RunConfig& c) {
  auto o = c.data.synthetic;
  o.seed = mix_seed(c.seed, 0xDA7A);
  return o;
}

fs::path data_root(const RunConfig& c, const fs::path& out_dir) {
  return c.data.root.empty() ? out_dir / "data" : c.data.root;
}

TrainConfig make_train_config(const RunConfig& c, Stage stage, const fs::path& out_dir) {
  TrainConfig t;
  t.stage = stage;
  t.data_root = data_root(c, out_dir);
  t.layout = c.data.layout;
  t.resolution = c.train_resolution;
  t.batch_size = c.batch_size;
  t.iterations = c.iterations(stage);
  t.adam = c.adam;
  t.lr_schedule = c.lr_schedule;
  t.seed = c.seed;
  t.out_dir = out_dir;
  t.adversarial_depth = c.adversarial_depth;
  t.adversarial_seg = c.adversarial_seg;
  t.foggy_stream = c.foggy_stream;
  t.use_translation = c.use_translation;
  t.lambda_cyc = c.lambda_cyc;
  t.gan_form = c.gan_form;
  t.model = c.model;
  t.model.num_classes = c.data.synthetic.num_classes;
  t.model.input_resolution = c.train_resolution;
  t.translation = c.translation;
  t.output_disc_width = c.output_disc_width;
  t.output_disc_scales = c.output_disc_scales;
  t.sample_every = c.sample_every;
  t.finetune_lr_scale = c.finetune_lr_scale;
  t.refined_train = c.data.refined_train;
  t.refined_test = c.data.refined_test;
  return t;
}

}  // namespace fogscene
