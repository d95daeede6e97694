#include "support/fixtures.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>

namespace fogscene::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

models::SegDepthConfig tiny_model(int num_classes, Resolution res) {
  models::SegDepthConfig m;
  m.num_classes = num_classes;
  m.stage_widths = {8, 16, 32};
  m.rgb_stage2_modules = 1;
  m.rgb_stage3_modules = 2;
  m.ld_dense_modules = {1, 1, 1};
  m.dense_growth = {4, 8, 16};
  m.input_resolution = res;
  m.dropout = 0.1;
  return m;
}

models::TranslationConfig tiny_translation() {
  models::TranslationConfig t;
  t.generator_width = 8;
  t.generator_residual = 1;
  t.disc_base_width = 8;
  t.disc_scales = 2;
  return t;
}

RunConfig tiny_run_config() {
  RunConfig c;
  c.data.synthetic.num_train = 4;
  c.data.synthetic.num_test = 2;
  c.data.synthetic.resolution = {16, 32};
  c.data.refined_train = 4;
  c.data.refined_test = 0;
  c.model = tiny_model(c.data.synthetic.num_classes);
  c.translation = tiny_translation();
  c.output_disc_width = 8;
  c.output_disc_scales = 2;
  c.train_resolution = {16, 32};
  c.batch_size = 2;
  c.da_iterations = 3;
  c.depth_iterations = 4;
  c.seg_iterations = 4;
  c.finetune_iterations = 2;
  c.sample_every = 2;
  c.seed = 11;
  return c;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<fs::path> list_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace fogscene::testing
