#include "fogscene/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>

#include "fogscene/errors.hpp"

namespace fogscene {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'F', 'O', 'G', 'S', 'C', 'K', 'P', 'T'};

const std::map<std::string, torch::Dtype>& dtype_table() {
  static const std::map<std::string, torch::Dtype> table{
      {"float32", torch::kFloat32}, {"float64", torch::kFloat64},
      {"int64", torch::kInt64},     {"int32", torch::kInt32},
      {"uint8", torch::kUInt8},     {"bool", torch::kBool}};
  return table;
}

std::string dtype_name(torch::Dtype d) {
  for (const auto& [name, dt] : dtype_table()) {
    if (dt == d) return name;
  }
  throw ContractError(std::string("checkpoint: unsupported dtype ") +
                      c10::toString(d));
}

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& is, const std::string& what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw FormatError("checkpoint truncated while reading " + what);
  }
  return v;
}

void visit_state(const torch::nn::Module& m,
                 const std::function<void(const std::string&, const torch::Tensor&)>& f) {
  for (const auto& p : m.named_parameters(true)) f(p.key(), p.value());
  for (const auto& b : m.named_buffers(true)) f(b.key(), b.value());
}

}  // namespace

void Checkpoint::put(const std::string& name, const torch::Tensor& t) {
  auto value = t.detach().to(torch::kCPU).contiguous().clone();
  for (auto& [n, existing] : tensors) {
    if (n == name) {
      existing = value;
      return;
    }
  }
  tensors.emplace_back(name, value);
}

bool Checkpoint::has(const std::string& name) const {
  return std::any_of(tensors.begin(), tensors.end(),
                     [&](const auto& e) { return e.first == name; });
}

const torch::Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

void Checkpoint::put_module(const std::string& prefix, const torch::nn::Module& m) {
  visit_state(m, [&](const std::string& name, const torch::Tensor& t) {
    put(prefix + "/" + name, t);
  });
}

void Checkpoint::load_module(const std::string& prefix, torch::nn::Module& m) const {
  torch::NoGradGuard guard;
  visit_state(m, [&](const std::string& name, const torch::Tensor& t) {
    const auto& stored = get(prefix + "/" + name);
    if (stored.sizes() != t.sizes() || stored.dtype() != t.dtype()) {
      throw FormatError("checkpoint tensor '" + prefix + "/" + name +
                        "' does not match the model");
    }
    const_cast<torch::Tensor&>(t).copy_(stored);
  });
}

void Checkpoint::put_optimizer(const std::string& prefix, const Adam& opt) {
  const auto& s = opt.state();
  for (std::size_t i = 0; i < s.exp_avg.size(); ++i) {
    const auto idx = std::to_string(i);
    put(prefix + "/m/" + idx, s.exp_avg[i]);
    put(prefix + "/v/" + idx, s.exp_avg_sq[i]);
  }
  put(prefix + "/steps", torch::tensor(s.steps, torch::kInt64));
  meta["optimizers"][prefix] = {{"lr", opt.options().lr},
                                {"beta1", opt.options().beta1},
                                {"beta2", opt.options().beta2},
                                {"eps", opt.options().eps},
                                {"count", s.exp_avg.size()}};
}

void Checkpoint::load_optimizer(const std::string& prefix, Adam& opt) const {
  Adam::State s;
  const auto steps = get(prefix + "/steps");
  const auto n = static_cast<std::size_t>(steps.numel());
  for (std::size_t i = 0; i < n; ++i) {
    const auto idx = std::to_string(i);
    s.exp_avg.push_back(get(prefix + "/m/" + idx).clone());
    s.exp_avg_sq.push_back(get(prefix + "/v/" + idx).clone());
    s.steps.push_back(steps[static_cast<std::int64_t>(i)].item<std::int64_t>());
  }
  opt.load_state(std::move(s));
}

void Checkpoint::put_torch_rng() {
  put("rng/torch_cpu", torch::globalContext().defaultGenerator(torch::kCPU).get_state());
}

void Checkpoint::restore_torch_rng() const {
  auto gen = torch::globalContext().defaultGenerator(torch::kCPU);
  gen.set_state(get("rng/torch_cpu"));
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json header;
  header["format"] = "fogscene-checkpoint";
  header["meta"] = ckpt.meta;
  json table = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    const auto nbytes = static_cast<std::uint64_t>(t.numel() * t.element_size());
    table.push_back({{"name", name},
                     {"dtype", dtype_name(t.scalar_type())},
                     {"shape", t.sizes().vec()},
                     {"offset", offset},
                     {"nbytes", nbytes}});
    offset += nbytes;
  }
  header["tensors"] = table;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot write checkpoint " + path.string());
    os.write(kMagic, sizeof kMagic);
    write_pod<std::uint32_t>(os, kCheckpointVersion);
    write_pod<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : ckpt.tensors) {
      os.write(static_cast<const char*>(t.data_ptr()),
               static_cast<std::streamsize>(t.numel() * t.element_size()));
    }
    if (!os) throw FormatError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::uint32_t expected_version) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw FormatError(path.string() + " is not a fogscene checkpoint");
  }
  const auto version = read_pod<std::uint32_t>(is, "version");
  if (version != expected_version) {
    throw FormatError("checkpoint " + path.string() + " has version " +
                      std::to_string(version) + ", expected version " +
                      std::to_string(expected_version));
  }
  const auto header_len = read_pod<std::uint64_t>(is, "header length");
  const auto file_size = std::filesystem::file_size(path);
  const std::uint64_t payload_start = sizeof kMagic + 4 + 8 + header_len;
  if (header_len > file_size || payload_start > file_size) {
    throw FormatError("checkpoint truncated: header exceeds file size");
  }
  std::string text(header_len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(header_len));
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    if (header.at("format") != "fogscene-checkpoint") {
      throw FormatError("checkpoint format tag mismatch");
    }
    ckpt.meta = header.at("meta");
    std::uint64_t expected_offset = 0;
    for (const auto& e : header.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      const auto dt = dtype_table().find(e.at("dtype").get<std::string>());
      if (dt == dtype_table().end()) throw FormatError("unknown dtype in checkpoint");
      const auto shape = e.at("shape").get<std::vector<std::int64_t>>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto nbytes = e.at("nbytes").get<std::uint64_t>();
      auto t = torch::empty(shape, torch::TensorOptions().dtype(dt->second));
      if (offset != expected_offset ||
          nbytes != static_cast<std::uint64_t>(t.numel() * t.element_size())) {
        throw FormatError("checkpoint tensor table is inconsistent at '" + name + "'");
      }
      if (payload_start + offset + nbytes > file_size) {
        throw FormatError("checkpoint truncated in tensor '" + name + "'");
      }
      is.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
      if (!is) throw FormatError("checkpoint truncated in tensor '" + name + "'");
      ckpt.tensors.emplace_back(name, t);
      expected_offset += nbytes;
    }
    if (payload_start + expected_offset != file_size) {
      throw FormatError("checkpoint has trailing bytes");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header malformed: ") + e.what());
  }
  return ckpt;
}

std::uint64_t module_hash(const torch::nn::Module& m) {
  std::uint64_t h = 1469598103934665603ULL;
  visit_state(m, [&](const std::string& name, const torch::Tensor& t) {
    for (unsigned char c : name) h = (h ^ c) * 1099511628211ULL;
    const auto c = t.detach().contiguous();
    const auto* p = static_cast<const unsigned char*>(c.data_ptr());
    const auto n = static_cast<std::size_t>(c.numel() * c.element_size());
    for (std::size_t i = 0; i < n; ++i) h = (h ^ p[i]) * 1099511628211ULL;
  });
  return h;
}

}  // namespace fogscene
