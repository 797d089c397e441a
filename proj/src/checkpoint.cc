#include "gatsy/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "gatsy/dataset.h"

namespace gatsy {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

constexpr char kMagic[8] = {'G', 'T', 'S', 'Y', 'C', 'K', 'P', 'T'};
constexpr std::uint8_t kFloat64 = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError(path.string() + ": truncated checkpoint");
  return v;
}

void put_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint8_t>(out, kFloat64);
  put<std::uint32_t>(out, 2);
  put<std::uint64_t>(out, t.rows());
  put<std::uint64_t>(out, t.cols());
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  json header = {{"config", json::parse(config_to_json(ckpt.params.config))},
                 {"seed", ckpt.seed},
                 {"split_seed", ckpt.split_seed},
                 {"feature_kind", ckpt.feature_kind == FeatureKind::kRandom ? "random"
                                                                            : "handcrafted"},
                 {"vocabulary", ckpt.vocabulary}};
  if (ckpt.feature_seed) header["feature_seed"] = *ckpt.feature_seed;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.weights.size() +
                                                     2 * ckpt.params.bn_stats.size()));
  for (const auto& [name, t] : ckpt.params.weights) put_tensor(out, name, t);
  for (const auto& [layer, s] : ckpt.params.bn_stats) {
    put_tensor(out, layer + ".running_mean", s.running_mean);
    put_tensor(out, layer + ".running_var", s.running_var);
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw ParseError(path.string() + ": not a checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw ParseError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  std::string text(get<std::uint32_t>(in, path), '\0');
  in.read(text.data(), static_cast<std::streamsize>(text.size()));
  if (!in) throw ParseError(path.string() + ": truncated checkpoint header");

  Checkpoint ckpt;
  try {
    const json header = json::parse(text);
    ckpt.params.config = config_from_json(header.at("config").dump());
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.split_seed = header.value("split_seed", std::uint64_t{0});
    ckpt.feature_kind = header.at("feature_kind").get<std::string>() == "random"
                            ? FeatureKind::kRandom
                            : FeatureKind::kHandcrafted;
    if (header.contains("feature_seed")) ckpt.feature_seed = header["feature_seed"].get<std::uint64_t>();
    ckpt.vocabulary = header.value("vocabulary", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": bad checkpoint header: " + e.what());
  }

  // Shapes must agree exactly with a freshly built model of this config.
  const ModelParams expected = build_model(ckpt.params.config, 0);
  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(in, path), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    if (get<std::uint8_t>(in, path) != kFloat64) {
      throw ParseError(path.string() + ": tensor " + name + " has an unsupported dtype");
    }
    const auto ndim = get<std::uint32_t>(in, path);
    if (ndim != 2) throw ParseError(path.string() + ": tensor " + name + " is not 2-D");
    const auto rows = get<std::uint64_t>(in, path);
    const auto cols = get<std::uint64_t>(in, path);
    std::vector<double> data(rows * cols);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw ParseError(path.string() + ": truncated tensor " + name);
    Tensor t(rows, cols, std::move(data));

    const Tensor* want = nullptr;
    Tensor* slot = nullptr;
    if (const auto it = expected.weights.find(name); it != expected.weights.end()) {
      want = &it->second;
      slot = &ckpt.params.weights[name];
    } else {
      for (const char* suffix : {".running_mean", ".running_var"}) {
        const std::string s = suffix;
        if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) {
          const std::string layer = name.substr(0, name.size() - s.size());
          const auto st = expected.bn_stats.find(layer);
          if (st == expected.bn_stats.end()) break;
          want = &st->second.running_mean;
          auto& stats = ckpt.params.bn_stats[layer];
          slot = s == ".running_mean" ? &stats.running_mean : &stats.running_var;
        }
      }
    }
    if (want == nullptr) throw ParseError(path.string() + ": unexpected tensor " + name);
    if (want->shape() != t.shape()) {
      throw ParseError(path.string() + ": tensor " + name + " has shape " + t.shape_string() +
                       ", expected " + want->shape_string());
    }
    *slot = std::move(t);
  }
  if (ckpt.params.weights.size() != expected.weights.size() ||
      ckpt.params.bn_stats.size() != expected.bn_stats.size()) {
    throw ParseError(path.string() + ": checkpoint is missing tensors");
  }
  for (const auto& [layer, s] : ckpt.params.bn_stats) {
    if (s.running_mean.empty() || s.running_var.empty()) {
      throw ParseError(path.string() + ": missing running statistics for " + layer);
    }
  }
  return ckpt;
}

}  // namespace gatsy
