#include "mplexnet/diffcore/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "mplexnet/error.hpp"

namespace mplexnet::diffcore {

namespace fs = std::filesystem;

namespace {

fs::path with_suffix(const fs::path& base, const char* suffix) { return fs::path(base.string() + suffix); }

void put_le64(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

double get_le64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

const NamedArray& Checkpoint::array(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  throw ArtifactError("checkpoint has no array named '" + name + "'");
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return true;
  return false;
}

void save_checkpoint(const fs::path& base, const Checkpoint& ckpt) {
  if (base.has_parent_path()) fs::create_directories(base.parent_path());
  nlohmann::json manifest;
  manifest["format"] = kCheckpointFormat;
  manifest["blob"] = with_suffix(base, ".bin").filename().string();
  manifest["meta"] = ckpt.meta;
  auto list = nlohmann::json::array();
  std::string blob;
  for (const auto& a : ckpt.arrays) {
    if (numel(a.shape) != a.values.size()) throw DimensionError("checkpoint array '" + a.name + "' shape mismatch");
    list.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", blob.size()}, {"count", a.values.size()}});
    for (double v : a.values) put_le64(blob, v);
  }
  manifest["arrays"] = std::move(list);
  manifest["blob_bytes"] = blob.size();

  std::ofstream js(with_suffix(base, ".json"), std::ios::binary);
  std::ofstream bin(with_suffix(base, ".bin"), std::ios::binary);
  if (!js || !bin) throw ArtifactError("cannot write checkpoint at " + base.string());
  js << manifest.dump(1) << '\n';
  bin.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!js || !bin) throw ArtifactError("failed writing checkpoint at " + base.string());
}

Checkpoint load_checkpoint(const fs::path& base) {
  const auto json_path = with_suffix(base, ".json");
  std::ifstream js(json_path, std::ios::binary);
  if (!js) throw ArtifactError("missing checkpoint manifest " + json_path.string());
  nlohmann::json manifest;
  try {
    js >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed checkpoint manifest " + json_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != kCheckpointFormat)
    throw FormatError("checkpoint " + json_path.string() + " is not " + kCheckpointFormat);

  const auto bin_path = base.parent_path() / manifest.at("blob").get<std::string>();
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw ArtifactError("missing checkpoint blob " + bin_path.string());
  std::string blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (blob.size() != manifest.at("blob_bytes").get<std::size_t>())
    throw FormatError("checkpoint blob " + bin_path.string() + " has unexpected size");

  Checkpoint ckpt;
  ckpt.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& entry : manifest.at("arrays")) {
    NamedArray a;
    a.name = entry.at("name").get<std::string>();
    a.shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto count = entry.at("count").get<std::size_t>();
    if (numel(a.shape) != count || offset + 8 * count > blob.size())
      throw FormatError("checkpoint array '" + a.name + "' is inconsistent with its blob");
    a.values.resize(count);
    const auto* p = reinterpret_cast<const unsigned char*>(blob.data()) + offset;
    for (std::size_t i = 0; i < count; ++i) a.values[i] = get_le64(p + 8 * i);
    ckpt.arrays.push_back(std::move(a));
  }
  return ckpt;
}

void append_parameters(Checkpoint& ckpt, const ParameterSet& params, const std::string& prefix) {
  for (const auto& [name, t] : params)
    ckpt.arrays.push_back({prefix + name, t.shape(), {t.values().begin(), t.values().end()}});
}

void restore_parameters(const Checkpoint& ckpt, ParameterSet& params, const std::string& prefix) {
  for (auto& [name, t] : params) {
    const auto& a = ckpt.array(prefix + name);
    if (a.shape != t.shape())
      throw DimensionError("checkpoint array '" + a.name + "' has shape " + shape_str(a.shape) + ", model expects " +
                           shape_str(t.shape()));
    std::copy(a.values.begin(), a.values.end(), t.mutable_values().begin());
  }
}

void append_optimizer(Checkpoint& ckpt, const AdamW& opt, const ParameterSet& params) {
  ckpt.meta["adamw_step"] = opt.step_count();
  if (opt.first_moments().empty()) return;
  std::size_t i = 0;
  for (const auto& [name, t] : params) {
    ckpt.arrays.push_back({"adamw.m/" + name, t.shape(), opt.first_moments()[i]});
    ckpt.arrays.push_back({"adamw.v/" + name, t.shape(), opt.second_moments()[i]});
    ++i;
  }
}

void restore_optimizer(const Checkpoint& ckpt, AdamW& opt, const ParameterSet& params) {
  const auto steps = ckpt.meta.value("adamw_step", std::uint64_t{0});
  std::vector<std::vector<double>> m, v;
  if (steps > 0) {
    for (const auto& [name, t] : params) {
      m.push_back(ckpt.array("adamw.m/" + name).values);
      v.push_back(ckpt.array("adamw.v/" + name).values);
      if (m.back().size() != t.size()) throw DimensionError("optimizer state size mismatch for '" + name + "'");
    }
  }
  opt.load_state(steps, std::move(m), std::move(v));
}

}  // namespace mplexnet::diffcore
