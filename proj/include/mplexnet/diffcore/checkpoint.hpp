#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mplexnet/diffcore/nn.hpp"
#include "mplexnet/diffcore/optim.hpp"

namespace mplexnet::diffcore {

inline constexpr const char* kCheckpointFormat = "mplexnet-ckpt-v1";

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// A checkpoint is a JSON manifest (`<base>.json`) listing array names, shapes
/// and byte offsets into a blob of little-endian float64 values (`<base>.bin`).
/// `meta` carries free-form JSON such as normalization statistics.
struct Checkpoint {
  std::vector<NamedArray> arrays;
  nlohmann::json meta = nlohmann::json::object();

  const NamedArray& array(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& base, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& base);

/// Appends every parameter of `params` as "<prefix><name>".
void append_parameters(Checkpoint& ckpt, const ParameterSet& params, const std::string& prefix = "");
/// Copies arrays back into `params` (shapes must match exactly).
void restore_parameters(const Checkpoint& ckpt, ParameterSet& params, const std::string& prefix = "");

/// Optimizer moments are stored as "adamw.m/<name>" and "adamw.v/<name>";
/// the step counter goes into meta["adamw_step"].
void append_optimizer(Checkpoint& ckpt, const AdamW& opt, const ParameterSet& params);
void restore_optimizer(const Checkpoint& ckpt, AdamW& opt, const ParameterSet& params);

}  // namespace mplexnet::diffcore
