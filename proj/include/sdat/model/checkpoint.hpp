#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdat/model/model.hpp"
#include "sdat/numcore/tensor.hpp"

namespace sdat::model {

// On-disk layout (all integers little-endian):
//
//   "SDAT1"                      5 bytes magic
//   header_len                   uint64
//   header                       header_len bytes of canonical JSON:
//                                {"config": {...}, "manifest": [{"name", "offset",
//                                 "shape"}, ...], "meta": {...}}
//   payload                      raw float64 buffers; offsets are relative to
//                                the first payload byte
inline constexpr char kCheckpointMagic[] = "SDAT1";

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json meta = nlohmann::json::object();
  std::vector<CheckpointTensor> tensors;

  /// nullptr when absent.
  const CheckpointTensor* find(std::string_view name) const;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Config plus every named parameter of the model.
Checkpoint snapshot(const Model& model);
/// Rebuilds a model from a snapshot; every parameter must be present.
Model restore_model(const Checkpoint& ckpt);

}  // namespace sdat::model
