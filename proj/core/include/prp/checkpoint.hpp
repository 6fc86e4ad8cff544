#pragma once

#include <filesystem>
#include <limits>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "prp/models.hpp"

namespace prp::models {

inline constexpr std::string_view kCheckpointFormat = "prp-ckpt-v1";

/// Parameters, buffers and optimizer state keyed by hierarchical names, plus a config snapshot.
///
/// On disk: the format tag line, the byte length of a JSON header line, the header itself
/// (kind, epoch, val_loss, config, tensor table), then little-endian float64 payloads.
struct Checkpoint {
  std::string kind = "pretrain";
  nlohmann::json config = nlohmann::json::object();
  int epoch = 0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  StateDict tensors;
};

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace prp::models
