#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "probmed/encoder.hpp"
#include "probmed/optimizer.hpp"

namespace probmed {

struct Checkpoint {
  Model model;
  OptimizerState optimizer;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

class CheckpointFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Little-endian binary layout: magic, version, model config, the four
/// encoders (parameters and batch-norm running statistics), optimizer state.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace probmed
