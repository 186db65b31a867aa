// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "unlearn/engine.hpp"

namespace unlearn {

inline constexpr std::uint64_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Blob {
  std::string name;
  std::vector<std::uint64_t> words;  // doubles are stored as their bit patterns
};

/// In-memory form of a checkpoint container.
///
/// Byte layout (all integers little-endian u64):
///   "ULCKPT\0\0" | version | kind | config text | blob count |
///   { name | word count | words... }* | FNV-1a 64 of everything before
/// where strings are a length followed by raw bytes.
struct CheckpointFile {
  std::uint64_t version = kCheckpointVersion;
  std::string kind;         // "teacher", "unlearn" or "retrain"
  std::string config_text;  // serialize_config() of the producing run
  std::vector<Blob> blobs;

  bool has(std::string_view name) const;
  /// Throws CheckpointError when absent.
  const Blob& blob(std::string_view name) const;
  void add(std::string name, std::vector<std::uint64_t> words);
  void add_doubles(std::string name, std::span<const double> values);
  std::vector<double> doubles(std::string_view name) const;
};

std::string encode_checkpoint(const CheckpointFile& file);
/// Validates magic, version, framing and checksum; throws CheckpointError.
CheckpointFile decode_checkpoint(std::string_view bytes);

/// Writes through a temporary file and renames it into place.
void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file);
CheckpointFile read_checkpoint(const std::filesystem::path& path);

CheckpointFile model_checkpoint(const ModelHandle& model, const RunConfig& config, std::string kind);
/// The stored model, with config_out (if given) set from the config echo.
ModelHandle model_from_checkpoint(const CheckpointFile& file, RunConfig* config_out = nullptr);

CheckpointFile state_checkpoint(const TrainState& state, const RunConfig& config);
TrainState state_from_checkpoint(const CheckpointFile& file, RunConfig* config_out = nullptr);

/// Config echo of any checkpoint.
RunConfig checkpoint_config(const CheckpointFile& file);

}  // namespace unlearn
