// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary checkpoint container:
//
//   magic    8 bytes  "SSNMTCKP"
//   version  u32
//   checksum u64      FNV-1a of the payload
//   length   u64      payload byte count
//   payload:
//     kind            string
//     hyperparams     u32 count, then (string key, i64 value)
//     source vocab    u32 count, then strings
//     target vocab    u32 count, then strings
//     fingerprint     string
//     seed            u64
//     tensors         u32 count, then (u32 name length, name, u32 rank,
//                     u64 dims[rank], f64 values row-major)
//
// Strings are u32 length + bytes. All integers and doubles little-endian.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ssnmt/language_model.hpp"
#include "ssnmt/model.hpp"
#include "ssnmt/vocabulary.hpp"

namespace ssnmt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  /// "seq2seq" or "language_model".
  std::string kind;
  std::map<std::string, std::int64_t> hyperparameters;
  ParameterSet parameters;
  std::vector<std::string> source_vocab;
  std::vector<std::string> target_vocab;
  std::string config_fingerprint;
  std::uint64_t seed = 0;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck);
/// Throws IntegrityError on bad magic, unsupported version, truncation or
/// checksum mismatch. Nothing is returned unless the whole file verifies.
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const ModelParameters& params, const Vocabulary& source,
                           const Vocabulary& target, const std::string& fingerprint,
                           std::uint64_t seed);
Checkpoint make_checkpoint(const LanguageModelParameters& params, const Vocabulary& target,
                           const std::string& fingerprint, std::uint64_t seed);

ModelConfig model_config_of(const Checkpoint& ck);
LanguageModelConfig language_model_config_of(const Checkpoint& ck);

/// Rebuilds the model. When `expected` is given, any dimension that differs
/// raises DimensionError naming the field and both values.
ModelParameters model_from_checkpoint(const Checkpoint& ck, const ModelConfig* expected = nullptr);
LanguageModelParameters language_model_from_checkpoint(
    const Checkpoint& ck, const LanguageModelConfig* expected = nullptr);

}  // namespace ssnmt
