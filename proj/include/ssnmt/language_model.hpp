// SPDX-License-Identifier: Apache-2.0
//
// Recurrent language model over the target vocabulary: embedding, one GRU
// transition per token, linear output layer. Used by the LM-based oracle.
#pragma once

#include <cstdint>
#include <span>

#include "ssnmt/gru.hpp"
#include "ssnmt/parameters.hpp"
#include "ssnmt/tokens.hpp"

namespace ssnmt {

struct LanguageModelConfig {
  int vocab = 0;
  int embedding_dim = 32;
  int hidden_dim = 64;

  void validate() const;
  bool operator==(const LanguageModelConfig&) const = default;
};

class LanguageModelParameters {
 public:
  struct Layout {
    std::size_t embedding;
    GruLayout gru;
    std::size_t output_weight, output_bias;
  };

  LanguageModelParameters(const LanguageModelConfig& config, std::uint64_t seed,
                          Scalar init_scale = 0.08);
  LanguageModelParameters(const LanguageModelConfig& config, const ParameterSet& values);

  const LanguageModelConfig& config() const { return config_; }
  const Layout& layout() const { return layout_; }
  ParameterSet& set() { return set_; }
  const ParameterSet& set() const { return set_; }

 private:
  void build_layout();

  LanguageModelConfig config_;
  ParameterSet set_;
  Layout layout_{};
};

struct LanguageModelState {
  Tensor hidden;  // [B x H]
  std::size_t step_index = 0;
};

struct LanguageModelStep {
  Tensor logits;  // [B x V]
  LanguageModelState next;
};

class LanguageModelGraph {
 public:
  LanguageModelGraph(Tape& tape, const LanguageModelParameters& params, bool track_gradients);
  /// Uses leaves already bound to `params.set()`.
  LanguageModelGraph(const LanguageModelParameters& params, BoundParameters bound);

  LanguageModelState initial_state(Eigen::Index batch) const;
  LanguageModelStep step(const LanguageModelState& state, std::span<const TokenId> inputs) const;

  const LanguageModelParameters& params() const { return *params_; }
  const BoundParameters& bound() const { return bound_; }
  Tape& tape() const { return bound_.tape(); }

 private:
  const LanguageModelParameters* params_;
  BoundParameters bound_;
};

}  // namespace ssnmt
