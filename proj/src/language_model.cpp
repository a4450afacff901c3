// SPDX-License-Identifier: Apache-2.0
#include "ssnmt/language_model.hpp"

#include "ssnmt/errors.hpp"

namespace ssnmt {

void LanguageModelConfig::validate() const {
  if (vocab <= kEos) throw ConfigError("language model vocabulary too small");
  if (embedding_dim < 1 || hidden_dim < 1) {
    throw ConfigError("language model dimensions must be positive");
  }
}

LanguageModelParameters::LanguageModelParameters(const LanguageModelConfig& config,
                                                 std::uint64_t seed, Scalar init_scale)
    : config_(config) {
  config_.validate();
  build_layout();
  Rng rng(seed);
  set_.init_uniform(rng, init_scale);
}

LanguageModelParameters::LanguageModelParameters(const LanguageModelConfig& config,
                                                 const ParameterSet& values)
    : config_(config) {
  config_.validate();
  build_layout();
  if (values.size() != set_.size()) {
    throw DimensionError("language model parameter count " + std::to_string(values.size()) +
                         " does not match layout (" + std::to_string(set_.size()) + ")");
  }
  for (std::size_t i = 0; i < set_.size(); ++i) {
    const Matrix& want = set_.value(i);
    const Matrix& got = values.value(i);
    if (values.name(i) != set_.name(i) || got.rows() != want.rows() || got.cols() != want.cols()) {
      throw DimensionError("parameter '" + values.name(i) + "' " + shape_string(got) +
                           " does not match expected '" + set_.name(i) + "' " +
                           shape_string(want));
    }
    set_.value(i) = got;
  }
}

void LanguageModelParameters::build_layout() {
  layout_.embedding = set_.add("embedding", Matrix::Zero(config_.vocab, config_.embedding_dim));
  layout_.gru = add_gru(set_, "gru", config_.embedding_dim, config_.hidden_dim);
  layout_.output_weight = set_.add("output.weight", Matrix::Zero(config_.hidden_dim, config_.vocab));
  layout_.output_bias = set_.add("output.bias", Matrix::Zero(1, config_.vocab));
}

LanguageModelGraph::LanguageModelGraph(Tape& tape, const LanguageModelParameters& params,
                                       bool track_gradients)
    : params_(&params), bound_(tape, params.set(), track_gradients) {}

LanguageModelGraph::LanguageModelGraph(const LanguageModelParameters& params,
                                       BoundParameters bound)
    : params_(&params), bound_(std::move(bound)) {}

LanguageModelState LanguageModelGraph::initial_state(Eigen::Index batch) const {
  LanguageModelState s;
  s.hidden = tape().constant(Matrix::Zero(batch, params_->config().hidden_dim));
  return s;
}

LanguageModelStep LanguageModelGraph::step(const LanguageModelState& state,
                                           std::span<const TokenId> inputs) const {
  if (static_cast<Eigen::Index>(inputs.size()) != state.hidden.rows()) {
    throw DimensionError("language model step: " + std::to_string(inputs.size()) +
                         " tokens for a batch of " + std::to_string(state.hidden.rows()));
  }
  const auto& L = params_->layout();
  const Tensor embedded = gather_rows(bound_[L.embedding], inputs);
  const Tensor h = gru_step(bound_, L.gru, embedded, state.hidden);
  LanguageModelStep out;
  out.logits = add_bias(matmul(h, bound_[L.output_weight]), bound_[L.output_bias]);
  out.next.hidden = h;
  out.next.step_index = state.step_index + 1;
  return out;
}

}  // namespace ssnmt
