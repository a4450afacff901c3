// SPDX-License-Identifier: Apache-2.0
//
// Attentional encoder-decoder: bidirectional GRU encoder, conditional GRU
// decoder (GRU transition, additive attention read, second GRU transition)
// and a linear output layer. All computations are batched: a batch of B
// sentences is right-padded and masked, and a single sentence is B = 1.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ssnmt/gru.hpp"
#include "ssnmt/parameters.hpp"
#include "ssnmt/tokens.hpp"

namespace ssnmt {

struct ModelConfig {
  int source_vocab = 0;
  int target_vocab = 0;
  int embedding_dim = 32;
  int hidden_dim = 64;
  /// Width of the attention hidden layer; 0 means hidden_dim.
  int attention_dim = 0;

  int attention_width() const { return attention_dim > 0 ? attention_dim : hidden_dim; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// theta for the encoder-decoder.
class ModelParameters {
 public:
  struct Layout {
    std::size_t source_embedding, target_embedding;
    GruLayout encoder_forward, encoder_backward;
    std::size_t init_weight, init_bias;
    GruLayout decoder_first, decoder_second;
    std::size_t attention_state, attention_annotation, attention_bias, attention_score;
    std::size_t output_weight, output_bias;
  };

  /// Uniform(-init_scale, init_scale) initialisation from `seed`.
  ModelParameters(const ModelConfig& config, std::uint64_t seed, Scalar init_scale = 0.08);
  /// Adopts trained values. Throws DimensionError when names or shapes do not
  /// match the configuration.
  ModelParameters(const ModelConfig& config, const ParameterSet& values);

  const ModelConfig& config() const { return config_; }
  const Layout& layout() const { return layout_; }
  ParameterSet& set() { return set_; }
  const ParameterSet& set() const { return set_; }

 private:
  void build_layout();

  ModelConfig config_;
  ParameterSet set_;
  Layout layout_{};
};

/// Encoder output C: one annotation per source position.
struct EncoderOutput {
  /// [(n*B) x 2H], position-major: row i*B + b is position i of sentence b.
  Tensor annotations;
  /// annotations projected into the attention space plus bias, [(n*B) x A].
  Tensor projected;
  /// Forward-direction state at each sentence's last token, [B x H].
  Tensor final_state;
  /// 1 for real source positions, 0 for padding, [B x n].
  Matrix source_mask;
  std::vector<std::size_t> lengths;

  Eigen::Index positions() const { return source_mask.cols(); }
  Eigen::Index batch() const { return source_mask.rows(); }
  /// Annotations of sentence b as [len_b x 2H].
  Matrix annotations_of(std::size_t b) const;
};

struct DecoderState {
  Tensor hidden;  // [B x H]
  std::size_t step_index = 0;
  /// Token consumed at the step that produced this state (kPad before any).
  std::vector<TokenId> fed_tokens;
  Eigen::Index source_positions = 0;
};

struct DecoderStep {
  Tensor logits;     // [B x V_tgt]
  DecoderState next;
  Tensor attention;  // [B x n]
};

/// Model parameters bound to a tape. Gradients flow into the parameter
/// leaves only when `track_gradients` is set.
class Seq2SeqGraph {
 public:
  Seq2SeqGraph(Tape& tape, const ModelParameters& params, bool track_gradients);
  /// Uses leaves already bound to `params.set()`.
  Seq2SeqGraph(const ModelParameters& params, BoundParameters bound);

  EncoderOutput encode(std::span<const Sentence> sources) const;
  EncoderOutput encode(const Sentence& source) const;
  DecoderState initial_state(const EncoderOutput& enc) const;
  /// Consumes one input token per row and emits one distribution per row.
  DecoderStep decode_step(const DecoderState& state, std::span<const TokenId> inputs,
                          const EncoderOutput& enc) const;

  const ModelParameters& params() const { return *params_; }
  const BoundParameters& bound() const { return bound_; }
  Tape& tape() const { return bound_.tape(); }

 private:
  const ModelParameters* params_;
  BoundParameters bound_;
};

/// Scalar tensor sum_t log softmax(logits_t)[target_t], where step t consumes
/// feed[t]. With feed = BOS + target[0..m-1] this is the teacher-forced
/// sentence log-likelihood.
Tensor sentence_log_prob(const Seq2SeqGraph& graph, const Sentence& source,
                         const Sentence& target, const Sentence& feed);
double sentence_log_prob(const ModelParameters& params, const Sentence& source,
                         const Sentence& target, const Sentence& feed);
/// BOS followed by all but the last target token.
Sentence teacher_forcing_feed(const Sentence& target);

}  // namespace ssnmt
