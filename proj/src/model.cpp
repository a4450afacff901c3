// SPDX-License-Identifier: Apache-2.0
#include "ssnmt/model.hpp"

#include <algorithm>

#include "ssnmt/errors.hpp"

namespace ssnmt {

void ModelConfig::validate() const {
  if (source_vocab < 1 || target_vocab <= kEos) {
    throw ConfigError("model vocabularies too small: source " + std::to_string(source_vocab) +
                      ", target " + std::to_string(target_vocab));
  }
  if (embedding_dim < 1 || hidden_dim < 1 || attention_dim < 0) {
    throw ConfigError("model dimensions must be positive");
  }
}

ModelParameters::ModelParameters(const ModelConfig& config, std::uint64_t seed,
                                 Scalar init_scale)
    : config_(config) {
  config_.validate();
  build_layout();
  Rng rng(seed);
  set_.init_uniform(rng, init_scale);
}

ModelParameters::ModelParameters(const ModelConfig& config, const ParameterSet& values)
    : config_(config) {
  config_.validate();
  build_layout();
  if (values.size() != set_.size()) {
    throw DimensionError("parameter count " + std::to_string(values.size()) +
                         " does not match model layout (" + std::to_string(set_.size()) + ")");
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

void ModelParameters::build_layout() {
  const Eigen::Index E = config_.embedding_dim;
  const Eigen::Index H = config_.hidden_dim;
  const Eigen::Index A = config_.attention_width();
  Layout& l = layout_;
  l.source_embedding = set_.add("source_embedding", Matrix::Zero(config_.source_vocab, E));
  l.target_embedding = set_.add("target_embedding", Matrix::Zero(config_.target_vocab, E));
  l.encoder_forward = add_gru(set_, "encoder_forward", E, H);
  l.encoder_backward = add_gru(set_, "encoder_backward", E, H);
  l.init_weight = set_.add("decoder_init.weight", Matrix::Zero(2 * H, H));
  l.init_bias = set_.add("decoder_init.bias", Matrix::Zero(1, H));
  l.decoder_first = add_gru(set_, "decoder_first", E, H);
  l.decoder_second = add_gru(set_, "decoder_second", 2 * H, H);
  l.attention_state = set_.add("attention.state", Matrix::Zero(H, A));
  l.attention_annotation = set_.add("attention.annotation", Matrix::Zero(2 * H, A));
  l.attention_bias = set_.add("attention.bias", Matrix::Zero(1, A));
  l.attention_score = set_.add("attention.score", Matrix::Zero(A, 1));
  l.output_weight = set_.add("output.weight", Matrix::Zero(H, config_.target_vocab));
  l.output_bias = set_.add("output.bias", Matrix::Zero(1, config_.target_vocab));
}

Matrix EncoderOutput::annotations_of(std::size_t b) const {
  const Matrix& all = annotations.value();
  const auto len = static_cast<Eigen::Index>(lengths.at(b));
  Matrix out(len, all.cols());
  for (Eigen::Index i = 0; i < len; ++i) {
    out.row(i) = all.row(i * batch() + static_cast<Eigen::Index>(b));
  }
  return out;
}

Seq2SeqGraph::Seq2SeqGraph(Tape& tape, const ModelParameters& params, bool track_gradients)
    : params_(&params), bound_(tape, params.set(), track_gradients) {}

Seq2SeqGraph::Seq2SeqGraph(const ModelParameters& params, BoundParameters bound)
    : params_(&params), bound_(std::move(bound)) {}

namespace {

// h_prev + mask * (h_new - h_prev); skipped when every row is live.
Tensor masked_update(Tape& tape, const Tensor& h_prev, const Tensor& h_new,
                     const Matrix& mask_column) {
  if (mask_column.minCoeff() == 1.0) return h_new;
  return h_prev + scale_rows(h_new - h_prev, tape.constant(mask_column));
}

}  // namespace

EncoderOutput Seq2SeqGraph::encode(std::span<const Sentence> sources) const {
  if (sources.empty()) throw ContractError("encode: empty batch");
  const ModelConfig& cfg = params_->config();
  const auto& L = params_->layout();
  Tape& tp = tape();
  const auto B = static_cast<Eigen::Index>(sources.size());
  std::size_t max_len = 0;
  for (const Sentence& s : sources) {
    if (s.empty()) throw ContractError("encode: empty source sentence");
    for (TokenId id : s) {
      if (id < 0 || id >= cfg.source_vocab) {
        throw IndexError("encode: source id " + std::to_string(id) + " outside vocabulary of " +
                         std::to_string(cfg.source_vocab));
      }
    }
    max_len = std::max(max_len, s.size());
  }
  const auto n = static_cast<Eigen::Index>(max_len);
  const Eigen::Index H = cfg.hidden_dim;

  EncoderOutput enc;
  enc.source_mask = Matrix::Zero(B, n);
  for (Eigen::Index b = 0; b < B; ++b) {
    enc.lengths.push_back(sources[b].size());
    enc.source_mask.row(b).head(static_cast<Eigen::Index>(sources[b].size())).setOnes();
  }

  std::vector<Tensor> embedded;
  embedded.reserve(max_len);
  std::vector<TokenId> column(sources.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index b = 0; b < B; ++b) {
      const Sentence& s = sources[b];
      column[b] = i < static_cast<Eigen::Index>(s.size()) ? s[i] : kPad;
    }
    embedded.push_back(gather_rows(bound_[L.source_embedding], column));
  }

  std::vector<Tensor> forward(max_len);
  std::vector<Tensor> backward(max_len);
  Tensor h = tp.constant(Matrix::Zero(B, H));
  for (Eigen::Index i = 0; i < n; ++i) {
    h = masked_update(tp, h, gru_step(bound_, L.encoder_forward, embedded[i], h),
                      enc.source_mask.col(i));
    forward[i] = h;
  }
  enc.final_state = h;
  h = tp.constant(Matrix::Zero(B, H));
  for (Eigen::Index i = n; i-- > 0;) {
    h = masked_update(tp, h, gru_step(bound_, L.encoder_backward, embedded[i], h),
                      enc.source_mask.col(i));
    backward[i] = h;
  }

  std::vector<Tensor> blocks;
  blocks.reserve(max_len);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Tensor pair[2] = {forward[i], backward[i]};
    blocks.push_back(concat_cols(pair));
  }
  enc.annotations = stack_rows(blocks);
  enc.projected = add_bias(matmul(enc.annotations, bound_[L.attention_annotation]),
                           bound_[L.attention_bias]);
  return enc;
}

EncoderOutput Seq2SeqGraph::encode(const Sentence& source) const {
  return encode(std::span<const Sentence>(&source, 1));
}

DecoderState Seq2SeqGraph::initial_state(const EncoderOutput& enc) const {
  const auto& L = params_->layout();
  Matrix mean_weights = enc.source_mask;
  for (Eigen::Index b = 0; b < enc.batch(); ++b) {
    mean_weights.row(b) /= static_cast<Scalar>(enc.lengths[b]);
  }
  const Tensor mean = weighted_block_sum(enc.annotations, tape().constant(mean_weights));
  DecoderState s;
  s.hidden = tanh(add_bias(matmul(mean, bound_[L.init_weight]), bound_[L.init_bias]));
  s.step_index = 0;
  s.fed_tokens.assign(static_cast<std::size_t>(enc.batch()), kPad);
  s.source_positions = enc.positions();
  return s;
}

DecoderStep Seq2SeqGraph::decode_step(const DecoderState& state, std::span<const TokenId> inputs,
                                      const EncoderOutput& enc) const {
  if (state.source_positions != enc.positions() || state.hidden.rows() != enc.batch()) {
    throw ContractError("decode_step: state was produced for a different encoder output (" +
                        std::to_string(state.source_positions) + " positions vs " +
                        std::to_string(enc.positions()) + ")");
  }
  if (static_cast<Eigen::Index>(inputs.size()) != enc.batch()) {
    throw DimensionError("decode_step: " + std::to_string(inputs.size()) +
                         " input tokens for a batch of " + std::to_string(enc.batch()));
  }
  const auto& L = params_->layout();
  const Eigen::Index n = enc.positions();

  const Tensor embedded = gather_rows(bound_[L.target_embedding], inputs);
  const Tensor first = gru_step(bound_, L.decoder_first, embedded, state.hidden);

  const Tensor query = matmul(first, bound_[L.attention_state]);
  const Tensor hidden = tanh(enc.projected + tile_rows(query, n));
  const Tensor scores = fold_blocks(matmul(hidden, bound_[L.attention_score]), n);
  const Tensor attention = softmax_rows(scores, &enc.source_mask);
  const Tensor context = weighted_block_sum(enc.annotations, attention);

  const Tensor second = gru_step(bound_, L.decoder_second, context, first);
  const Tensor logits = add_bias(matmul(second, bound_[L.output_weight]), bound_[L.output_bias]);

  DecoderStep out;
  out.logits = logits;
  out.attention = attention;
  out.next.hidden = second;
  out.next.step_index = state.step_index + 1;
  out.next.fed_tokens.assign(inputs.begin(), inputs.end());
  out.next.source_positions = n;
  return out;
}

Tensor sentence_log_prob(const Seq2SeqGraph& graph, const Sentence& source,
                         const Sentence& target, const Sentence& feed) {
  if (feed.size() != target.size()) {
    throw ContractError("sentence_log_prob: " + std::to_string(feed.size()) +
                        " feed tokens for a target of length " + std::to_string(target.size()));
  }
  Tape& tp = graph.tape();
  if (target.empty()) return tp.scalar(0.0);
  if (feed.front() != kBos) throw ContractError("sentence_log_prob: feed must start with BOS");
  const EncoderOutput enc = graph.encode(source);
  DecoderState state = graph.initial_state(enc);
  Tensor total;
  for (std::size_t t = 0; t < target.size(); ++t) {
    const TokenId in[1] = {feed[t]};
    DecoderStep step = graph.decode_step(state, in, enc);
    const Tensor nll = softmax_cross_entropy(step.logits, target[t]);
    total = total.valid() ? total + nll : nll;
    state = std::move(step.next);
  }
  return -1.0 * total;
}

double sentence_log_prob(const ModelParameters& params, const Sentence& source,
                         const Sentence& target, const Sentence& feed) {
  Tape tape;
  const Seq2SeqGraph graph(tape, params, false);
  return sentence_log_prob(graph, source, target, feed).item();
}

Sentence teacher_forcing_feed(const Sentence& target) {
  Sentence feed;
  if (target.empty()) return feed;
  feed.reserve(target.size());
  feed.push_back(kBos);
  feed.insert(feed.end(), target.begin(), target.end() - 1);
  return feed;
}

}  // namespace ssnmt
