// SPDX-License-Identifier: Apache-2.0
//
// Greedy and beam-search decoding. Output sequences exclude EOS.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ssnmt/model.hpp"

namespace ssnmt {

/// Default length cap: 2 * source length + 5.
std::size_t default_max_len(const Sentence& source);

struct Hypothesis {
  /// Emitted tokens, EOS excluded.
  Sentence tokens;
  /// Sum of log-softmax values of every scored token, EOS included.
  double log_prob = 0.0;
  /// Decoder hidden state after the last scored token, [1 x H].
  Matrix state;
  bool finished = false;
  /// True when the hypothesis ended by emitting EOS rather than hitting the cap.
  bool ended_with_eos = false;

  /// tokens plus EOS when it was emitted.
  Sentence scored_tokens() const;
  std::size_t scored_length() const { return tokens.size() + (ended_with_eos ? 1 : 0); }
  double normalized_log_prob() const;
};

/// Feeds its own argmax (ties to the lowest id) until EOS or max_len tokens.
Sentence greedy_decode(const Sentence& source, const ModelParameters& params, std::size_t max_len);
Sentence greedy_decode(const Sentence& source, const ModelParameters& params);
/// Batched greedy decoding with per-sentence default length caps.
std::vector<Sentence> greedy_decode_batch(std::span<const Sentence> sources,
                                          const ModelParameters& params);

/// Standard beam search. Each step keeps the beam_width best extensions by
/// cumulative log-prob; EOS extensions move to the finished pool. Finished
/// hypotheses compete by length-normalized log-prob.
Hypothesis beam_decode(const Sentence& source, const ModelParameters& params,
                       std::size_t beam_width, std::size_t max_len);
Hypothesis beam_decode(const Sentence& source, const ModelParameters& params,
                       std::size_t beam_width);

/// Translates every sentence: greedy for width 1, beam search otherwise.
std::vector<Sentence> translate_all(std::span<const Sentence> sources,
                                    const ModelParameters& params, std::size_t beam_width);

}  // namespace ssnmt
