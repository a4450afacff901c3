// SPDX-License-Identifier: Apache-2.0
//
// Case-insensitive corpus BLEU with up to 4-grams, one reference per sentence.
#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ssnmt/tokens.hpp"

namespace ssnmt {

struct BleuReport {
  double bleu = 0.0;
  std::array<double, 4> n_gram_precisions{};
  /// exp(1 - r/c) when c < r, else 1; 0 for an empty hypothesis corpus.
  double brevity_penalty = 1.0;
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};

  /// Score x 100 with two decimals, e.g. "33.09".
  std::string percent() const;
};

struct BleuOptions {
  /// Add-one smoothing of the 2..4-gram precisions.
  bool smoothing = false;
  bool lowercase = true;
};

using TokenSequence = std::vector<std::string>;

/// Contiguous n-grams with multiplicity; ContractError unless 1 <= n <= 4.
std::map<TokenSequence, std::size_t> sentence_ngrams(std::span<const std::string> tokens,
                                                     std::size_t n);
std::map<Sentence, std::size_t> sentence_ngrams(std::span<const TokenId> tokens, std::size_t n);

BleuReport corpus_bleu(std::span<const TokenSequence> hypotheses,
                       std::span<const TokenSequence> references, const BleuOptions& options = {});
/// Id-level BLEU; `lowercase` is ignored.
BleuReport corpus_bleu(std::span<const Sentence> hypotheses, std::span<const Sentence> references,
                       const BleuOptions& options = {});

}  // namespace ssnmt
