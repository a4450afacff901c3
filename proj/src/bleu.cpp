// SPDX-License-Identifier: Apache-2.0
#include "ssnmt/bleu.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

#include "ssnmt/errors.hpp"

namespace ssnmt {

std::string BleuReport::percent() const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", bleu * 100.0);
  return buf;
}

namespace {

template <class T>
std::map<std::vector<T>, std::size_t> ngrams(std::span<const T> tokens, std::size_t n) {
  if (n < 1 || n > 4) throw ContractError("sentence_ngrams: n must be in 1..4");
  std::map<std::vector<T>, std::size_t> out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++out[std::vector<T>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                         tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

template <class T>
BleuReport bleu(std::span<const std::vector<T>> hyps, std::span<const std::vector<T>> refs,
                const BleuOptions& options) {
  if (hyps.empty()) throw ContractError("corpus_bleu: empty corpus");
  if (hyps.size() != refs.size()) {
    throw ContractError("corpus_bleu: " + std::to_string(hyps.size()) + " hypotheses for " +
                        std::to_string(refs.size()) + " references");
  }
  BleuReport r;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const std::span<const T> h(hyps[s]);
    const std::span<const T> g(refs[s]);
    r.hypothesis_length += h.size();
    r.reference_length += g.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto hc = ngrams(h, n);
      const auto gc = ngrams(g, n);
      for (const auto& [gram, count] : hc) {
        const auto it = gc.find(gram);
        if (it != gc.end()) r.matches[n - 1] += std::min(count, it->second);
      }
      r.totals[n - 1] += h.size() >= n ? h.size() - n + 1 : 0;
    }
  }
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    double p = 0.0;
    if (options.smoothing && n > 0) {
      p = (static_cast<double>(r.matches[n]) + 1.0) / (static_cast<double>(r.totals[n]) + 1.0);
    } else if (r.totals[n] > 0) {
      p = static_cast<double>(r.matches[n]) / static_cast<double>(r.totals[n]);
    }
    r.n_gram_precisions[n] = p;
    if (p <= 0.0) {
      zero = true;
    } else {
      log_sum += std::log(p);
    }
  }
  const auto c = static_cast<double>(r.hypothesis_length);
  const auto ref = static_cast<double>(r.reference_length);
  if (r.hypothesis_length == 0) {
    r.brevity_penalty = 0.0;
  } else {
    r.brevity_penalty = c < ref ? std::exp(1.0 - ref / c) : 1.0;
  }
  r.bleu = zero || r.hypothesis_length == 0 ? 0.0 : r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

std::vector<TokenSequence> lowered(std::span<const TokenSequence> corpus) {
  std::vector<TokenSequence> out(corpus.begin(), corpus.end());
  for (auto& sentence : out) {
    for (auto& token : sentence) {
      std::transform(token.begin(), token.end(), token.begin(),
                     [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    }
  }
  return out;
}

}  // namespace

std::map<TokenSequence, std::size_t> sentence_ngrams(std::span<const std::string> tokens,
                                                     std::size_t n) {
  return ngrams(tokens, n);
}

std::map<Sentence, std::size_t> sentence_ngrams(std::span<const TokenId> tokens, std::size_t n) {
  return ngrams(tokens, n);
}

BleuReport corpus_bleu(std::span<const TokenSequence> hypotheses,
                       std::span<const TokenSequence> references, const BleuOptions& options) {
  if (!options.lowercase) {
    return bleu<std::string>(hypotheses, references, options);
  }
  const auto h = lowered(hypotheses);
  const auto r = lowered(references);
  return bleu<std::string>(h, r, options);
}

BleuReport corpus_bleu(std::span<const Sentence> hypotheses, std::span<const Sentence> references,
                       const BleuOptions& options) {
  return bleu<TokenId>(hypotheses, references, options);
}

}  // namespace ssnmt
