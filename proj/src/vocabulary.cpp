// SPDX-License-Identifier: Apache-2.0
#include "ssnmt/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "ssnmt/errors.hpp"

namespace ssnmt {

Vocabulary::Vocabulary()
    : Vocabulary(std::vector<std::string>{std::string(kPadToken), std::string(kBosToken),
                                          std::string(kEosToken), std::string(kUnkToken)}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kNumSpecials || tokens_[kPad] != kPadToken || tokens_[kBos] != kBosToken ||
      tokens_[kEos] != kEosToken || tokens_[kUnk] != kUnkToken) {
    throw ContractError("vocabulary must start with the four reserved tokens");
  }
  frequencies_.assign(tokens_.size(), 0);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw ContractError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::build(std::span<const Words> sentences, std::size_t max_size) {
  if (max_size <= kNumSpecials) {
    throw ContractError("vocabulary size must exceed the " + std::to_string(kNumSpecials) +
                        " reserved tokens");
  }
  std::map<std::string, std::uint64_t> counts;
  std::uint64_t total = 0;
  for (const Words& s : sentences) {
    for (const std::string& w : s) {
      ++counts[w];
      ++total;
    }
  }
  if (total == 0) throw ContractError("cannot build a vocabulary from an empty corpus");

  std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is lexicographic, so a stable sort keeps ties in that order.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = std::min(ranked.size(), max_size - kNumSpecials);

  Vocabulary v;
  std::uint64_t covered = 0;
  for (std::size_t i = 0; i < keep; ++i) {
    const auto& [word, count] = ranked[i];
    if (v.index_.count(word)) continue;  // corpus text that spells a reserved token
    v.index_.emplace(word, static_cast<TokenId>(v.tokens_.size()));
    v.tokens_.push_back(word);
    v.frequencies_.push_back(count);
    covered += count;
  }
  v.coverage_ = static_cast<double>(covered) / static_cast<double>(total);
  return v;
}

TokenId Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " +
                     std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::frequency(TokenId id) const {
  token(id);
  return frequencies_[static_cast<std::size_t>(id)];
}

Sentence Vocabulary::encode(std::span<const std::string> words) const {
  Sentence out;
  out.reserve(words.size());
  for (const std::string& w : words) out.push_back(id(w));
  return out;
}

Words Vocabulary::decode(const Sentence& ids) const {
  Words out;
  for (TokenId id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos) continue;
    out.push_back(token(id));
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary file " + path.string());
  for (const std::string& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return Vocabulary(std::move(tokens));
}

}  // namespace ssnmt
