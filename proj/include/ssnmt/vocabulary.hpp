// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ssnmt/tokens.hpp"

namespace ssnmt {

using Words = std::vector<std::string>;

/// Token <-> id map. Ids 0-3 are PAD, BOS, EOS, UNK; corpus tokens follow in
/// order of decreasing frequency (ties lexicographic).
class Vocabulary {
 public:
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kBosToken = "<s>";
  static constexpr std::string_view kEosToken = "</s>";
  static constexpr std::string_view kUnkToken = "UNK";

  /// Specials only.
  Vocabulary();
  /// Adopts an id-ordered token list whose first four entries are the specials.
  explicit Vocabulary(std::vector<std::string> tokens);

  /// Keeps the max_size - 4 most frequent tokens. Requires max_size > 4 and
  /// at least one token in the corpus.
  static Vocabulary build(std::span<const Words> sentences, std::size_t max_size);

  std::size_t size() const { return tokens_.size(); }
  /// UNK for out-of-vocabulary tokens.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  /// Corpus count of a kept token (0 for specials and adopted vocabularies).
  std::uint64_t frequency(TokenId id) const;
  /// Fraction of corpus token occurrences covered by the kept tokens.
  double coverage() const { return coverage_; }

  /// Maps tokens to ids; OOV becomes UNK. No BOS/EOS is added.
  Sentence encode(std::span<const std::string> words) const;
  /// Maps ids back to tokens, stopping at EOS and skipping PAD/BOS.
  Words decode(const Sentence& ids) const;

  /// One token per line, ordered by id.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> frequencies_;
  std::unordered_map<std::string, TokenId> index_;
  double coverage_ = 1.0;
};

}  // namespace ssnmt
