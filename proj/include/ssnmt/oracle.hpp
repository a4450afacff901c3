// SPDX-License-Identifier: Apache-2.0
//
// Dynamic oracles. Given the tokens actually fed to the student decoder so
// far, an oracle proposes the next input token:
//
//   LanguageModel  frozen target-side LM; argmax restricted to the tokens of
//                  the current gold reference (ties -> lowest id)
//   PretrainedNMT  frozen translation model run on the same source; argmax
//                  over the whole target vocabulary
//
// Handles are batched: row b tracks sentence b of the current batch. The
// per-sentence API is the B = 1 case.
#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssnmt/language_model.hpp"
#include "ssnmt/model.hpp"

namespace ssnmt {

enum class OracleKind { None, LanguageModel, PretrainedNMT };

OracleKind parse_oracle_kind(const std::string& name);
std::string to_string(OracleKind kind);

/// Multiset of gold target token ids with O(1) membership.
class ReferenceBag {
 public:
  ReferenceBag() = default;
  ReferenceBag(const Sentence& gold, std::size_t vocab);

  bool contains(TokenId id) const { return count(id) > 0; }
  int count(TokenId id) const;
  /// Total size with multiplicity.
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  /// Distinct members, ascending.
  std::vector<TokenId> members() const;
  void remove_one(TokenId id);

 private:
  std::vector<int> counts_;
  std::size_t size_ = 0;
};

class OracleHandle {
 public:
  /// `deplete_bag` removes each emitted token from the reference bag.
  static OracleHandle language_model(std::shared_ptr<const LanguageModelParameters> lm,
                                     bool deplete_bag = false);
  static OracleHandle pretrained(std::shared_ptr<const ModelParameters> model);

  OracleHandle(OracleHandle&&) noexcept;
  OracleHandle& operator=(OracleHandle&&) noexcept;
  ~OracleHandle();

  OracleKind kind() const { return kind_; }

  /// Starts a new batch: fresh recurrent state per row; LM bags rebuilt from
  /// the gold targets; the NMT encoder run over the sources.
  void reset_for_batch(std::span<const Sentence> sources, std::span<const Sentence> gold_targets);
  void reset_for_sentence(const Sentence& source, const Sentence& gold_target);

  /// Records the token fed to the student at the current step for every row.
  /// The recurrent state catches up lazily on the next proposal.
  void advance(std::span<const TokenId> fed);
  /// Next token for `row` given everything advanced so far; nullopt when the
  /// LM bag is empty.
  std::optional<TokenId> propose(std::size_t row);
  /// Single-sentence form: advance by `prefix_last_token`, then propose.
  std::optional<TokenId> next(TokenId prefix_last_token);

  std::size_t batch() const;
  /// Tokens advanced so far (per row).
  std::size_t prefix_length() const;
  const ReferenceBag& bag(std::size_t row) const;
  /// Recurrent state of `row` after catching up, [1 x H].
  Matrix hidden_state(std::size_t row);
  /// Checksum of the frozen parameters.
  std::uint64_t parameter_checksum() const;

 private:
  struct Impl;
  explicit OracleHandle(std::unique_ptr<Impl> impl, OracleKind kind);

  std::unique_ptr<Impl> impl_;
  OracleKind kind_;
};

/// LM oracle step; ContractError for other handle kinds.
std::optional<TokenId> lm_oracle_next(OracleHandle& handle, TokenId prefix_last_token);
/// Pre-trained NMT oracle step; ContractError for other handle kinds.
std::optional<TokenId> pretrained_oracle_next(OracleHandle& handle, TokenId prefix_last_token);

}  // namespace ssnmt
