// SPDX-License-Identifier: Apache-2.0
//
// Per-step choice of the decoder input during training. At every step after
// the first, a coin p ~ U[0,1) is drawn:
//
//   p < epsilon                          -> the model's own estimate
//   otherwise, no estimate fed yet       -> the gold previous token
//   otherwise                            -> the oracle's proposal
//
// Once an estimate has been fed, the gold token is never fed again for the
// rest of the sentence. The first step always consumes BOS.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ssnmt/random.hpp"
#include "ssnmt/tokens.hpp"

namespace ssnmt {

enum class FeedBranch { ModelEstimate, Gold, Oracle };

std::string to_string(FeedBranch branch);

struct FeedDecision {
  TokenId fed_token = kPad;
  FeedBranch branch = FeedBranch::Gold;
  double coin = 0.0;
  /// Decoder step t (1-based) whose input this decision supplies.
  std::size_t step = 0;
  /// The oracle had no candidate and the gold token was fed instead.
  bool fallback = false;

  bool operator==(const FeedDecision&) const = default;
};

struct SentenceFeedState {
  bool used_estimate = false;
  std::vector<FeedDecision> history;

  void reset() {
    used_estimate = false;
    history.clear();
  }
};

/// Lazily consulted oracle. Returns nullopt when it has no candidate.
using OracleQuery = std::function<std::optional<TokenId>()>;

/// Decides the input of decoder step `step` (>= 2) from an explicit coin.
/// A pure function of its arguments; replaying coins replays decisions.
FeedDecision decide_feed(SentenceFeedState& state, std::size_t step, TokenId gold_prev,
                         TokenId model_prev, const OracleQuery& oracle, double eps, double coin);
/// Same, drawing the coin from `rng`.
FeedDecision decide_feed(SentenceFeedState& state, std::size_t step, TokenId gold_prev,
                         TokenId model_prev, const OracleQuery& oracle, double eps, Rng& rng);

/// Oracle used by plain scheduled sampling: always proposes the gold token.
OracleQuery static_oracle(TokenId gold_prev);

struct BranchCounts {
  std::uint64_t bos = 0;
  std::uint64_t model_estimate = 0;
  std::uint64_t gold = 0;
  std::uint64_t oracle = 0;
  std::uint64_t fallback = 0;

  void add(const FeedDecision& d);
  BranchCounts& operator+=(const BranchCounts& other);
  std::uint64_t total() const { return bos + model_estimate + gold + oracle + fallback; }
  bool operator==(const BranchCounts&) const = default;
};

/// Runs `steps` decisions (sentences of `sentence_length` decided steps,
/// static oracle) and tallies the branches.
BranchCounts simulate_branch_frequencies(double eps, std::size_t steps, Rng& rng,
                                         std::size_t sentence_length = 20);

/// One line-delimited JSON record: sentence, step, branch, coin, fed_token,
/// fallback.
void write_trace_record(std::ostream& out, std::size_t sentence, const FeedDecision& d);

}  // namespace ssnmt
