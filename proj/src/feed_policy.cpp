// SPDX-License-Identifier: Apache-2.0
#include "ssnmt/feed_policy.hpp"

#include <json.hpp>

#include "ssnmt/errors.hpp"

namespace ssnmt {

std::string to_string(FeedBranch branch) {
  switch (branch) {
    case FeedBranch::ModelEstimate: return "model_estimate";
    case FeedBranch::Gold: return "gold";
    case FeedBranch::Oracle: return "oracle";
  }
  return "?";
}

FeedDecision decide_feed(SentenceFeedState& state, std::size_t step, TokenId gold_prev,
                         TokenId model_prev, const OracleQuery& oracle, double eps, double coin) {
  if (step < 2) throw ContractError("decide_feed: step 1 always consumes BOS");
  if (!(eps >= 0.0 && eps <= 1.0)) throw ContractError("decide_feed: epsilon outside [0, 1]");
  FeedDecision d;
  d.coin = coin;
  d.step = step;
  if (coin < eps) {
    d.branch = FeedBranch::ModelEstimate;
    d.fed_token = model_prev;
    state.used_estimate = true;
  } else if (!state.used_estimate) {
    d.branch = FeedBranch::Gold;
    d.fed_token = gold_prev;
  } else {
    const std::optional<TokenId> proposal = oracle ? oracle() : std::nullopt;
    if (proposal) {
      d.branch = FeedBranch::Oracle;
      d.fed_token = *proposal;
    } else {
      d.branch = FeedBranch::Gold;
      d.fed_token = gold_prev;
      d.fallback = true;
    }
  }
  state.history.push_back(d);
  return d;
}

FeedDecision decide_feed(SentenceFeedState& state, std::size_t step, TokenId gold_prev,
                         TokenId model_prev, const OracleQuery& oracle, double eps, Rng& rng) {
  return decide_feed(state, step, gold_prev, model_prev, oracle, eps, rng.uniform());
}

OracleQuery static_oracle(TokenId gold_prev) {
  return [gold_prev]() -> std::optional<TokenId> { return gold_prev; };
}

void BranchCounts::add(const FeedDecision& d) {
  if (d.fallback) {
    ++fallback;
    return;
  }
  switch (d.branch) {
    case FeedBranch::ModelEstimate: ++model_estimate; break;
    case FeedBranch::Gold: ++gold; break;
    case FeedBranch::Oracle: ++oracle; break;
  }
}

BranchCounts& BranchCounts::operator+=(const BranchCounts& o) {
  bos += o.bos;
  model_estimate += o.model_estimate;
  gold += o.gold;
  oracle += o.oracle;
  fallback += o.fallback;
  return *this;
}

BranchCounts simulate_branch_frequencies(double eps, std::size_t steps, Rng& rng,
                                         std::size_t sentence_length) {
  if (steps < 1) throw ContractError("simulate_branch_frequencies: need at least one step");
  if (sentence_length < 1) sentence_length = 1;
  BranchCounts counts;
  SentenceFeedState state;
  std::size_t step = 2;
  for (std::size_t i = 0; i < steps; ++i) {
    if ((i % sentence_length) == 0) {
      state.reset();
      step = 2;
    }
    counts.add(decide_feed(state, step++, kBos, kEos, static_oracle(kBos), eps, rng));
  }
  return counts;
}

void write_trace_record(std::ostream& out, std::size_t sentence, const FeedDecision& d) {
  nlohmann::ordered_json j;
  j["sentence"] = sentence;
  j["step"] = d.step;
  j["branch"] = to_string(d.branch);
  j["coin"] = d.coin;
  j["fed_token"] = d.fed_token;
  j["fallback"] = d.fallback;
  out << j.dump() << '\n';
}

}  // namespace ssnmt
