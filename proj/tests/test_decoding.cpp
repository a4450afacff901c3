// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "ssnmt/decoding.hpp"
#include "ssnmt/errors.hpp"

namespace ssnmt {
namespace {

Sentence random_source(Rng& rng, int vocab, std::size_t len) {
  Sentence s;
  for (std::size_t i = 0; i < len; ++i) s.push_back(static_cast<TokenId>(rng.below(vocab)));
  return s;
}

double scored_log_prob(const ModelParameters& p, const Sentence& src, const Sentence& scored) {
  return sentence_log_prob(p, src, scored, teacher_forcing_feed(scored));
}

struct Scored {
  Sentence tokens;
  double normalized;
};

// Every output the decoder can finish with under `max_len`: any EOS-ended
// prefix, or max_len tokens without EOS.
void enumerate(const ModelParameters& p, const Sentence& src, Sentence& prefix,
               std::size_t max_len, Scored& best) {
  const int V = p.config().target_vocab;
  for (TokenId v = 0; v < V; ++v) {
    Sentence scored = prefix;
    scored.push_back(v);
    if (v == kEos || scored.size() == max_len) {
      const double lp = scored_log_prob(p, src, scored);
      const double norm = lp / static_cast<double>(scored.size());
      if (norm > best.normalized) {
        best.normalized = norm;
        best.tokens = v == kEos ? prefix : scored;
      }
      continue;
    }
    prefix.push_back(v);
    enumerate(p, src, prefix, max_len, best);
    prefix.pop_back();
  }
}

TEST(Greedy, EosRiggedModelProducesEmptyOutput) {
  ModelParameters p({6, 8, 4, 5, 0}, 1);
  p.set().value(p.set().index("output.bias"))(0, kEos) = 50.0;
  const Sentence src{4, 5, 3};
  EXPECT_TRUE(greedy_decode(src, p).empty());
  const Hypothesis h = beam_decode(src, p, 4);
  EXPECT_TRUE(h.tokens.empty());
  EXPECT_TRUE(h.ended_with_eos);
}

TEST(Greedy, StopsAtLengthCap) {
  ModelParameters p({6, 8, 4, 5, 0}, 1);
  p.set().value(p.set().index("output.weight")).setZero();
  p.set().value(p.set().index("output.bias"))(0, 6) = 50.0;
  const Sentence src{4, 5};
  EXPECT_EQ(default_max_len(src), 9u);
  EXPECT_EQ(greedy_decode(src, p), Sentence(9, 6));
  EXPECT_EQ(greedy_decode(src, p, 3), Sentence(3, 6));
  EXPECT_THROW(greedy_decode(src, p, 0), ContractError);
  const Hypothesis h = beam_decode(src, p, 3);
  EXPECT_EQ(h.tokens, Sentence(9, 6));
  EXPECT_FALSE(h.ended_with_eos);
}

TEST(Greedy, BatchedMatchesSingle) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    ModelParameters p({7, 6, 4, 6, 0}, trial + 1, 1.0);
    std::vector<Sentence> sources;
    for (int i = 0; i < 5; ++i) sources.push_back(random_source(rng, 7, 1 + rng.below(5)));
    const auto batched = greedy_decode_batch(sources, p);
    for (std::size_t i = 0; i < sources.size(); ++i) {
      EXPECT_EQ(batched[i], greedy_decode(sources[i], p));
    }
  }
}

TEST(Beam, WidthOneEqualsGreedy) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    ModelParameters p({6, 5, 4, 5, 0}, 100 + trial, 1.0);
    const Sentence src = random_source(rng, 6, 1 + rng.below(4));
    EXPECT_EQ(beam_decode(src, p, 1).tokens, greedy_decode(src, p)) << "instance " << trial;
  }
}

TEST(Beam, FullWidthMatchesExhaustiveSearch) {
  Rng rng(7);
  constexpr std::size_t kMaxLen = 3;
  for (int trial = 0; trial < 100; ++trial) {
    ModelParameters p({5, 3, 4, 5, 0}, 500 + trial, 1.5);
    const Sentence src = random_source(rng, 5, 1 + rng.below(4));
    Scored best{{}, -std::numeric_limits<double>::infinity()};
    Sentence prefix;
    enumerate(p, src, prefix, kMaxLen, best);
    const Hypothesis h = beam_decode(src, p, 27, kMaxLen);
    EXPECT_EQ(h.tokens, best.tokens) << "instance " << trial;
    EXPECT_NEAR(h.normalized_log_prob(), best.normalized, 1e-9);
  }
}

TEST(Beam, LogProbBookkeeping) {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    ModelParameters p({6, 7, 4, 5, 0}, 900 + trial, 1.0);
    const Sentence src = random_source(rng, 6, 1 + rng.below(5));
    for (std::size_t width : {1u, 2u, 5u}) {
      const Hypothesis h = beam_decode(src, p, width);
      const Sentence scored = h.scored_tokens();
      ASSERT_FALSE(scored.empty());
      EXPECT_NEAR(h.log_prob, scored_log_prob(p, src, scored), 1e-9);
      EXPECT_NEAR(h.normalized_log_prob(), h.log_prob / static_cast<double>(scored.size()),
                  1e-12);
    }
  }
}

TEST(Beam, ExhaustiveResultDominatesGreedy) {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    ModelParameters p({5, 3, 4, 5, 0}, 1300 + trial, 1.5);
    const Sentence src = random_source(rng, 5, 2);
    const Hypothesis beam = beam_decode(src, p, 27, 3);
    const Hypothesis greedy = beam_decode(src, p, 1, 3);
    EXPECT_GE(beam.normalized_log_prob(), greedy.normalized_log_prob() - 1e-12);
  }
}

TEST(Beam, Preconditions) {
  ModelParameters p({5, 3, 4, 5, 0}, 1);
  EXPECT_THROW(beam_decode(Sentence{1}, p, 0), ContractError);
  EXPECT_THROW(beam_decode(Sentence{1}, p, 2, 0), ContractError);
  EXPECT_THROW(beam_decode(Sentence{}, p, 2), ContractError);
}

TEST(TranslateAll, DispatchesOnWidth) {
  ModelParameters p({6, 7, 4, 5, 0}, 4, 1.0);
  const std::vector<Sentence> src{{4, 5}, {3}, {1, 2, 3}};
  const auto greedy = translate_all(src, p, 1);
  const auto beam = translate_all(src, p, 3);
  for (std::size_t i = 0; i < src.size(); ++i) {
    EXPECT_EQ(greedy[i], greedy_decode(src[i], p));
    EXPECT_EQ(beam[i], beam_decode(src[i], p, 3).tokens);
  }
}

}  // namespace
}  // namespace ssnmt
