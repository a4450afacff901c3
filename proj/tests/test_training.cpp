// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ssnmt/errors.hpp"
#include "ssnmt/training.hpp"

namespace ssnmt {
namespace {

constexpr int kVocab = 12;

ModelConfig small_config() { return {kVocab, kVocab, 6, 8, 0}; }

Sentence random_sentence(Rng& rng, std::size_t len) {
  Sentence s;
  for (std::size_t i = 0; i < len; ++i) {
    s.push_back(kNumSpecials + static_cast<TokenId>(rng.below(kVocab - kNumSpecials)));
  }
  return s;
}

ParallelCorpus random_corpus(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  ParallelCorpus c;
  for (std::size_t i = 0; i < n; ++i) {
    c.source.push_back(random_sentence(rng, 2 + rng.below(4)));
    c.target.push_back(random_sentence(rng, 1 + rng.below(5)));
  }
  return c;
}

TrainingConfig small_training(double eps) {
  TrainingConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.schedule = SamplingSchedule::constant(eps);
  return cfg;
}

Sentence with_eos(Sentence s) {
  s.push_back(kEos);
  return s;
}

TEST(Optimizer, AdaGradFirstStep) {
  ParameterSet set;
  set.add("w", Matrix::Zero(1, 2));
  OptimizerState opt = OptimizerState::for_parameters(set);
  Matrix g(1, 2);
  g << 3.0, -0.5;
  adagrad_update(set, opt, {g}, 0.1, 1e-8);
  EXPECT_NEAR(set.value(0)(0, 0), -0.1, 1e-9);
  EXPECT_NEAR(set.value(0)(0, 1), 0.1, 1e-7);
  adagrad_update(set, opt, {g}, 0.1, 1e-8);
  EXPECT_NEAR(set.value(0)(0, 0), -0.1 - 0.1 / std::sqrt(2.0), 1e-9);
  EXPECT_THROW(adagrad_update(set, opt, {}, 0.1, 1e-8), DimensionError);
}

TEST(Optimizer, ClippingBoundsGlobalNormAndKeepsDirection) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Matrix> grads{Matrix::Random(3, 4) * 10.0, Matrix::Random(1, 5) * 10.0};
    grads[0](0, 0) += rng.uniform(-50, 50);
    const std::vector<Matrix> before = grads;
    double sq = 0.0;
    for (const Matrix& g : grads) sq += g.squaredNorm();
    const double norm = clip_gradients(grads, 5.0);
    EXPECT_NEAR(norm, std::sqrt(sq), 1e-9);
    double after = 0.0;
    for (const Matrix& g : grads) after += g.squaredNorm();
    EXPECT_LE(std::sqrt(after), 5.0 + 1e-9);
    const double ratio = grads[1](0, 0) / before[1](0, 0);
    EXPECT_NEAR(ratio, std::min(1.0, 5.0 / norm), 1e-12);
  }
  std::vector<Matrix> small{Matrix::Constant(1, 1, 0.5)};
  clip_gradients(small, 5.0);
  EXPECT_EQ(small[0](0, 0), 0.5);
}

TEST(TrainStep, TeacherForcedLossIsMeanTokenCrossEntropy) {
  Rng rng(5);
  ModelParameters params(small_config(), 3, 0.5);
  const std::vector<Sentence> src{random_sentence(rng, 3), random_sentence(rng, 5),
                                  random_sentence(rng, 2)};
  const std::vector<Sentence> tgt{random_sentence(rng, 1), random_sentence(rng, 4),
                                  random_sentence(rng, 2)};
  double nll = 0.0;
  std::size_t tokens = 0;
  for (std::size_t b = 0; b < src.size(); ++b) {
    const Sentence y = with_eos(tgt[b]);
    nll -= sentence_log_prob(params, src[b], y, teacher_forcing_feed(y));
    tokens += y.size();
  }
  OptimizerState opt = OptimizerState::for_parameters(params.set());
  Rng coins(1);
  StepContext ctx;
  ctx.coins = &coins;
  const StepResult r = train_step(src, tgt, params, opt, small_training(0.0), ctx);
  EXPECT_EQ(r.tokens, tokens);
  EXPECT_NEAR(r.loss, nll / static_cast<double>(tokens), 1e-10);
  EXPECT_EQ(r.branches.bos, 3u);
  EXPECT_EQ(r.branches.gold, tokens - 3);
  EXPECT_EQ(r.branches.total(), tokens);
}

TEST(TrainStep, SingleTokenTargetScoresOneWordAndEos) {
  ModelParameters params(small_config(), 8, 0.5);
  const Sentence src{4, 5};
  const Sentence tgt{7};
  const double expected =
      -sentence_log_prob(params, src, Sentence{7, kEos}, Sentence{kBos, 7}) / 2.0;
  OptimizerState opt = OptimizerState::for_parameters(params.set());
  Rng coins(1);
  StepContext ctx;
  ctx.coins = &coins;
  const std::vector<Sentence> s{src};
  const std::vector<Sentence> t{tgt};
  EXPECT_NEAR(train_step(s, t, params, opt, small_training(0.0), ctx).loss, expected, 1e-10);
}

TEST(TrainStep, FullSamplingFeedsOnlyEstimates) {
  const ParallelCorpus c = random_corpus(2, 6);
  ModelParameters params(small_config(), 3, 0.5);
  OptimizerState opt = OptimizerState::for_parameters(params.set());
  Rng coins(1);
  StepContext ctx;
  ctx.coins = &coins;
  ctx.epsilon = 1.0;
  const StepResult r = train_step(c.source, c.target, params, opt, small_training(1.0), ctx);
  EXPECT_EQ(r.branches.bos, 6u);
  EXPECT_EQ(r.branches.gold, 0u);
  EXPECT_EQ(r.branches.oracle, 0u);
  EXPECT_EQ(r.branches.model_estimate, r.tokens - 6);
}

// Runs the decoder on its own argmax for `steps` steps, as the feed policy
// does when every coin selects the model estimate.
Sentence argmax_feed(const ModelParameters& params, const Sentence& src, std::size_t steps) {
  Tape tape;
  const Seq2SeqGraph g(tape, params, false);
  const EncoderOutput enc = g.encode(src);
  DecoderState state = g.initial_state(enc);
  Sentence feed{kBos};
  while (feed.size() < steps) {
    const TokenId in[1] = {feed.back()};
    DecoderStep step = g.decode_step(state, in, enc);
    Eigen::Index arg = 0;
    step.logits.value().row(0).maxCoeff(&arg);
    feed.push_back(static_cast<TokenId>(arg));
    state = std::move(step.next);
  }
  return feed;
}

std::shared_ptr<LanguageModelParameters> biased_lm(TokenId favourite) {
  auto lm = std::make_shared<LanguageModelParameters>(LanguageModelConfig{kVocab, 4, 5}, 1);
  ParameterSet& set = lm->set();
  set.value(set.index("output.weight")).setZero();
  set.value(set.index("output.bias"))(0, favourite) = 3.0;
  return lm;
}

TEST(TrainStep, OracleSubstitutedTargets) {
  ModelParameters params(small_config(), 12, 0.5);
  const Sentence src{4, 6, 8};
  const Sentence tgt{5, 9, 10, 9};
  // The LM always prefers 9, which is in the reference.
  OracleHandle oracle = OracleHandle::language_model(biased_lm(9));
  const Sentence feed = argmax_feed(params, src, tgt.size() + 1);
  const Sentence substituted{5, 9, 9, 9, kEos};
  const double expected = -sentence_log_prob(params, src, substituted, feed) / 5.0;

  TrainingConfig cfg = small_training(1.0);
  cfg.oracle_kind = OracleKind::LanguageModel;
  cfg.loss_target = LossTarget::OracleSubstituted;
  OptimizerState opt = OptimizerState::for_parameters(params.set());
  Rng coins(1);
  StepContext ctx;
  ctx.coins = &coins;
  ctx.epsilon = 1.0;
  ctx.oracle = &oracle;
  const std::vector<Sentence> s{src};
  const std::vector<Sentence> t{tgt};
  EXPECT_NEAR(train_step(s, t, params, opt, cfg, ctx).loss, expected, 1e-10);
}

TEST(TrainStep, OracleSubstitutionNeedsAnEstimate) {
  const Sentence src{4, 6, 8};
  const Sentence tgt{5, 9, 10, 9};
  double losses[2];
  for (int i = 0; i < 2; ++i) {
    ModelParameters params(small_config(), 12, 0.5);
    OracleHandle oracle = OracleHandle::language_model(biased_lm(9));
    TrainingConfig cfg = small_training(0.0);
    cfg.oracle_kind = OracleKind::LanguageModel;
    cfg.loss_target = i == 0 ? LossTarget::Gold : LossTarget::OracleSubstituted;
    OptimizerState opt = OptimizerState::for_parameters(params.set());
    Rng coins(1);
    StepContext ctx;
    ctx.coins = &coins;
    ctx.oracle = &oracle;
    const std::vector<Sentence> s{src};
    const std::vector<Sentence> t{tgt};
    losses[i] = train_step(s, t, params, opt, cfg, ctx).loss;
  }
  EXPECT_EQ(losses[0], losses[1]);
}

TEST(TrainStep, NonFiniteParametersRaiseNumericError) {
  ModelParameters params(small_config(), 3);
  params.set().value(params.set().index("output.bias"))(0, 4) = std::nan("");
  OptimizerState opt = OptimizerState::for_parameters(params.set());
  Rng coins(1);
  StepContext ctx;
  ctx.coins = &coins;
  const std::vector<Sentence> s{{4, 5}};
  const std::vector<Sentence> t{{6}};
  EXPECT_THROW(train_step(s, t, params, opt, small_training(0.0), ctx), NumericError);
}

TEST(TrainStep, Preconditions) {
  ModelParameters params(small_config(), 3);
  OptimizerState opt = OptimizerState::for_parameters(params.set());
  Rng coins(1);
  StepContext ctx;
  const std::vector<Sentence> s{{4, 5}};
  const std::vector<Sentence> t{{6}};
  EXPECT_THROW(train_step(s, t, params, opt, small_training(0.0), ctx), ContractError);
  ctx.coins = &coins;
  const std::vector<Sentence> empty{{}};
  EXPECT_THROW(train_step(s, empty, params, opt, small_training(0.0), ctx), ContractError);
  EXPECT_THROW(train_step(s, std::span<const Sentence>(), params, opt, small_training(0.0), ctx),
               ContractError);
  TrainingConfig cfg = small_training(0.0);
  cfg.max_length = 1;
  EXPECT_THROW(train_step(s, t, params, opt, cfg, ctx), ContractError);
}

std::string run_record_text(const RunRecord& r) {
  std::ostringstream out;
  write_run_record(out, r);
  return out.str();
}

TEST(TrainModel, ZeroEpsilonOracleRunsEqualTeacherForcing) {
  const ParallelCorpus c = random_corpus(3, 20);
  ModelParameters baseline(small_config(), 21, 0.3);
  const RunRecord base_record = train_model(c, baseline, small_training(0.0), nullptr);

  ModelParameters with_lm(small_config(), 21, 0.3);
  OracleHandle lm = OracleHandle::language_model(
      std::make_shared<LanguageModelParameters>(LanguageModelConfig{kVocab, 4, 5}, 2, 0.5));
  TrainingConfig cfg = small_training(0.0);
  cfg.oracle_kind = OracleKind::LanguageModel;
  const RunRecord lm_record = train_model(c, with_lm, cfg, &lm);

  ModelParameters with_pre(small_config(), 21, 0.3);
  OracleHandle pre = OracleHandle::pretrained(
      std::make_shared<ModelParameters>(small_config(), 5, 0.5));
  cfg.oracle_kind = OracleKind::PretrainedNMT;
  const RunRecord pre_record = train_model(c, with_pre, cfg, &pre);

  EXPECT_TRUE(baseline.set() == with_lm.set());
  EXPECT_TRUE(baseline.set() == with_pre.set());
  EXPECT_EQ(run_record_text(base_record), run_record_text(lm_record));
  EXPECT_EQ(run_record_text(base_record), run_record_text(pre_record));
  const BranchCounts b = base_record.total_branches();
  EXPECT_EQ(b.model_estimate + b.oracle + b.fallback, 0u);
}

TEST(TrainModel, SameSeedIsBitIdentical) {
  const ParallelCorpus c = random_corpus(4, 24);
  auto run = [&](std::string& record, std::vector<TraceEntry>& trace) {
    ModelParameters params(small_config(), 7, 0.3);
    OracleHandle lm = OracleHandle::language_model(
        std::make_shared<LanguageModelParameters>(LanguageModelConfig{kVocab, 4, 5}, 2, 0.5));
    TrainingConfig cfg = small_training(0.0);
    cfg.schedule = SamplingSchedule::linear(1.0);
    cfg.oracle_kind = OracleKind::LanguageModel;
    cfg.seed = 99;
    TrainOptions opts;
    opts.trace = &trace;
    record = run_record_text(train_model(c, params, cfg, &lm, opts));
    return params.set().checksum();
  };
  std::string r1, r2;
  std::vector<TraceEntry> t1, t2;
  EXPECT_EQ(run(r1, t1), run(r2, t2));
  EXPECT_EQ(r1, r2);
  ASSERT_EQ(t1.size(), t2.size());
  for (std::size_t i = 0; i < t1.size(); ++i) {
    EXPECT_EQ(t1[i].sentence, t2[i].sentence);
    EXPECT_EQ(t1[i].decision, t2[i].decision);
  }
}

TEST(TrainModel, BranchAccountingCoversEveryStep) {
  const ParallelCorpus c = random_corpus(6, 17);
  std::uint64_t tokens = 0;
  for (const Sentence& t : c.target) tokens += t.size() + 1;
  ModelParameters params(small_config(), 7, 0.3);
  TrainingConfig cfg = small_training(0.5);
  cfg.epochs = 3;
  std::vector<TraceEntry> trace;
  TrainOptions opts;
  opts.trace = &trace;
  const RunRecord r = train_model(c, params, cfg, nullptr, opts);
  ASSERT_EQ(r.epochs.size(), 3u);
  for (const EpochRecord& e : r.epochs) {
    EXPECT_EQ(e.branches.total(), tokens);
    EXPECT_EQ(e.branches.bos, c.size());
    EXPECT_EQ(e.updates, 5u);
    EXPECT_LE(e.max_grad_norm, 1e6);
  }
  EXPECT_EQ(trace.size(), 3 * (tokens - c.size()));
  EXPECT_EQ(r.fallbacks(), 0u);
}

TEST(TrainModel, RejectsMismatchedOracleAndSkipsLongPairs) {
  ParallelCorpus c = random_corpus(6, 8);
  ModelParameters params(small_config(), 7);
  TrainingConfig cfg = small_training(0.0);
  cfg.oracle_kind = OracleKind::LanguageModel;
  EXPECT_THROW(train_model(c, params, cfg, nullptr), ContractError);
  OracleHandle pre = OracleHandle::pretrained(std::make_shared<ModelParameters>(small_config(), 5));
  EXPECT_THROW(train_model(c, params, cfg, &pre), ContractError);

  c.source.push_back(Sentence(60, 4));
  c.target.push_back(Sentence{5});
  const RunRecord r = train_model(c, params, small_training(0.0), nullptr);
  EXPECT_EQ(r.skipped_pairs, 1u);
}

TEST(Plateau, FiresAfterPatienceFlatScores) {
  PlateauDetector p(3, 1e-4);
  EXPECT_FALSE(p.observe(0.5));
  EXPECT_FALSE(p.observe(0.5));
  EXPECT_FALSE(p.observe(0.50005));
  EXPECT_TRUE(p.observe(0.5));
  EXPECT_NEAR(p.best(), 0.50005, 1e-12);
}

TEST(Plateau, ImprovementResetsAndZeroIsIgnored) {
  PlateauDetector p(2, 1e-4);
  for (int i = 0; i < 10; ++i) EXPECT_FALSE(p.observe(0.0));
  EXPECT_FALSE(p.observe(0.1));
  EXPECT_FALSE(p.observe(0.1));
  EXPECT_FALSE(p.observe(0.2));
  EXPECT_FALSE(p.observe(0.2));
  EXPECT_TRUE(p.observe(0.19));
}

TEST(LanguageModelTraining, DeterministicCorpusReachesPerplexityOne) {
  const std::vector<Sentence> corpus(64, Sentence{4, 5, 6});
  LanguageModelParameters lm(LanguageModelConfig{kVocab, 8, 16}, 3);
  LanguageModelTrainingConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 40;
  const auto epochs = train_lm(corpus, corpus, lm, cfg);
  ASSERT_EQ(epochs.size(), 40u);
  EXPECT_LE(epochs.back().perplexity, 1.01);
  EXPECT_GE(epochs.back().perplexity, 1.0);
}

TEST(LanguageModelTraining, UniformTokensStayNearVocabularySize) {
  // 8 equiprobable words and a fixed length: the best model pays log 8 per
  // word and nothing for EOS.
  Rng rng(10);
  std::vector<Sentence> train;
  std::vector<Sentence> held;
  for (int i = 0; i < 400; ++i) {
    Sentence s;
    for (int j = 0; j < 6; ++j) s.push_back(4 + static_cast<TokenId>(rng.below(8)));
    (i < 300 ? train : held).push_back(s);
  }
  LanguageModelParameters lm(LanguageModelConfig{kVocab, 8, 16}, 3);
  LanguageModelTrainingConfig cfg;
  cfg.batch_size = 16;
  cfg.epochs = 15;
  const auto epochs = train_lm(train, held, lm, cfg);
  const double floor = std::pow(8.0, 6.0 / 7.0);
  EXPECT_GT(epochs.back().perplexity, floor * 0.95);
  EXPECT_LT(epochs.back().perplexity, 8.0 * 1.2);
}

TEST(LanguageModelTraining, PerplexityIsAtLeastOne) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    LanguageModelParameters lm(LanguageModelConfig{kVocab, 4, 5}, trial + 1, 2.0);
    std::vector<Sentence> s{random_sentence(rng, 3), random_sentence(rng, 1)};
    const double ppl = perplexity(lm, s);
    EXPECT_GE(ppl, 1.0);
    EXPECT_TRUE(std::isfinite(ppl));
  }
}

TEST(Config, Validation) {
  TrainingConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainingConfig{};
  cfg.learning_rate = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(parse_loss_target("oracle"), LossTarget::OracleSubstituted);
  EXPECT_THROW(parse_loss_target("x"), ConfigError);
}

}  // namespace
}  // namespace ssnmt
