// SPDX-License-Identifier: Apache-2.0
//
// Mini-batch AdaGrad training of the translation model under the feed
// policy, plus the language-model and baseline pretraining used by the
// oracles.
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ssnmt/corpus.hpp"
#include "ssnmt/feed_policy.hpp"
#include "ssnmt/language_model.hpp"
#include "ssnmt/model.hpp"
#include "ssnmt/oracle.hpp"
#include "ssnmt/schedule.hpp"

namespace ssnmt {

/// Target of the per-step loss. Gold always scores the reference token;
/// OracleSubstituted scores the oracle's proposal once the sentence has
/// diverged from the reference (the final EOS target is never replaced).
enum class LossTarget { Gold, OracleSubstituted };

LossTarget parse_loss_target(const std::string& name);
std::string to_string(LossTarget target);

struct TrainingConfig {
  std::size_t batch_size = 32;
  double learning_rate = 0.1;
  double adagrad_epsilon = 1e-8;
  std::size_t epochs = 10;
  SamplingSchedule schedule = SamplingSchedule::constant(0.0);
  OracleKind oracle_kind = OracleKind::None;
  LossTarget loss_target = LossTarget::Gold;
  double gradient_clip = 5.0;
  std::uint64_t seed = 1;
  /// Longest source or target sentence accepted for training.
  std::size_t max_length = 50;
  /// Feed a sample from the model's distribution instead of its argmax.
  bool sample_estimates = false;
  /// Remove each token the LM oracle emits from its reference bag.
  bool deplete_bag = false;
  /// Beam width of the per-epoch dev evaluation (1 = greedy).
  std::size_t dev_beam = 1;

  void validate() const;
};

/// AdaGrad accumulators, one per parameter matrix.
struct OptimizerState {
  std::vector<Matrix> accumulators;

  static OptimizerState for_parameters(const ParameterSet& set);
};

/// Rescales the gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_gradients(std::vector<Matrix>& grads, double max_norm);
/// G += g^2; theta -= lr * g / sqrt(G + eps).
void adagrad_update(ParameterSet& params, OptimizerState& state, const std::vector<Matrix>& grads,
                    double learning_rate, double epsilon);

/// One feed decision together with the corpus index of its sentence.
struct TraceEntry {
  std::size_t sentence = 0;
  FeedDecision decision;
};

/// Per-update inputs of the feed policy.
struct StepContext {
  double epsilon = 0.0;
  /// nullptr for plain scheduled sampling, where the gold token is proposed.
  OracleHandle* oracle = nullptr;
  Rng* coins = nullptr;
  /// Draws sampled estimates when TrainingConfig::sample_estimates is set.
  Rng* sampler = nullptr;
  /// Corpus index of every batch row, for traces and diagnostics.
  std::span<const std::size_t> sentence_ids;
  std::vector<TraceEntry>* trace = nullptr;
  std::size_t update = 0;
};

struct StepResult {
  /// Mean cross-entropy over all target tokens (EOS included).
  double loss = 0.0;
  std::size_t tokens = 0;
  double grad_norm = 0.0;
  double clipped_norm = 0.0;
  BranchCounts branches;
};

/// One forward/backward pass and AdaGrad update over a batch. Targets are
/// given without EOS; the decoder runs len + 1 steps per sentence.
StepResult train_step(std::span<const Sentence> sources, std::span<const Sentence> targets,
                      ModelParameters& params, OptimizerState& opt, const TrainingConfig& config,
                      StepContext& context);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  /// NaN when no dev set was evaluated.
  double dev_bleu = std::numeric_limits<double>::quiet_NaN();
  std::size_t updates = 0;
  double epsilon_start = 0.0;
  double epsilon_end = 0.0;
  double max_grad_norm = 0.0;
  BranchCounts branches;
  double wall_seconds = 0.0;
};

struct RunRecord {
  std::vector<EpochRecord> epochs;
  std::size_t skipped_pairs = 0;
  std::uint64_t oracle_checksum_start = 0;
  std::uint64_t oracle_checksum_end = 0;
  bool stopped_on_plateau = false;

  BranchCounts total_branches() const;
  std::uint64_t fallbacks() const { return total_branches().fallback; }
};

/// One JSON object per epoch. Wall time is written only when asked, so that
/// records of identical runs compare equal byte for byte.
void write_run_record(std::ostream& out, const RunRecord& record, bool include_wall_time = false);

/// Fires after `patience` consecutive scores that fail to beat the best by
/// more than `min_delta`. Scores are not counted until one is positive, so a
/// model still at BLEU 0 keeps training.
class PlateauDetector {
 public:
  explicit PlateauDetector(std::size_t patience = 3, double min_delta = 1e-4)
      : patience_(patience), min_delta_(min_delta) {}
  /// Returns true once the plateau has been reached.
  bool observe(double score);
  double best() const { return best_; }

 private:
  std::size_t patience_;
  double min_delta_;
  double best_ = -std::numeric_limits<double>::infinity();
  std::size_t stale_ = 0;
};

struct TrainOptions {
  const ParallelCorpus* dev = nullptr;
  /// Decision traces are appended here when set.
  std::vector<TraceEntry>* trace = nullptr;
  std::ostream* trace_out = nullptr;
  std::function<void(const EpochRecord&)> on_epoch;
  /// Stop once dev BLEU plateaus (requires a dev set).
  bool stop_on_plateau = false;
};

/// Trains `params` in place for config.epochs epochs. `oracle` must match
/// config.oracle_kind (nullptr for OracleKind::None).
RunRecord train_model(const ParallelCorpus& train, ModelParameters& params,
                      const TrainingConfig& config, OracleHandle* oracle,
                      const TrainOptions& options = {});

/// Teacher-forcing training until dev BLEU plateaus or config.epochs is
/// reached. The schedule and oracle of `config` are ignored.
RunRecord pretrain_baseline(const ParallelCorpus& train, const ParallelCorpus& dev,
                            ModelParameters& params, TrainingConfig config,
                            const TrainOptions& options = {});

/// Dev BLEU (id level) of the model's translations.
double evaluate_bleu(const ParallelCorpus& corpus, const ModelParameters& params,
                     std::size_t beam_width);

struct LanguageModelTrainingConfig {
  std::size_t batch_size = 32;
  double learning_rate = 0.1;
  double adagrad_epsilon = 1e-8;
  std::size_t epochs = 10;
  double gradient_clip = 5.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct LanguageModelEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;
  /// NaN without a held-out set.
  double perplexity = std::numeric_limits<double>::quiet_NaN();
};

/// exp(mean next-token cross-entropy), each sentence scored as
/// BOS w1 .. wm -> w1 .. wm EOS.
double perplexity(const LanguageModelParameters& lm, std::span<const Sentence> sentences);

/// Teacher-forced next-token training on target-side sentences.
std::vector<LanguageModelEpoch> train_lm(std::span<const Sentence> corpus,
                                         std::span<const Sentence> held_out,
                                         LanguageModelParameters& lm,
                                         const LanguageModelTrainingConfig& config);

}  // namespace ssnmt
