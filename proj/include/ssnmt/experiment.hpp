// SPDX-License-Identifier: Apache-2.0
//
// Four-way comparison: teacher-forcing baseline, scheduled sampling (SS),
// SS guided by the LM oracle (SS+LM) and SS guided by the pre-trained
// model oracle (SS+PRE), over one or more seeds.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssnmt/corpus.hpp"
#include "ssnmt/training.hpp"

namespace ssnmt {

enum class SystemKind { Baseline, SS, SSLM, SSPRE };

SystemKind parse_system_kind(const std::string& name);
std::string to_string(SystemKind kind);

/// Additional evaluation set drawn from the same task with other lengths.
struct ExtraTestSet {
  std::string name;
  std::size_t min_length = 12;
  std::size_t max_length = 15;
  std::size_t pairs = 200;
};

TrainingConfig default_student_training();

struct ExperimentSpec {
  SyntheticSpec corpus;
  std::vector<ExtraTestSet> extra_tests;
  std::size_t vocab_limit = 200;
  int embedding_dim = 32;
  int hidden_dim = 64;
  /// Shared by every student; the oracle is set per system. The default
  /// schedule rises linearly from 0 to 0.25.
  TrainingConfig training = default_student_training();
  /// Maximum epochs of the baseline / pre-trained oracle (plateau stop).
  std::size_t baseline_epochs = 30;
  LanguageModelTrainingConfig lm;
  std::vector<SystemKind> systems{SystemKind::Baseline, SystemKind::SS, SystemKind::SSLM,
                                  SystemKind::SSPRE};
  std::vector<std::uint64_t> seeds{1};
  std::size_t beam = 5;
  /// Evaluate on the dev split as well as test and the extra sets.
  bool evaluate_dev = true;
  /// Optional frozen oracles; when empty they are pretrained per seed.
  std::filesystem::path lm_checkpoint;
  std::filesystem::path baseline_checkpoint;
  std::filesystem::path output_dir;

  void validate() const;
};

nlohmann::ordered_json to_json(const ExperimentSpec& spec);
/// Reads the fields present in `j` on top of `base`; ConfigError on unknown
/// keys or bad values.
ExperimentSpec experiment_spec_from_json(const nlohmann::json& j, ExperimentSpec base = {});

struct SystemResult {
  SystemKind system = SystemKind::Baseline;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  /// BLEU x 100 per evaluation column.
  std::map<std::string, double> bleu;
  double average = 0.0;
  std::size_t epochs_trained = 0;
  BranchCounts branches;
  RunRecord record;
};

struct ComparisonReport {
  std::vector<std::string> columns;
  std::vector<SystemKind> systems;
  std::vector<std::uint64_t> seeds;
  std::vector<SystemResult> results;
  nlohmann::ordered_json config;
  /// Perplexity of the LM oracle on dev, per seed, when one was trained.
  std::map<std::uint64_t, double> lm_perplexity;

  bool any_failed() const;
  const SystemResult* find(SystemKind system, std::uint64_t seed) const;
  /// Mean over the seeds whose run succeeded; nullopt when all failed.
  std::optional<double> mean(SystemKind system, const std::string& column) const;
  std::optional<double> mean_average(SystemKind system) const;

  /// Human-readable table: one block per seed and a mean block.
  std::string table() const;
  nlohmann::ordered_json to_json() const;
};

struct ExperimentData {
  Vocabulary source_vocab;
  Vocabulary target_vocab;
  ParallelCorpus train;
  ParallelCorpus dev;
  /// Evaluation sets in column order: test, then the extra sets.
  std::vector<std::pair<std::string, ParallelCorpus>> tests;
};

ExperimentData prepare_experiment_data(const ExperimentSpec& spec);

/// Runs every (seed, system) cell. A failed cell is recorded and the
/// remaining cells still run. Progress lines go to `log` when given.
ComparisonReport run_experiment(const ExperimentSpec& spec, std::ostream* log = nullptr);

}  // namespace ssnmt
