// SPDX-License-Identifier: Apache-2.0
//
// Corpus files (one whitespace-tokenised sentence per line, parallel files
// line-aligned) and the synthetic copy / reverse / lexical-translation tasks.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ssnmt/vocabulary.hpp"

namespace ssnmt {

struct TextCorpus {
  std::vector<Words> source;
  std::vector<Words> target;

  std::size_t size() const { return source.size(); }
};

/// Id-mapped parallel corpus.
struct ParallelCorpus {
  std::vector<Sentence> source;
  std::vector<Sentence> target;

  std::size_t size() const { return source.size(); }
};

Words split_words(const std::string& line);
std::string join_words(const Words& words);

std::vector<Words> read_sentences(const std::filesystem::path& path);
void write_sentences(const std::filesystem::path& path, const std::vector<Words>& sentences);
/// Reads line-aligned files; throws ContractError when line counts differ.
TextCorpus read_parallel(const std::filesystem::path& source, const std::filesystem::path& target);

/// UNK-maps both sides. Pairs where either side is empty are dropped.
ParallelCorpus encode_corpus(const TextCorpus& text, const Vocabulary& source_vocab,
                             const Vocabulary& target_vocab);

enum class TaskKind { Copy, Reverse, LexicalTranslate };

TaskKind parse_task_kind(const std::string& name);
std::string to_string(TaskKind kind);

struct SyntheticSpec {
  TaskKind kind = TaskKind::Copy;
  /// Number of distinct source word types.
  int vocab_size = 50;
  std::size_t pairs = 5000;
  std::size_t min_length = 3;
  std::size_t max_length = 10;
  std::uint64_t seed = 0;
  /// LexicalTranslate only: fraction of source types rendered as two tokens.
  double phrase_rate = 0.1;
};

struct SyntheticSplits {
  TextCorpus train;
  TextCorpus dev;
  TextCorpus test;
};

/// Distinct source sentences split 90/5/5 into train/dev/test. The lexical
/// mapping depends only on (seed, vocab_size, phrase_rate), so corpora drawn
/// with other length ranges share it.
SyntheticSplits generate_synthetic_task(const SyntheticSpec& spec);

/// Target rendering of one source sentence under `spec`'s task.
Words synthetic_target(const SyntheticSpec& spec, const Words& source);

}  // namespace ssnmt
