// SPDX-License-Identifier: Apache-2.0
#include "ssnmt/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "ssnmt/errors.hpp"
#include "ssnmt/random.hpp"

namespace ssnmt {

Words split_words(const std::string& line) {
  Words out;
  std::istringstream is(line);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

std::string join_words(const Words& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

std::vector<Words> read_sentences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<Words> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(split_words(line));
  return out;
}

void write_sentences(const std::filesystem::path& path, const std::vector<Words>& sentences) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const Words& s : sentences) out << join_words(s) << '\n';
}

TextCorpus read_parallel(const std::filesystem::path& source,
                         const std::filesystem::path& target) {
  TextCorpus c;
  c.source = read_sentences(source);
  c.target = read_sentences(target);
  if (c.source.size() != c.target.size()) {
    throw ContractError("parallel files are not line-aligned: " + source.string() + " has " +
                        std::to_string(c.source.size()) + " lines, " + target.string() +
                        " has " + std::to_string(c.target.size()));
  }
  return c;
}

ParallelCorpus encode_corpus(const TextCorpus& text, const Vocabulary& source_vocab,
                             const Vocabulary& target_vocab) {
  ParallelCorpus out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text.source[i].empty() || text.target[i].empty()) continue;
    out.source.push_back(source_vocab.encode(text.source[i]));
    out.target.push_back(target_vocab.encode(text.target[i]));
  }
  return out;
}

TaskKind parse_task_kind(const std::string& name) {
  if (name == "copy") return TaskKind::Copy;
  if (name == "reverse") return TaskKind::Reverse;
  if (name == "lexical_translate" || name == "lexical-translate" || name == "lexical") {
    return TaskKind::LexicalTranslate;
  }
  throw ConfigError("unknown task '" + name + "' (expected copy, reverse, lexical_translate)");
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Copy: return "copy";
    case TaskKind::Reverse: return "reverse";
    case TaskKind::LexicalTranslate: return "lexical_translate";
  }
  return "?";
}

namespace {

struct LexicalMap {
  std::vector<int> image;
  std::vector<bool> phrase;
};

LexicalMap lexical_map(const SyntheticSpec& spec) {
  Rng rng(derive_seed(spec.seed, 1));
  LexicalMap m;
  m.image.resize(static_cast<std::size_t>(spec.vocab_size));
  std::iota(m.image.begin(), m.image.end(), 0);
  rng.shuffle(m.image.begin(), m.image.end());
  std::vector<int> order(m.image.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  const auto phrases =
      static_cast<std::size_t>(std::llround(spec.phrase_rate * static_cast<double>(spec.vocab_size)));
  m.phrase.assign(m.image.size(), false);
  for (std::size_t i = 0; i < phrases && i < order.size(); ++i) {
    m.phrase[static_cast<std::size_t>(order[i])] = true;
  }
  return m;
}

int source_index(const std::string& word) { return std::stoi(word.substr(1)); }

}  // namespace

Words synthetic_target(const SyntheticSpec& spec, const Words& source) {
  switch (spec.kind) {
    case TaskKind::Copy: return source;
    case TaskKind::Reverse: return Words(source.rbegin(), source.rend());
    case TaskKind::LexicalTranslate: {
      const LexicalMap m = lexical_map(spec);
      Words out;
      for (const std::string& w : source) {
        const auto i = static_cast<std::size_t>(source_index(w));
        const std::string image = std::to_string(m.image.at(i));
        out.push_back("t" + image);
        if (m.phrase[i]) out.push_back("p" + image);
      }
      return out;
    }
  }
  return source;
}

SyntheticSplits generate_synthetic_task(const SyntheticSpec& spec) {
  if (spec.vocab_size < 5) throw ConfigError("synthetic vocab_size must be at least 5");
  if (spec.pairs < 1) throw ConfigError("synthetic pairs must be at least 1");
  if (spec.min_length < 1 || spec.max_length < spec.min_length) {
    throw ConfigError("synthetic length range must satisfy 1 <= min <= max");
  }
  if (spec.phrase_rate < 0.0 || spec.phrase_rate > 1.0) {
    throw ConfigError("phrase_rate must lie in [0, 1]");
  }
  const LexicalMap lexical = lexical_map(spec);
  Rng rng(derive_seed(spec.seed, 1000 + spec.min_length * 4096 + spec.max_length));

  std::vector<Words> sources;
  std::unordered_set<std::string> seen;
  const std::size_t span = spec.max_length - spec.min_length + 1;
  std::size_t attempts = 0;
  while (sources.size() < spec.pairs && attempts < 100 * spec.pairs + 1000) {
    ++attempts;
    const std::size_t len = spec.min_length + rng.below(span);
    Words s;
    for (std::size_t i = 0; i < len; ++i) {
      s.push_back("w" + std::to_string(rng.below(static_cast<std::uint64_t>(spec.vocab_size))));
    }
    if (seen.insert(join_words(s)).second) sources.push_back(std::move(s));
  }

  auto render = [&](const Words& src) {
    if (spec.kind != TaskKind::LexicalTranslate) return synthetic_target(spec, src);
    Words out;
    for (const std::string& w : src) {
      const auto i = static_cast<std::size_t>(source_index(w));
      const std::string image = std::to_string(lexical.image[i]);
      out.push_back("t" + image);
      if (lexical.phrase[i]) out.push_back("p" + image);
    }
    return out;
  };

  const std::size_t n = sources.size();
  const auto held = static_cast<std::size_t>(std::llround(0.05 * static_cast<double>(n)));
  const std::size_t n_train = n - 2 * held;
  SyntheticSplits out;
  for (std::size_t i = 0; i < n; ++i) {
    TextCorpus& dst = i < n_train ? out.train : i < n_train + held ? out.dev : out.test;
    dst.target.push_back(render(sources[i]));
    dst.source.push_back(std::move(sources[i]));
  }
  return out;
}

}  // namespace ssnmt
