// SPDX-License-Identifier: Apache-2.0
#include "ssnmt/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "ssnmt/bleu.hpp"
#include "ssnmt/checkpoint.hpp"
#include "ssnmt/decoding.hpp"
#include "ssnmt/errors.hpp"

namespace ssnmt {

using nlohmann::json;
using nlohmann::ordered_json;

SystemKind parse_system_kind(const std::string& name) {
  if (name == "baseline") return SystemKind::Baseline;
  if (name == "SS" || name == "ss") return SystemKind::SS;
  if (name == "SS+LM" || name == "ss+lm") return SystemKind::SSLM;
  if (name == "SS+PRE" || name == "ss+pre") return SystemKind::SSPRE;
  throw ConfigError("unknown system '" + name + "' (expected baseline, SS, SS+LM, SS+PRE)");
}

std::string to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::Baseline: return "baseline";
    case SystemKind::SS: return "SS";
    case SystemKind::SSLM: return "SS+LM";
    case SystemKind::SSPRE: return "SS+PRE";
  }
  return "?";
}

TrainingConfig default_student_training() {
  TrainingConfig c;
  c.schedule = SamplingSchedule::linear(0.25, 0.0);
  return c;
}

void ExperimentSpec::validate() const {
  if (corpus.vocab_size < 5) throw ConfigError("vocab_size must be at least 5");
  if (corpus.pairs < 1) throw ConfigError("pairs must be at least 1");
  if (vocab_limit <= kNumSpecials) throw ConfigError("vocab_limit must exceed 4");
  if (embedding_dim < 1 || hidden_dim < 1) throw ConfigError("model dimensions must be positive");
  if (systems.empty()) throw ConfigError("no systems to run");
  if (seeds.empty()) throw ConfigError("no seeds given");
  if (beam < 1) throw ConfigError("beam must be at least 1");
  if (baseline_epochs < 1) throw ConfigError("baseline_epochs must be at least 1");
  for (const ExtraTestSet& e : extra_tests) {
    if (e.name.empty() || e.name == "dev" || e.name == "test" || e.name == "AVG") {
      throw ConfigError("extra test set needs a distinct name");
    }
    if (e.min_length < 1 || e.min_length > e.max_length || e.pairs < 1) {
      throw ConfigError("extra test set '" + e.name + "' has an invalid size or length range");
    }
  }
  training.validate();
  lm.validate();
}

ordered_json to_json(const ExperimentSpec& s) {
  ordered_json j;
  j["task"] = to_string(s.corpus.kind);
  j["vocab_size"] = s.corpus.vocab_size;
  j["pairs"] = s.corpus.pairs;
  j["min_length"] = s.corpus.min_length;
  j["max_length"] = s.corpus.max_length;
  j["data_seed"] = s.corpus.seed;
  j["phrase_rate"] = s.corpus.phrase_rate;
  j["extra_tests"] = ordered_json::array();
  for (const ExtraTestSet& e : s.extra_tests) {
    j["extra_tests"].push_back({{"name", e.name},
                                {"min_length", e.min_length},
                                {"max_length", e.max_length},
                                {"pairs", e.pairs}});
  }
  j["vocab_limit"] = s.vocab_limit;
  j["embedding_dim"] = s.embedding_dim;
  j["hidden_dim"] = s.hidden_dim;
  const TrainingConfig& t = s.training;
  j["training"] = {{"batch_size", t.batch_size},
                   {"learning_rate", t.learning_rate},
                   {"adagrad_epsilon", t.adagrad_epsilon},
                   {"epochs", t.epochs},
                   {"gradient_clip", t.gradient_clip},
                   {"max_length", t.max_length},
                   {"loss_target", to_string(t.loss_target)},
                   {"sample_estimates", t.sample_estimates},
                   {"deplete_bag", t.deplete_bag},
                   {"dev_beam", t.dev_beam},
                   {"schedule",
                    {{"kind", to_string(t.schedule.kind)},
                     {"k", t.schedule.k},
                     {"c", t.schedule.c},
                     {"T", t.schedule.horizon}}}};
  j["baseline_epochs"] = s.baseline_epochs;
  j["lm"] = {{"batch_size", s.lm.batch_size},
             {"learning_rate", s.lm.learning_rate},
             {"adagrad_epsilon", s.lm.adagrad_epsilon},
             {"epochs", s.lm.epochs},
             {"gradient_clip", s.lm.gradient_clip}};
  j["systems"] = ordered_json::array();
  for (SystemKind k : s.systems) j["systems"].push_back(to_string(k));
  j["seeds"] = s.seeds;
  j["beam"] = s.beam;
  j["evaluate_dev"] = s.evaluate_dev;
  j["lm_checkpoint"] = s.lm_checkpoint.string();
  j["baseline_checkpoint"] = s.baseline_checkpoint.string();
  j["output_dir"] = s.output_dir.string();
  return j;
}

namespace {

template <class T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::size_t get_count(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

[[noreturn]] void unknown_key(const std::string& where, const std::string& key) {
  throw ConfigError("unknown config key '" + where + key + "'");
}

void read_training(const json& j, TrainingConfig& t) {
  for (const auto& [key, v] : j.items()) {
    if (key == "batch_size") t.batch_size = get_count(v, key);
    else if (key == "learning_rate") t.learning_rate = get_as<double>(v, key);
    else if (key == "adagrad_epsilon") t.adagrad_epsilon = get_as<double>(v, key);
    else if (key == "epochs") t.epochs = get_count(v, key);
    else if (key == "gradient_clip") t.gradient_clip = get_as<double>(v, key);
    else if (key == "max_length") t.max_length = get_count(v, key);
    else if (key == "loss_target") t.loss_target = parse_loss_target(get_as<std::string>(v, key));
    else if (key == "sample_estimates") t.sample_estimates = get_as<bool>(v, key);
    else if (key == "deplete_bag") t.deplete_bag = get_as<bool>(v, key);
    else if (key == "dev_beam") t.dev_beam = get_count(v, key);
    else if (key == "seed") t.seed = get_as<std::uint64_t>(v, key);
    else if (key == "schedule") {
      std::string kind = to_string(t.schedule.kind);
      std::map<std::string, double> params;
      for (const auto& [sk, sv] : v.items()) {
        if (sk == "kind") kind = get_as<std::string>(sv, sk);
        else if (sk == "k" || sk == "c" || sk == "T") params[sk] = get_as<double>(sv, sk);
        else unknown_key("training.schedule.", sk);
      }
      if (kind != to_string(t.schedule.kind)) {
        t.schedule = parse_schedule(kind, params);
      } else {
        if (params.count("k")) t.schedule.k = params["k"];
        if (params.count("c")) t.schedule.c = params["c"];
        if (params.count("T")) t.schedule.horizon = params["T"];
        t.schedule.validate();
      }
    } else {
      unknown_key("training.", key);
    }
  }
}

void read_lm(const json& j, LanguageModelTrainingConfig& c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "batch_size") c.batch_size = get_count(v, key);
    else if (key == "learning_rate") c.learning_rate = get_as<double>(v, key);
    else if (key == "adagrad_epsilon") c.adagrad_epsilon = get_as<double>(v, key);
    else if (key == "epochs") c.epochs = get_count(v, key);
    else if (key == "gradient_clip") c.gradient_clip = get_as<double>(v, key);
    else unknown_key("lm.", key);
  }
}

}  // namespace

ExperimentSpec experiment_spec_from_json(const json& j, ExperimentSpec s) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "task") s.corpus.kind = parse_task_kind(get_as<std::string>(v, key));
    else if (key == "vocab_size") s.corpus.vocab_size = get_as<int>(v, key);
    else if (key == "pairs") s.corpus.pairs = get_count(v, key);
    else if (key == "min_length") s.corpus.min_length = get_count(v, key);
    else if (key == "max_length") s.corpus.max_length = get_count(v, key);
    else if (key == "data_seed") s.corpus.seed = get_as<std::uint64_t>(v, key);
    else if (key == "phrase_rate") s.corpus.phrase_rate = get_as<double>(v, key);
    else if (key == "extra_tests") {
      s.extra_tests.clear();
      for (const auto& e : v) {
        ExtraTestSet x;
        for (const auto& [ek, ev] : e.items()) {
          if (ek == "name") x.name = get_as<std::string>(ev, ek);
          else if (ek == "min_length") x.min_length = get_count(ev, ek);
          else if (ek == "max_length") x.max_length = get_count(ev, ek);
          else if (ek == "pairs") x.pairs = get_count(ev, ek);
          else unknown_key("extra_tests[].", ek);
        }
        s.extra_tests.push_back(x);
      }
    } else if (key == "vocab_limit") s.vocab_limit = get_count(v, key);
    else if (key == "embedding_dim") s.embedding_dim = get_as<int>(v, key);
    else if (key == "hidden_dim") s.hidden_dim = get_as<int>(v, key);
    else if (key == "training") read_training(v, s.training);
    else if (key == "baseline_epochs") s.baseline_epochs = get_count(v, key);
    else if (key == "lm") read_lm(v, s.lm);
    else if (key == "systems") {
      s.systems.clear();
      for (const auto& name : v) s.systems.push_back(parse_system_kind(get_as<std::string>(name, key)));
    } else if (key == "seeds") {
      s.seeds.clear();
      for (const auto& seed : v) s.seeds.push_back(get_as<std::uint64_t>(seed, key));
    } else if (key == "beam") s.beam = get_count(v, key);
    else if (key == "evaluate_dev") s.evaluate_dev = get_as<bool>(v, key);
    else if (key == "lm_checkpoint") s.lm_checkpoint = get_as<std::string>(v, key);
    else if (key == "baseline_checkpoint") s.baseline_checkpoint = get_as<std::string>(v, key);
    else if (key == "output_dir") s.output_dir = get_as<std::string>(v, key);
    else unknown_key("", key);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Report

bool ComparisonReport::any_failed() const {
  for (const SystemResult& r : results) {
    if (r.failed) return true;
  }
  return false;
}

const SystemResult* ComparisonReport::find(SystemKind system, std::uint64_t seed) const {
  for (const SystemResult& r : results) {
    if (r.system == system && r.seed == seed) return &r;
  }
  return nullptr;
}

std::optional<double> ComparisonReport::mean(SystemKind system, const std::string& column) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const SystemResult& r : results) {
    if (r.system != system || r.failed) continue;
    sum += column == "AVG" ? r.average : r.bleu.at(column);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::optional<double> ComparisonReport::mean_average(SystemKind system) const {
  return mean(system, "AVG");
}

namespace {

std::string cell(std::optional<double> v) {
  if (!v) return "failed";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

ordered_json branches_json(const BranchCounts& b) {
  return {{"bos", b.bos},
          {"model_estimate", b.model_estimate},
          {"gold", b.gold},
          {"oracle", b.oracle},
          {"fallback", b.fallback}};
}

}  // namespace

std::string ComparisonReport::table() const {
  std::ostringstream out;
  auto header = [&] {
    out << pad("system", 10);
    for (const std::string& c : columns) out << pad(c, 9);
    out << "AVG\n";
  };
  for (std::uint64_t seed : seeds) {
    out << "seed " << seed << '\n';
    header();
    for (SystemKind k : systems) {
      const SystemResult* r = find(k, seed);
      out << pad(to_string(k), 10);
      const bool ok = r != nullptr && !r->failed;
      for (const std::string& c : columns) {
        out << pad(cell(ok ? std::optional<double>(r->bleu.at(c)) : std::nullopt), 9);
      }
      out << cell(ok ? std::optional<double>(r->average) : std::nullopt) << '\n';
    }
    out << '\n';
  }
  out << "mean over " << seeds.size() << " seed(s)\n";
  header();
  for (SystemKind k : systems) {
    out << pad(to_string(k), 10);
    for (const std::string& c : columns) out << pad(cell(mean(k, c)), 9);
    out << cell(mean_average(k)) << '\n';
  }
  return out.str();
}

ordered_json ComparisonReport::to_json() const {
  ordered_json j;
  j["config"] = config;
  j["columns"] = columns;
  j["runs"] = ordered_json::array();
  for (const SystemResult& r : results) {
    ordered_json row;
    row["seed"] = r.seed;
    row["system"] = to_string(r.system);
    row["failed"] = r.failed;
    if (r.failed) row["error"] = r.error;
    row["bleu"] = ordered_json::object();
    for (const std::string& c : columns) {
      if (r.bleu.count(c)) row["bleu"][c] = r.bleu.at(c);
    }
    row["avg"] = r.average;
    row["epochs"] = r.epochs_trained;
    row["branches"] = branches_json(r.branches);
    j["runs"].push_back(row);
  }
  j["mean"] = ordered_json::array();
  for (SystemKind k : systems) {
    ordered_json row;
    row["system"] = to_string(k);
    row["bleu"] = ordered_json::object();
    for (const std::string& c : columns) {
      const auto m = mean(k, c);
      row["bleu"][c] = m ? ordered_json(*m) : ordered_json(nullptr);
    }
    const auto avg = mean_average(k);
    row["avg"] = avg ? ordered_json(*avg) : ordered_json(nullptr);
    j["mean"].push_back(row);
  }
  j["lm_perplexity"] = ordered_json::object();
  for (const auto& [seed, ppl] : lm_perplexity) j["lm_perplexity"][std::to_string(seed)] = ppl;
  return j;
}

// ---------------------------------------------------------------------------
// Runner

ExperimentData prepare_experiment_data(const ExperimentSpec& spec) {
  const SyntheticSplits splits = generate_synthetic_task(spec.corpus);
  ExperimentData d{Vocabulary::build(splits.train.source, spec.vocab_limit),
                   Vocabulary::build(splits.train.target, spec.vocab_limit),
                   {}, {}, {}};
  d.train = encode_corpus(splits.train, d.source_vocab, d.target_vocab);
  d.dev = encode_corpus(splits.dev, d.source_vocab, d.target_vocab);
  d.tests.emplace_back("test", encode_corpus(splits.test, d.source_vocab, d.target_vocab));
  for (const ExtraTestSet& e : spec.extra_tests) {
    SyntheticSpec s = spec.corpus;
    s.min_length = e.min_length;
    s.max_length = e.max_length;
    s.pairs = e.pairs;
    const SyntheticSplits extra = generate_synthetic_task(s);
    TextCorpus all;
    for (const TextCorpus* part : {&extra.train, &extra.dev, &extra.test}) {
      all.source.insert(all.source.end(), part->source.begin(), part->source.end());
      all.target.insert(all.target.end(), part->target.begin(), part->target.end());
    }
    d.tests.emplace_back(e.name, encode_corpus(all, d.source_vocab, d.target_vocab));
  }
  if (d.train.size() == 0 || d.dev.size() == 0) {
    throw ConfigError("corpus too small: " + std::to_string(d.train.size()) + " train and " +
                      std::to_string(d.dev.size()) + " dev pairs");
  }
  return d;
}

namespace {

constexpr std::uint64_t kInitStream = 21;
constexpr std::uint64_t kLanguageModelStream = 22;

std::string fingerprint(const ExperimentSpec& spec) {
  const std::string text = to_json(spec).dump();
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(text.data(), text.size())));
  return buf;
}

void check_vocab(const std::vector<std::string>& stored, const Vocabulary& expected,
                 const std::string& what) {
  if (stored != expected.tokens()) {
    throw ConfigError(what + " checkpoint vocabulary does not match the experiment corpus");
  }
}

bool contains(const std::vector<SystemKind>& v, SystemKind k) {
  return std::find(v.begin(), v.end(), k) != v.end();
}

}  // namespace

ComparisonReport run_experiment(const ExperimentSpec& spec, std::ostream* log) {
  spec.validate();
  const ExperimentData data = prepare_experiment_data(spec);
  ComparisonReport report;
  report.config = to_json(spec);
  report.systems = spec.systems;
  report.seeds = spec.seeds;
  if (spec.evaluate_dev) report.columns.push_back("dev");
  for (const auto& [name, corpus] : data.tests) report.columns.push_back(name);

  const ModelConfig mc{static_cast<int>(data.source_vocab.size()),
                       static_cast<int>(data.target_vocab.size()), spec.embedding_dim,
                       spec.hidden_dim, 0};
  const LanguageModelConfig lc{static_cast<int>(data.target_vocab.size()), spec.embedding_dim,
                               spec.hidden_dim};
  const std::string fp = fingerprint(spec);
  if (!spec.output_dir.empty()) std::filesystem::create_directories(spec.output_dir);

  auto say = [&](const std::string& line) {
    if (log != nullptr) *log << line << std::endl;
  };
  auto evaluate = [&](SystemResult& r, const ModelParameters& params) {
    double sum = 0.0;
    auto score = [&](const std::string& name, const ParallelCorpus& c) {
      const auto hyps = translate_all(c.source, params, spec.beam);
      const double b =
          100.0 * corpus_bleu(std::span<const Sentence>(hyps), std::span<const Sentence>(c.target))
                      .bleu;
      r.bleu[name] = b;
      sum += b;
    };
    if (spec.evaluate_dev) score("dev", data.dev);
    for (const auto& [name, corpus] : data.tests) score(name, corpus);
    r.average = sum / static_cast<double>(report.columns.size());
  };
  auto finish = [&](SystemResult& r, const ModelParameters& params) {
    r.epochs_trained = r.record.epochs.size();
    r.branches = r.record.total_branches();
    evaluate(r, params);
    if (!spec.output_dir.empty()) {
      std::ofstream out(spec.output_dir / ("run_seed" + std::to_string(r.seed) + "_" +
                                           to_string(r.system) + ".jsonl"));
      write_run_record(out, r.record);
    }
    say("  " + to_string(r.system) + " avg " + cell(r.average) + ", " +
        std::to_string(r.record.epochs.size()) + " epochs");
  };

  for (std::uint64_t seed : spec.seeds) {
    const std::string tag = "_seed" + std::to_string(seed);
    const std::uint64_t init_seed = derive_seed(seed, kInitStream);
    TrainingConfig student_cfg = spec.training;
    student_cfg.seed = seed;
    std::map<SystemKind, SystemResult> done;
    auto fail = [&](SystemKind k, const std::string& why) {
      SystemResult r;
      r.system = k;
      r.seed = seed;
      r.failed = true;
      r.error = why;
      done[k] = r;
      say("  " + to_string(k) + " failed: " + why);
    };

    // Teacher-forcing baseline; also the default SS+PRE oracle.
    std::shared_ptr<const ModelParameters> pretrained;
    std::string pretrained_error;
    const bool want_baseline = contains(spec.systems, SystemKind::Baseline);
    const bool want_pre = contains(spec.systems, SystemKind::SSPRE);
    if (want_baseline || (want_pre && spec.baseline_checkpoint.empty())) {
      say("seed " + std::to_string(seed) + ": baseline");
      try {
        auto p = std::make_shared<ModelParameters>(mc, init_seed);
        TrainingConfig cfg = student_cfg;
        cfg.epochs = spec.baseline_epochs;
        SystemResult r;
        r.system = SystemKind::Baseline;
        r.seed = seed;
        r.record = pretrain_baseline(data.train, data.dev, *p, cfg);
        if (!spec.output_dir.empty()) {
          save_checkpoint(spec.output_dir / ("baseline" + tag + ".ckpt"),
                          make_checkpoint(*p, data.source_vocab, data.target_vocab, fp, seed));
        }
        if (want_baseline) {
          finish(r, *p);
          done[SystemKind::Baseline] = r;
        }
        pretrained = std::move(p);
      } catch (const std::exception& e) {
        pretrained_error = std::string("baseline pretraining failed: ") + e.what();
        if (want_baseline) fail(SystemKind::Baseline, pretrained_error);
      }
    }
    if (want_pre && !spec.baseline_checkpoint.empty()) {
      try {
        const Checkpoint ck = load_checkpoint(spec.baseline_checkpoint);
        check_vocab(ck.source_vocab, data.source_vocab, "baseline");
        check_vocab(ck.target_vocab, data.target_vocab, "baseline");
        pretrained = std::make_shared<ModelParameters>(model_from_checkpoint(ck, &mc));
      } catch (const std::exception& e) {
        pretrained.reset();
        pretrained_error = std::string("loading the pre-trained oracle failed: ") + e.what();
      }
    }

    // Language-model oracle.
    std::shared_ptr<const LanguageModelParameters> lm;
    std::string lm_error;
    if (contains(spec.systems, SystemKind::SSLM)) {
      try {
        if (spec.lm_checkpoint.empty()) {
          say("seed " + std::to_string(seed) + ": language model");
          auto p = std::make_shared<LanguageModelParameters>(
              lc, derive_seed(seed, kLanguageModelStream));
          LanguageModelTrainingConfig cfg = spec.lm;
          cfg.seed = seed;
          const auto epochs = train_lm(data.train.target, data.dev.target, *p, cfg);
          if (!epochs.empty()) report.lm_perplexity[seed] = epochs.back().perplexity;
          if (!spec.output_dir.empty()) {
            save_checkpoint(spec.output_dir / ("lm" + tag + ".ckpt"),
                            make_checkpoint(*p, data.target_vocab, fp, seed));
          }
          lm = std::move(p);
        } else {
          const Checkpoint ck = load_checkpoint(spec.lm_checkpoint);
          check_vocab(ck.target_vocab, data.target_vocab, "language-model");
          lm = std::make_shared<LanguageModelParameters>(language_model_from_checkpoint(ck, &lc));
          report.lm_perplexity[seed] = perplexity(*lm, data.dev.target);
        }
      } catch (const std::exception& e) {
        lm_error = std::string("language-model pretraining failed: ") + e.what();
      }
    }

    for (SystemKind k : spec.systems) {
      if (k == SystemKind::Baseline) continue;
      std::optional<OracleHandle> oracle;
      TrainingConfig cfg = student_cfg;
      if (k == SystemKind::SSLM) {
        if (!lm) {
          fail(k, lm_error);
          continue;
        }
        oracle.emplace(OracleHandle::language_model(lm, cfg.deplete_bag));
        cfg.oracle_kind = OracleKind::LanguageModel;
      } else if (k == SystemKind::SSPRE) {
        if (!pretrained) {
          fail(k, pretrained_error);
          continue;
        }
        oracle.emplace(OracleHandle::pretrained(pretrained));
        cfg.oracle_kind = OracleKind::PretrainedNMT;
      } else {
        cfg.oracle_kind = OracleKind::None;
      }
      say("seed " + std::to_string(seed) + ": " + to_string(k));
      try {
        ModelParameters params(mc, init_seed);
        SystemResult r;
        r.system = k;
        r.seed = seed;
        r.record = train_model(data.train, params, cfg, oracle ? &*oracle : nullptr);
        if (r.record.oracle_checksum_start != r.record.oracle_checksum_end) {
          throw ContractError("oracle parameters changed during training");
        }
        finish(r, params);
        done[k] = r;
      } catch (const std::exception& e) {
        fail(k, e.what());
      }
    }
    for (SystemKind k : spec.systems) report.results.push_back(done.at(k));
  }

  if (!spec.output_dir.empty()) {
    std::ofstream(spec.output_dir / "report.json") << report.to_json().dump(2) << '\n';
    std::ofstream(spec.output_dir / "report.txt") << report.table();
  }
  return report;
}

}  // namespace ssnmt
