// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "ssnmt/bleu.hpp"
#include "ssnmt/checkpoint.hpp"
#include "ssnmt/corpus.hpp"
#include "ssnmt/decoding.hpp"
#include "ssnmt/errors.hpp"
#include "ssnmt/experiment.hpp"
#include "ssnmt/training.hpp"

namespace ssnmt::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::string data;
  std::vector<std::uint64_t> seeds;
  std::optional<std::string> task;
  std::optional<std::size_t> pairs;
  std::optional<int> vocab_size;
  std::optional<std::size_t> min_length;
  std::optional<std::size_t> max_length;
  std::optional<double> phrase_rate;
  std::optional<std::size_t> vocab_limit;
  std::optional<int> embedding_dim;
  std::optional<int> hidden_dim;
  std::optional<std::string> schedule;
  std::vector<std::string> schedule_params;
  std::optional<std::string> oracle;
  std::optional<std::string> loss_target;
  std::optional<std::size_t> beam;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::vector<std::string> systems;
  std::string lm_checkpoint;
  std::string baseline_checkpoint;
  std::string checkpoint;
  std::string input;
  std::string output;
  std::string hyp;
  std::string ref;
  std::string trace;
  bool smoothing = false;
  bool json = false;
};

void add_config(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON configuration file; flags override its values");
}

void add_data_flags(CLI::App* app, Flags& f) {
  app->add_option("--task", f.task, "copy, reverse or lexical_translate");
  app->add_option("--pairs", f.pairs, "number of sentence pairs");
  app->add_option("--vocab-size", f.vocab_size, "number of source word types");
  app->add_option("--min-length", f.min_length, "shortest sentence");
  app->add_option("--max-length", f.max_length, "longest sentence");
  app->add_option("--phrase-rate", f.phrase_rate, "lexical_translate: share of two-token types");
}

void add_model_flags(CLI::App* app, Flags& f) {
  app->add_option("--vocab-limit", f.vocab_limit, "vocabulary size including the 4 specials");
  app->add_option("--embedding-dim", f.embedding_dim, "embedding width");
  app->add_option("--hidden-dim", f.hidden_dim, "recurrent state width");
  app->add_option("--learning-rate", f.learning_rate, "AdaGrad learning rate");
  app->add_option("--batch-size", f.batch_size, "mini-batch size");
  app->add_option("--epochs", f.epochs, "training epochs (maximum for pretraining)");
}

void add_schedule_flags(CLI::App* app, Flags& f) {
  app->add_option("--schedule", f.schedule, "constant, linear, exponential or inverse-sigmoid");
  app->add_option("--schedule-param", f.schedule_params, "schedule parameter k=v (k, c, T)");
  app->add_option("--loss-target", f.loss_target, "gold or oracle");
}

ExperimentSpec load_spec(const Flags& f) {
  ExperimentSpec spec;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw std::runtime_error("cannot read config " + f.config);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + f.config + " is not valid JSON: " + e.what());
    }
    spec = experiment_spec_from_json(j);
  }
  if (f.task) spec.corpus.kind = parse_task_kind(*f.task);
  if (f.pairs) spec.corpus.pairs = *f.pairs;
  if (f.vocab_size) spec.corpus.vocab_size = *f.vocab_size;
  if (f.min_length) spec.corpus.min_length = *f.min_length;
  if (f.max_length) spec.corpus.max_length = *f.max_length;
  if (f.phrase_rate) spec.corpus.phrase_rate = *f.phrase_rate;
  if (f.vocab_limit) spec.vocab_limit = *f.vocab_limit;
  if (f.embedding_dim) spec.embedding_dim = *f.embedding_dim;
  if (f.hidden_dim) spec.hidden_dim = *f.hidden_dim;
  if (f.learning_rate) spec.training.learning_rate = spec.lm.learning_rate = *f.learning_rate;
  if (f.batch_size) spec.training.batch_size = spec.lm.batch_size = *f.batch_size;
  if (f.epochs) spec.training.epochs = *f.epochs;
  if (f.beam) spec.beam = *f.beam;
  if (f.loss_target) spec.training.loss_target = parse_loss_target(*f.loss_target);
  if (!f.seeds.empty()) {
    spec.seeds = f.seeds;
    spec.corpus.seed = f.seeds.front();
  }
  std::map<std::string, double> params;
  for (const std::string& kv : f.schedule_params) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--schedule-param expects k=v, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    if (key != "k" && key != "c" && key != "T") {
      throw ConfigError("unknown schedule parameter '" + key + "' (expected k, c, T)");
    }
    try {
      std::size_t used = 0;
      params[key] = std::stod(kv.substr(eq + 1), &used);
      if (used != kv.size() - eq - 1) throw std::invalid_argument(kv);
    } catch (const std::logic_error&) {
      throw ConfigError("--schedule-param value in '" + kv + "' is not a number");
    }
  }
  if (f.schedule) {
    spec.training.schedule = parse_schedule(*f.schedule, params);
  } else if (!params.empty()) {
    SamplingSchedule& s = spec.training.schedule;
    if (params.count("k")) s.k = params["k"];
    if (params.count("c")) s.c = params["c"];
    if (params.count("T")) s.horizon = params["T"];
  }
  if (!f.systems.empty()) {
    spec.systems.clear();
    for (const std::string& name : f.systems) spec.systems.push_back(parse_system_kind(name));
  }
  if (!f.lm_checkpoint.empty()) spec.lm_checkpoint = f.lm_checkpoint;
  if (!f.baseline_checkpoint.empty()) spec.baseline_checkpoint = f.baseline_checkpoint;
  if (!f.out.empty()) spec.output_dir = f.out;
  spec.training.seed = spec.seeds.front();
  spec.lm.seed = spec.seeds.front();
  spec.validate();
  return spec;
}

fs::path require_out(const Flags& f) {
  if (f.out.empty()) throw ConfigError("--out is required");
  fs::create_directories(f.out);
  return f.out;
}

void write_config(const fs::path& dir, const ExperimentSpec& spec, const std::string& command) {
  ordered_json j;
  j["command"] = command;
  j["config"] = to_json(spec);
  std::ofstream(dir / "config.json") << j.dump(2) << '\n';
}

struct LoadedData {
  Vocabulary source_vocab;
  Vocabulary target_vocab;
  ParallelCorpus train;
  ParallelCorpus dev;
  bool has_dev = false;
};

LoadedData load_data(const Flags& f, const ExperimentSpec& spec) {
  if (f.data.empty()) throw ConfigError("--data is required");
  const fs::path dir = f.data;
  const TextCorpus train = read_parallel(dir / "train.src", dir / "train.tgt");
  LoadedData d{Vocabulary::build(train.source, spec.vocab_limit),
               Vocabulary::build(train.target, spec.vocab_limit),
               {}, {}, false};
  d.train = encode_corpus(train, d.source_vocab, d.target_vocab);
  if (fs::exists(dir / "dev.src") && fs::exists(dir / "dev.tgt")) {
    d.dev = encode_corpus(read_parallel(dir / "dev.src", dir / "dev.tgt"), d.source_vocab,
                          d.target_vocab);
    d.has_dev = d.dev.size() > 0;
  }
  return d;
}

std::string fixed(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string fingerprint_of(const ExperimentSpec& spec) {
  const std::string text = to_json(spec).dump();
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(text.data(), text.size())));
  return buf;
}

ModelConfig model_config(const ExperimentSpec& spec, const LoadedData& d) {
  return {static_cast<int>(d.source_vocab.size()), static_cast<int>(d.target_vocab.size()),
          spec.embedding_dim, spec.hidden_dim, 0};
}

std::function<void(const EpochRecord&)> epoch_logger(std::ostream& out) {
  return [&out](const EpochRecord& e) {
    out << "epoch " << e.epoch << " loss " << fixed(e.loss) << " dev_bleu "
        << (std::isnan(e.dev_bleu) ? std::string("-") : fixed(100.0 * e.dev_bleu, 2))
        << " epsilon " << fixed(e.epsilon_end, 3) << std::endl;
  };
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const Flags& f, std::ostream& out) {
  const ExperimentSpec spec = load_spec(f);
  const fs::path dir = require_out(f);
  const SyntheticSplits s = generate_synthetic_task(spec.corpus);
  const std::pair<const char*, const TextCorpus*> parts[] = {
      {"train", &s.train}, {"dev", &s.dev}, {"test", &s.test}};
  for (const auto& [name, corpus] : parts) {
    write_sentences(dir / (std::string(name) + ".src"), corpus->source);
    write_sentences(dir / (std::string(name) + ".tgt"), corpus->target);
    out << name << ' ' << corpus->size() << " pairs\n";
  }
  return kExitOk;
}

int cmd_pretrain_lm(const Flags& f, std::ostream& out) {
  ExperimentSpec spec = load_spec(f);
  if (f.epochs) spec.lm.epochs = *f.epochs;
  const fs::path dir = require_out(f);
  const LoadedData d = load_data(f, spec);
  const LanguageModelConfig lc{static_cast<int>(d.target_vocab.size()), spec.embedding_dim,
                               spec.hidden_dim};
  LanguageModelParameters lm(lc, derive_seed(spec.lm.seed, 22));
  const auto epochs = train_lm(d.train.target, d.has_dev ? d.dev.target : d.train.target, lm,
                               spec.lm);
  for (const auto& e : epochs) {
    out << "epoch " << e.epoch << " loss " << fixed(e.loss) << " perplexity "
        << fixed(e.perplexity) << '\n';
  }
  if (!epochs.empty()) out << "perplexity " << fixed(epochs.back().perplexity) << '\n';
  save_checkpoint(dir / "lm.ckpt",
                  make_checkpoint(lm, d.target_vocab, fingerprint_of(spec), spec.lm.seed));
  write_config(dir, spec, "pretrain-lm");
  return kExitOk;
}

int cmd_pretrain_baseline(const Flags& f, std::ostream& out, std::ostream& err) {
  ExperimentSpec spec = load_spec(f);
  if (f.epochs) spec.baseline_epochs = *f.epochs;
  const fs::path dir = require_out(f);
  const LoadedData d = load_data(f, spec);
  if (!d.has_dev) throw ConfigError("pretrain-baseline needs dev.src/dev.tgt in --data");
  ModelParameters params(model_config(spec, d), derive_seed(spec.training.seed, 21));
  TrainingConfig cfg = spec.training;
  cfg.epochs = spec.baseline_epochs;
  TrainOptions opts;
  opts.on_epoch = epoch_logger(err);
  const RunRecord record = pretrain_baseline(d.train, d.dev, params, cfg, opts);
  std::ofstream(dir / "run.jsonl") << [&] {
    std::ostringstream s;
    write_run_record(s, record);
    return s.str();
  }();
  save_checkpoint(dir / "baseline.ckpt",
                  make_checkpoint(params, d.source_vocab, d.target_vocab, fingerprint_of(spec),
                                  spec.training.seed));
  write_config(dir, spec, "pretrain-baseline");
  out << "epochs " << record.epochs.size() << (record.stopped_on_plateau ? " (plateau)" : "")
      << " dev_bleu " << fixed(100.0 * record.epochs.back().dev_bleu, 2) << '\n';
  return kExitOk;
}

int cmd_train(const Flags& f, std::ostream& out, std::ostream& err) {
  const ExperimentSpec spec = load_spec(f);
  const fs::path dir = require_out(f);
  const LoadedData d = load_data(f, spec);
  const ModelConfig mc = model_config(spec, d);
  TrainingConfig cfg = spec.training;
  cfg.oracle_kind = parse_oracle_kind(f.oracle.value_or("none"));
  std::optional<OracleHandle> oracle;
  if (cfg.oracle_kind == OracleKind::LanguageModel) {
    if (spec.lm_checkpoint.empty()) throw ConfigError("--oracle lm needs --lm-checkpoint");
    const Checkpoint ck = load_checkpoint(spec.lm_checkpoint);
    if (ck.target_vocab != d.target_vocab.tokens()) {
      throw ConfigError("language-model checkpoint vocabulary does not match the corpus");
    }
    const LanguageModelConfig lc{mc.target_vocab, spec.embedding_dim, spec.hidden_dim};
    oracle.emplace(OracleHandle::language_model(
        std::make_shared<LanguageModelParameters>(language_model_from_checkpoint(ck, &lc)),
        cfg.deplete_bag));
  } else if (cfg.oracle_kind == OracleKind::PretrainedNMT) {
    if (spec.baseline_checkpoint.empty()) {
      throw ConfigError("--oracle pretrained needs --baseline-checkpoint");
    }
    const Checkpoint ck = load_checkpoint(spec.baseline_checkpoint);
    if (ck.source_vocab != d.source_vocab.tokens() || ck.target_vocab != d.target_vocab.tokens()) {
      throw ConfigError("baseline checkpoint vocabulary does not match the corpus");
    }
    oracle.emplace(OracleHandle::pretrained(
        std::make_shared<ModelParameters>(model_from_checkpoint(ck, &mc))));
  }
  ModelParameters params(mc, derive_seed(cfg.seed, 21));
  TrainOptions opts;
  if (d.has_dev) opts.dev = &d.dev;
  opts.on_epoch = epoch_logger(err);
  std::ofstream trace;
  if (!f.trace.empty()) {
    trace.open(f.trace);
    if (!trace) throw std::runtime_error("cannot write " + f.trace);
    opts.trace_out = &trace;
  }
  const RunRecord record = train_model(d.train, params, cfg, oracle ? &*oracle : nullptr, opts);
  {
    std::ofstream run(dir / "run.jsonl");
    write_run_record(run, record);
  }
  save_checkpoint(dir / "model.ckpt", make_checkpoint(params, d.source_vocab, d.target_vocab,
                                                      fingerprint_of(spec), cfg.seed));
  write_config(dir, spec, "train");
  const BranchCounts b = record.total_branches();
  out << "epochs " << record.epochs.size() << " loss " << fixed(record.epochs.back().loss);
  if (d.has_dev) out << " dev_bleu " << fixed(100.0 * record.epochs.back().dev_bleu, 2);
  out << "\nbranches bos " << b.bos << " model_estimate " << b.model_estimate << " gold "
      << b.gold << " oracle " << b.oracle << " fallback " << b.fallback << '\n';
  return kExitOk;
}

int cmd_translate(const Flags& f, std::ostream& out) {
  const ExperimentSpec spec = load_spec(f);
  if (f.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  if (f.input.empty()) throw ConfigError("--input is required");
  const Checkpoint ck = load_checkpoint(f.checkpoint);
  const ModelParameters params = model_from_checkpoint(ck);
  const Vocabulary sv(ck.source_vocab);
  const Vocabulary tv(ck.target_vocab);
  std::vector<Sentence> sources;
  for (const Words& w : read_sentences(f.input)) sources.push_back(sv.encode(w));
  std::vector<std::size_t> nonempty;
  std::vector<Sentence> batch;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (!sources[i].empty()) {
      nonempty.push_back(i);
      batch.push_back(sources[i]);
    }
  }
  const auto translated = translate_all(batch, params, spec.beam);
  std::vector<Words> lines(sources.size());
  for (std::size_t k = 0; k < nonempty.size(); ++k) lines[nonempty[k]] = tv.decode(translated[k]);
  if (f.output.empty()) {
    for (const Words& w : lines) out << join_words(w) << '\n';
  } else {
    write_sentences(f.output, lines);
  }
  return kExitOk;
}

int cmd_evaluate(const Flags& f, std::ostream& out) {
  if (f.hyp.empty() || f.ref.empty()) throw ConfigError("--hyp and --ref are required");
  const auto hyps = read_sentences(f.hyp);
  const auto refs = read_sentences(f.ref);
  if (hyps.size() != refs.size()) {
    throw ContractError(f.hyp + " has " + std::to_string(hyps.size()) + " lines but " + f.ref +
                        " has " + std::to_string(refs.size()));
  }
  BleuOptions opts;
  opts.smoothing = f.smoothing;
  const BleuReport r = corpus_bleu(std::span<const TokenSequence>(hyps),
                                   std::span<const TokenSequence>(refs), opts);
  ordered_json j;
  j["bleu"] = r.bleu;
  j["n_gram_precisions"] = r.n_gram_precisions;
  j["brevity_penalty"] = r.brevity_penalty;
  j["hypothesis_length"] = r.hypothesis_length;
  j["reference_length"] = r.reference_length;
  j["matches"] = r.matches;
  j["totals"] = r.totals;
  j["smoothing"] = f.smoothing;
  out << j.dump() << '\n' << "BLEU " << r.percent() << '\n';
  return kExitOk;
}

int cmd_experiment(const Flags& f, std::ostream& out, std::ostream& err) {
  const ExperimentSpec spec = load_spec(f);
  const ComparisonReport report = run_experiment(spec, &err);
  out << report.table();
  if (f.json) out << report.to_json().dump(2) << '\n';
  return report.any_failed() ? kExitPartial : kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scheduled-sampling NMT toolkit with dynamic oracles", "ssnmt"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen-data", "write a synthetic parallel corpus");
  add_config(gen, f);
  add_data_flags(gen, f);
  gen->add_option("--seed", f.seeds, "generator seed")->expected(1);
  gen->add_option("--out", f.out, "output directory")->required();

  auto* plm = app.add_subcommand("pretrain-lm", "train the target-side language model");
  add_config(plm, f);
  add_model_flags(plm, f);
  plm->add_option("--data", f.data, "corpus directory")->required();
  plm->add_option("--seed", f.seeds, "training seed")->expected(1);
  plm->add_option("--out", f.out, "output directory")->required();

  auto* pbl = app.add_subcommand("pretrain-baseline", "teacher-forcing training to plateau");
  add_config(pbl, f);
  add_model_flags(pbl, f);
  pbl->add_option("--data", f.data, "corpus directory")->required();
  pbl->add_option("--seed", f.seeds, "training seed")->expected(1);
  pbl->add_option("--out", f.out, "output directory")->required();

  auto* trn = app.add_subcommand("train", "train a model under the feed policy");
  add_config(trn, f);
  add_model_flags(trn, f);
  add_schedule_flags(trn, f);
  trn->add_option("--data", f.data, "corpus directory")->required();
  trn->add_option("--seed", f.seeds, "training seed")->expected(1);
  trn->add_option("--oracle", f.oracle, "none, lm or pretrained");
  trn->add_option("--lm-checkpoint", f.lm_checkpoint, "frozen language model");
  trn->add_option("--baseline-checkpoint", f.baseline_checkpoint, "frozen pre-trained model");
  trn->add_option("--trace", f.trace, "write feed decisions as JSON lines");
  trn->add_option("--out", f.out, "output directory")->required();

  auto* tr = app.add_subcommand("translate", "translate sentences one per line");
  add_config(tr, f);
  tr->add_option("--checkpoint", f.checkpoint, "model checkpoint")->required();
  tr->add_option("--input", f.input, "source sentences")->required();
  tr->add_option("--output", f.output, "translations (default stdout)");
  tr->add_option("--beam", f.beam, "beam width (1 = greedy)");

  auto* ev = app.add_subcommand("evaluate", "corpus BLEU of a hypothesis file");
  ev->add_option("--hyp", f.hyp, "hypotheses")->required();
  ev->add_option("--ref", f.ref, "references")->required();
  ev->add_flag("--smoothing", f.smoothing, "add-one smoothing for 2- to 4-grams");

  auto* ex = app.add_subcommand("experiment", "baseline / SS / SS+LM / SS+PRE comparison");
  add_config(ex, f);
  add_data_flags(ex, f);
  add_model_flags(ex, f);
  add_schedule_flags(ex, f);
  ex->add_option("--seed", f.seeds, "seeds; repeat for several");
  ex->add_option("--systems", f.systems, "subset of baseline, SS, SS+LM, SS+PRE");
  ex->add_option("--beam", f.beam, "evaluation beam width");
  ex->add_option("--lm-checkpoint", f.lm_checkpoint, "frozen language model");
  ex->add_option("--baseline-checkpoint", f.baseline_checkpoint, "frozen pre-trained model");
  ex->add_flag("--json", f.json, "also print the machine-readable report");
  ex->add_option("--out", f.out, "output directory for reports and checkpoints");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(f, out);
    if (plm->parsed()) return cmd_pretrain_lm(f, out);
    if (pbl->parsed()) return cmd_pretrain_baseline(f, out, err);
    if (trn->parsed()) return cmd_train(f, out, err);
    if (tr->parsed()) return cmd_translate(f, out);
    if (ev->parsed()) return cmd_evaluate(f, out);
    if (ex->parsed()) return cmd_experiment(f, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace ssnmt::cli
