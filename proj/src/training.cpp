// SPDX-License-Identifier: Apache-2.0
#include "ssnmt/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "ssnmt/bleu.hpp"
#include "ssnmt/decoding.hpp"
#include "ssnmt/errors.hpp"

namespace ssnmt {

namespace {

constexpr std::uint64_t kShuffleStream = 11;
constexpr std::uint64_t kCoinStream = 12;
constexpr std::uint64_t kSampleStream = 13;

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

TokenId sample_row(const Matrix& logits, Eigen::Index row, Rng& rng) {
  const Matrix logp = log_softmax_rows(logits.row(row));
  double u = rng.uniform();
  for (Eigen::Index v = 0; v < logp.cols(); ++v) {
    u -= std::exp(logp(0, v));
    if (u < 0.0) return static_cast<TokenId>(v);
  }
  return static_cast<TokenId>(logp.cols() - 1);
}

TokenId argmax_row(const Matrix& logits, Eigen::Index row) {
  Eigen::Index arg = 0;
  logits.row(row).maxCoeff(&arg);
  return static_cast<TokenId>(arg);
}

}  // namespace

LossTarget parse_loss_target(const std::string& name) {
  if (name == "gold") return LossTarget::Gold;
  if (name == "oracle" || name == "oracle_substituted") return LossTarget::OracleSubstituted;
  throw ConfigError("unknown loss target '" + name + "' (expected gold, oracle)");
}

std::string to_string(LossTarget target) {
  return target == LossTarget::Gold ? "gold" : "oracle";
}

void TrainingConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(adagrad_epsilon > 0.0)) throw ConfigError("adagrad_epsilon must be positive");
  if (!(gradient_clip > 0.0)) throw ConfigError("gradient_clip must be positive");
  if (max_length < 1) throw ConfigError("max_length must be at least 1");
  if (dev_beam < 1) throw ConfigError("dev_beam must be at least 1");
  schedule.validate();
}

OptimizerState OptimizerState::for_parameters(const ParameterSet& set) {
  OptimizerState s;
  for (std::size_t i = 0; i < set.size(); ++i) {
    s.accumulators.push_back(Matrix::Zero(set.value(i).rows(), set.value(i).cols()));
  }
  return s;
}

double clip_gradients(std::vector<Matrix>& grads, double max_norm) {
  double sq = 0.0;
  for (const Matrix& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (Matrix& g : grads) g *= scale;
  }
  return norm;
}

void adagrad_update(ParameterSet& params, OptimizerState& state, const std::vector<Matrix>& grads,
                    double learning_rate, double epsilon) {
  if (grads.size() != params.size() || state.accumulators.size() != params.size()) {
    throw DimensionError("adagrad_update: " + std::to_string(grads.size()) + " gradients, " +
                         std::to_string(state.accumulators.size()) + " accumulators for " +
                         std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& acc = state.accumulators[i];
    const Matrix& g = grads[i];
    acc.array() += g.array().square();
    params.value(i).array() -= learning_rate * g.array() / (acc.array() + epsilon).sqrt();
  }
}

StepResult train_step(std::span<const Sentence> sources, std::span<const Sentence> targets,
                      ModelParameters& params, OptimizerState& opt, const TrainingConfig& config,
                      StepContext& context) {
  if (sources.empty()) throw ContractError("train_step: empty batch");
  if (sources.size() != targets.size()) {
    throw ContractError("train_step: " + std::to_string(sources.size()) + " sources for " +
                        std::to_string(targets.size()) + " targets");
  }
  if (context.coins == nullptr) throw ContractError("train_step: no coin generator");
  if (config.sample_estimates && context.sampler == nullptr) {
    throw ContractError("train_step: sampled estimates need a sampler");
  }
  const std::size_t B = sources.size();
  for (std::size_t b = 0; b < B; ++b) {
    if (sources[b].empty() || targets[b].empty()) {
      throw ContractError("train_step: empty sentence in batch row " + std::to_string(b));
    }
    if (sources[b].size() > config.max_length || targets[b].size() > config.max_length) {
      throw ContractError("train_step: batch row " + std::to_string(b) + " exceeds max_length " +
                          std::to_string(config.max_length));
    }
  }
  auto sentence_id = [&](std::size_t b) {
    return b < context.sentence_ids.size() ? context.sentence_ids[b] : b;
  };

  std::vector<Sentence> gold(targets.begin(), targets.end());
  std::size_t steps = 0;
  std::size_t tokens = 0;
  for (Sentence& g : gold) {
    g.push_back(kEos);
    steps = std::max(steps, g.size());
    tokens += g.size();
  }

  Tape tape;
  const Seq2SeqGraph graph(tape, params, true);
  const EncoderOutput enc = graph.encode(sources);
  DecoderState state = graph.initial_state(enc);
  if (context.oracle != nullptr) context.oracle->reset_for_batch(sources, targets);

  StepResult result;
  result.tokens = tokens;
  std::vector<SentenceFeedState> feed(B);
  std::vector<TokenId> inputs(B);
  std::vector<TokenId> step_targets(B);
  std::vector<Scalar> weights(B);
  Matrix prev_logits;
  Tensor total;

  for (std::size_t t = 1; t <= steps; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      if (t > gold[b].size()) {
        inputs[b] = kPad;
        continue;
      }
      if (t == 1) {
        inputs[b] = kBos;
        ++result.branches.bos;
        continue;
      }
      const auto row = static_cast<Eigen::Index>(b);
      const TokenId gold_prev = gold[b][t - 2];
      const TokenId model_prev = config.sample_estimates
                                     ? sample_row(prev_logits, row, *context.sampler)
                                     : argmax_row(prev_logits, row);
      OracleQuery query;
      if (context.oracle != nullptr) {
        query = [&context, b] { return context.oracle->propose(b); };
      } else {
        query = static_oracle(gold_prev);
      }
      const FeedDecision d =
          decide_feed(feed[b], t, gold_prev, model_prev, query, context.epsilon, *context.coins);
      inputs[b] = d.fed_token;
      result.branches.add(d);
      if (context.trace != nullptr) context.trace->push_back({sentence_id(b), d});
    }
    if (context.oracle != nullptr) context.oracle->advance(inputs);

    DecoderStep step = graph.decode_step(state, inputs, enc);
    for (std::size_t b = 0; b < B; ++b) {
      const bool live = t <= gold[b].size();
      weights[b] = live ? 1.0 : 0.0;
      step_targets[b] = live ? gold[b][t - 1] : kPad;
      if (live && config.loss_target == LossTarget::OracleSubstituted && feed[b].used_estimate &&
          t < gold[b].size() && context.oracle != nullptr) {
        if (const auto proposal = context.oracle->propose(b)) step_targets[b] = *proposal;
      }
    }
    const Matrix& logits = step.logits.value();
    for (std::size_t b = 0; b < B; ++b) {
      if (weights[b] > 0.0 && !logits.row(static_cast<Eigen::Index>(b)).allFinite()) {
        throw NumericError("non-finite logits at update " + std::to_string(context.update) +
                           ", decoder step " + std::to_string(t) + ", sentence " +
                           std::to_string(sentence_id(b)));
      }
    }
    const Tensor ce = softmax_cross_entropy(step.logits, step_targets, weights);
    total = total.valid() ? total + ce : ce;
    prev_logits = logits;
    state = std::move(step.next);
  }

  const Tensor loss = (1.0 / static_cast<Scalar>(tokens)) * total;
  result.loss = loss.item();
  if (!std::isfinite(result.loss)) {
    throw NumericError("non-finite loss at update " + std::to_string(context.update) +
                       ", batch starting at sentence " + std::to_string(sentence_id(0)));
  }
  tape.backward(loss);
  std::vector<Matrix> grads = graph.bound().gradients();
  result.grad_norm = clip_gradients(grads, config.gradient_clip);
  result.clipped_norm = std::min(result.grad_norm, config.gradient_clip);
  adagrad_update(params.set(), opt, grads, config.learning_rate, config.adagrad_epsilon);
  if (!params.set().all_finite()) {
    throw NumericError("non-finite parameters after update " + std::to_string(context.update));
  }
  return result;
}

BranchCounts RunRecord::total_branches() const {
  BranchCounts total;
  for (const EpochRecord& e : epochs) total += e.branches;
  return total;
}

void write_run_record(std::ostream& out, const RunRecord& record, bool include_wall_time) {
  for (const EpochRecord& e : record.epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["loss"] = e.loss;
    j["dev_bleu"] = std::isnan(e.dev_bleu) ? nlohmann::ordered_json(nullptr)
                                           : nlohmann::ordered_json(e.dev_bleu);
    j["updates"] = e.updates;
    j["epsilon_start"] = e.epsilon_start;
    j["epsilon_end"] = e.epsilon_end;
    j["max_grad_norm"] = e.max_grad_norm;
    j["branches"] = {{"bos", e.branches.bos},
                     {"model_estimate", e.branches.model_estimate},
                     {"gold", e.branches.gold},
                     {"oracle", e.branches.oracle},
                     {"fallback", e.branches.fallback}};
    if (include_wall_time) j["wall_seconds"] = e.wall_seconds;
    out << j.dump() << '\n';
  }
}

bool PlateauDetector::observe(double score) {
  if (score <= 0.0 && best_ <= 0.0) return false;
  if (score > best_ + min_delta_) {
    best_ = score;
    stale_ = 0;
  } else {
    if (score > best_) best_ = score;
    ++stale_;
  }
  return stale_ >= patience_;
}

double evaluate_bleu(const ParallelCorpus& corpus, const ModelParameters& params,
                     std::size_t beam_width) {
  if (corpus.size() == 0) throw ContractError("evaluate_bleu: empty corpus");
  std::vector<Sentence> hyps;
  hyps.reserve(corpus.size());
  constexpr std::size_t kChunk = 64;
  for (std::size_t i = 0; i < corpus.size(); i += kChunk) {
    const std::size_t n = std::min(kChunk, corpus.size() - i);
    const auto out = translate_all(std::span<const Sentence>(corpus.source).subspan(i, n), params,
                                   beam_width);
    hyps.insert(hyps.end(), out.begin(), out.end());
  }
  return corpus_bleu(std::span<const Sentence>(hyps), std::span<const Sentence>(corpus.target))
      .bleu;
}

RunRecord train_model(const ParallelCorpus& train, ModelParameters& params,
                      const TrainingConfig& config, OracleHandle* oracle,
                      const TrainOptions& options) {
  config.validate();
  if ((config.oracle_kind == OracleKind::None) != (oracle == nullptr) ||
      (oracle != nullptr && oracle->kind() != config.oracle_kind)) {
    throw ContractError("train_model: oracle handle does not match oracle kind " +
                        to_string(config.oracle_kind));
  }
  if (options.stop_on_plateau && options.dev == nullptr) {
    throw ContractError("train_model: plateau stopping needs a dev set");
  }
  RunRecord record;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const bool ok = !train.source[i].empty() && !train.target[i].empty() &&
                    train.source[i].size() <= config.max_length &&
                    train.target[i].size() <= config.max_length;
    if (ok) {
      order.push_back(i);
    } else {
      ++record.skipped_pairs;
    }
  }
  if (order.empty()) throw ContractError("train_model: no usable training pairs");
  if (oracle != nullptr) record.oracle_checksum_start = oracle->parameter_checksum();

  Rng shuffler(derive_seed(config.seed, kShuffleStream));
  Rng coins(derive_seed(config.seed, kCoinStream));
  Rng sampler(derive_seed(config.seed, kSampleStream));
  OptimizerState opt = OptimizerState::for_parameters(params.set());
  PlateauDetector plateau;
  const std::size_t per_epoch = ceil_div(order.size(), config.batch_size);
  const std::size_t planned = per_epoch * config.epochs;
  std::size_t completed = 0;

  std::vector<Sentence> src;
  std::vector<Sentence> tgt;
  std::vector<std::size_t> ids;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    shuffler.shuffle(order.begin(), order.end());
    EpochRecord e;
    e.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t token_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      src.clear();
      tgt.clear();
      ids.clear();
      for (std::size_t k = start; k < end; ++k) {
        src.push_back(train.source[order[k]]);
        tgt.push_back(train.target[order[k]]);
        ids.push_back(order[k]);
      }
      const double progress =
          planned == 0 ? 0.0 : static_cast<double>(completed) / static_cast<double>(planned);
      StepContext ctx;
      ctx.epsilon = epsilon(config.schedule, progress);
      ctx.oracle = oracle;
      ctx.coins = &coins;
      ctx.sampler = &sampler;
      ctx.sentence_ids = ids;
      ctx.trace = options.trace;
      ctx.update = completed;
      const std::size_t trace_mark = options.trace != nullptr ? options.trace->size() : 0;
      std::vector<TraceEntry> local;
      if (options.trace_out != nullptr && options.trace == nullptr) ctx.trace = &local;
      const StepResult r = train_step(src, tgt, params, opt, config, ctx);
      if (options.trace_out != nullptr) {
        const auto& sink = options.trace != nullptr ? *options.trace : local;
        for (std::size_t i = options.trace != nullptr ? trace_mark : 0; i < sink.size(); ++i) {
          write_trace_record(*options.trace_out, sink[i].sentence, sink[i].decision);
        }
      }
      if (e.updates == 0) e.epsilon_start = ctx.epsilon;
      e.epsilon_end = ctx.epsilon;
      e.max_grad_norm = std::max(e.max_grad_norm, r.grad_norm);
      e.branches += r.branches;
      loss_sum += r.loss * static_cast<double>(r.tokens);
      token_sum += r.tokens;
      ++e.updates;
      ++completed;
    }
    e.loss = loss_sum / static_cast<double>(token_sum);
    if (options.dev != nullptr) e.dev_bleu = evaluate_bleu(*options.dev, params, config.dev_beam);
    e.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    record.epochs.push_back(e);
    if (options.on_epoch) options.on_epoch(e);
    if (options.stop_on_plateau && plateau.observe(e.dev_bleu)) {
      record.stopped_on_plateau = true;
      break;
    }
  }
  if (oracle != nullptr) record.oracle_checksum_end = oracle->parameter_checksum();
  return record;
}

RunRecord pretrain_baseline(const ParallelCorpus& train, const ParallelCorpus& dev,
                            ModelParameters& params, TrainingConfig config,
                            const TrainOptions& options) {
  config.schedule = SamplingSchedule::constant(0.0);
  config.oracle_kind = OracleKind::None;
  config.loss_target = LossTarget::Gold;
  TrainOptions opts = options;
  opts.dev = &dev;
  opts.stop_on_plateau = true;
  return train_model(train, params, config, nullptr, opts);
}

// ---------------------------------------------------------------------------
// Language model

void LanguageModelTrainingConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(adagrad_epsilon > 0.0)) throw ConfigError("adagrad_epsilon must be positive");
  if (!(gradient_clip > 0.0)) throw ConfigError("gradient_clip must be positive");
}

namespace {

// Sum of next-token cross-entropies over a batch and the token count.
std::pair<Tensor, std::size_t> lm_batch_loss(const LanguageModelGraph& graph,
                                             std::span<const Sentence> batch) {
  std::size_t steps = 0;
  std::size_t tokens = 0;
  for (const Sentence& s : batch) {
    steps = std::max(steps, s.size() + 1);
    tokens += s.size() + 1;
  }
  const std::size_t B = batch.size();
  LanguageModelState state = graph.initial_state(static_cast<Eigen::Index>(B));
  std::vector<TokenId> inputs(B);
  std::vector<TokenId> targets(B);
  std::vector<Scalar> weights(B);
  Tensor total;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      const Sentence& s = batch[b];
      const bool live = t <= s.size();
      inputs[b] = !live ? kPad : (t == 0 ? kBos : s[t - 1]);
      targets[b] = !live ? kPad : (t == s.size() ? kEos : s[t]);
      weights[b] = live ? 1.0 : 0.0;
    }
    LanguageModelStep step = graph.step(state, inputs);
    const Tensor ce = softmax_cross_entropy(step.logits, targets, weights);
    total = total.valid() ? total + ce : ce;
    state = std::move(step.next);
  }
  return {total, tokens};
}

}  // namespace

double perplexity(const LanguageModelParameters& lm, std::span<const Sentence> sentences) {
  if (sentences.empty()) throw ContractError("perplexity: empty corpus");
  double nll = 0.0;
  std::size_t tokens = 0;
  constexpr std::size_t kChunk = 64;
  for (std::size_t i = 0; i < sentences.size(); i += kChunk) {
    Tape tape;
    const LanguageModelGraph graph(tape, lm, false);
    const auto [loss, n] =
        lm_batch_loss(graph, sentences.subspan(i, std::min(kChunk, sentences.size() - i)));
    nll += loss.item();
    tokens += n;
  }
  return std::exp(nll / static_cast<double>(tokens));
}

std::vector<LanguageModelEpoch> train_lm(std::span<const Sentence> corpus,
                                         std::span<const Sentence> held_out,
                                         LanguageModelParameters& lm,
                                         const LanguageModelTrainingConfig& config) {
  config.validate();
  if (corpus.empty()) throw ContractError("train_lm: empty corpus");
  Rng shuffler(derive_seed(config.seed, kShuffleStream));
  OptimizerState opt = OptimizerState::for_parameters(lm.set());
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<LanguageModelEpoch> out;
  std::vector<Sentence> batch;
  std::size_t update = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffler.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    std::size_t token_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + config.batch_size); ++k) {
        batch.push_back(corpus[order[k]]);
      }
      Tape tape;
      const LanguageModelGraph graph(tape, lm, true);
      const auto [total, tokens] = lm_batch_loss(graph, batch);
      const Tensor loss = (1.0 / static_cast<Scalar>(tokens)) * total;
      if (!std::isfinite(loss.item())) {
        throw NumericError("non-finite language-model loss at update " + std::to_string(update) +
                           ", batch starting at sentence " + std::to_string(order[start]));
      }
      tape.backward(loss);
      std::vector<Matrix> grads = graph.bound().gradients();
      clip_gradients(grads, config.gradient_clip);
      adagrad_update(lm.set(), opt, grads, config.learning_rate, config.adagrad_epsilon);
      loss_sum += loss.item() * static_cast<double>(tokens);
      token_sum += tokens;
      ++update;
    }
    LanguageModelEpoch e;
    e.epoch = epoch;
    e.loss = loss_sum / static_cast<double>(token_sum);
    if (!held_out.empty()) e.perplexity = perplexity(lm, held_out);
    out.push_back(e);
  }
  return out;
}

}  // namespace ssnmt
