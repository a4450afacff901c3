// SPDX-License-Identifier: Apache-2.0
#include "ssnmt/decoding.hpp"

#include <algorithm>
#include <tuple>

#include "ssnmt/errors.hpp"

namespace ssnmt {

std::size_t default_max_len(const Sentence& source) { return 2 * source.size() + 5; }

Sentence Hypothesis::scored_tokens() const {
  Sentence out = tokens;
  if (ended_with_eos) out.push_back(kEos);
  return out;
}

double Hypothesis::normalized_log_prob() const {
  const std::size_t n = scored_length();
  return n == 0 ? 0.0 : log_prob / static_cast<double>(n);
}

Sentence greedy_decode(const Sentence& source, const ModelParameters& params,
                       std::size_t max_len) {
  if (max_len < 1) throw ContractError("greedy_decode: max_len must be at least 1");
  Tape tape;
  const Seq2SeqGraph graph(tape, params, false);
  const EncoderOutput enc = graph.encode(source);
  DecoderState state = graph.initial_state(enc);
  Sentence out;
  TokenId prev = kBos;
  for (std::size_t t = 0; t < max_len; ++t) {
    const TokenId in[1] = {prev};
    DecoderStep step = graph.decode_step(state, in, enc);
    Eigen::Index arg = 0;
    step.logits.value().row(0).maxCoeff(&arg);
    prev = static_cast<TokenId>(arg);
    if (prev == kEos) break;
    out.push_back(prev);
    state = std::move(step.next);
  }
  return out;
}

Sentence greedy_decode(const Sentence& source, const ModelParameters& params) {
  return greedy_decode(source, params, default_max_len(source));
}

std::vector<Sentence> greedy_decode_batch(std::span<const Sentence> sources,
                                          const ModelParameters& params) {
  std::vector<Sentence> out(sources.size());
  if (sources.empty()) return out;
  Tape tape;
  const Seq2SeqGraph graph(tape, params, false);
  const EncoderOutput enc = graph.encode(sources);
  DecoderState state = graph.initial_state(enc);
  std::vector<TokenId> prev(sources.size(), kBos);
  std::vector<bool> done(sources.size(), false);
  std::size_t longest = 0;
  for (const Sentence& s : sources) longest = std::max(longest, default_max_len(s));
  for (std::size_t t = 0; t < longest; ++t) {
    DecoderStep step = graph.decode_step(state, prev, enc);
    const Matrix& logits = step.logits.value();
    bool any_live = false;
    for (std::size_t b = 0; b < sources.size(); ++b) {
      if (done[b]) {
        prev[b] = kPad;
        continue;
      }
      Eigen::Index arg = 0;
      logits.row(static_cast<Eigen::Index>(b)).maxCoeff(&arg);
      prev[b] = static_cast<TokenId>(arg);
      if (prev[b] == kEos) {
        done[b] = true;
        continue;
      }
      out[b].push_back(prev[b]);
      if (out[b].size() >= default_max_len(sources[b])) done[b] = true;
      any_live = any_live || !done[b];
    }
    if (!any_live) break;
    state = std::move(step.next);
  }
  return out;
}

namespace {

// Copies a B = 1 encoder output into `rows` identical rows.
EncoderOutput replicate(Tape& tape, const EncoderOutput& enc, Eigen::Index rows) {
  const Eigen::Index n = enc.positions();
  const Matrix& ann = enc.annotations.value();
  const Matrix& proj = enc.projected.value();
  Matrix a(n * rows, ann.cols());
  Matrix p(n * rows, proj.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index b = 0; b < rows; ++b) {
      a.row(i * rows + b) = ann.row(i);
      p.row(i * rows + b) = proj.row(i);
    }
  }
  EncoderOutput out;
  out.annotations = tape.constant(std::move(a));
  out.projected = tape.constant(std::move(p));
  out.final_state = enc.final_state;
  out.source_mask = enc.source_mask.replicate(rows, 1);
  out.lengths.assign(static_cast<std::size_t>(rows), enc.lengths.front());
  return out;
}

struct Candidate {
  double score;
  std::size_t parent;
  TokenId token;
};

}  // namespace

Hypothesis beam_decode(const Sentence& source, const ModelParameters& params,
                       std::size_t beam_width, std::size_t max_len) {
  if (beam_width < 1) throw ContractError("beam_decode: beam_width must be at least 1");
  if (max_len < 1) throw ContractError("beam_decode: max_len must be at least 1");
  Tape tape;
  const Seq2SeqGraph graph(tape, params, false);
  const EncoderOutput enc = graph.encode(source);
  const DecoderState init = graph.initial_state(enc);

  std::vector<Hypothesis> live(1);
  live[0].state = init.hidden.value();
  std::vector<TokenId> last{kBos};
  std::vector<Hypothesis> finished;

  for (std::size_t t = 0; t < max_len && !live.empty() && finished.size() < beam_width; ++t) {
    const auto rows = static_cast<Eigen::Index>(live.size());
    const EncoderOutput batch_enc = replicate(tape, enc, rows);
    Matrix hidden(rows, live[0].state.cols());
    for (Eigen::Index b = 0; b < rows; ++b) hidden.row(b) = live[static_cast<std::size_t>(b)].state;
    DecoderState state;
    state.hidden = tape.constant(std::move(hidden));
    state.step_index = t;
    state.fed_tokens = last;
    state.source_positions = batch_enc.positions();
    DecoderStep step = graph.decode_step(state, last, batch_enc);
    const Matrix logp = log_softmax_rows(step.logits.value());
    const Matrix& next_hidden = step.next.hidden.value();

    std::vector<Candidate> cands;
    cands.reserve(static_cast<std::size_t>(logp.size()));
    for (Eigen::Index b = 0; b < rows; ++b) {
      for (Eigen::Index v = 0; v < logp.cols(); ++v) {
        cands.push_back({live[static_cast<std::size_t>(b)].log_prob + logp(b, v),
                         static_cast<std::size_t>(b), static_cast<TokenId>(v)});
      }
    }
    const std::size_t keep = std::min(beam_width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& x, const Candidate& y) {
                        if (x.score != y.score) return x.score > y.score;
                        return std::tie(x.parent, x.token) < std::tie(y.parent, y.token);
                      });

    std::vector<Hypothesis> next_live;
    std::vector<TokenId> next_last;
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = cands[i];
      Hypothesis h;
      h.tokens = live[c.parent].tokens;
      h.log_prob = c.score;
      h.state = next_hidden.row(static_cast<Eigen::Index>(c.parent));
      if (c.token == kEos) {
        h.finished = true;
        h.ended_with_eos = true;
        finished.push_back(std::move(h));
        continue;
      }
      h.tokens.push_back(c.token);
      if (h.tokens.size() >= max_len) {
        h.finished = true;
        finished.push_back(std::move(h));
        continue;
      }
      next_last.push_back(c.token);
      next_live.push_back(std::move(h));
    }
    live = std::move(next_live);
    last = std::move(next_last);
  }
  if (finished.empty()) {
    // Only reachable if the loop exits with live hypotheses, which the cap prevents.
    throw ContractError("beam_decode: no finished hypothesis");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i) {
    if (finished[i].normalized_log_prob() > finished[best].normalized_log_prob()) best = i;
  }
  return finished[best];
}

Hypothesis beam_decode(const Sentence& source, const ModelParameters& params,
                       std::size_t beam_width) {
  return beam_decode(source, params, beam_width, default_max_len(source));
}

std::vector<Sentence> translate_all(std::span<const Sentence> sources,
                                    const ModelParameters& params, std::size_t beam_width) {
  if (beam_width <= 1) return greedy_decode_batch(sources, params);
  std::vector<Sentence> out;
  out.reserve(sources.size());
  for (const Sentence& s : sources) out.push_back(beam_decode(s, params, beam_width).tokens);
  return out;
}

}  // namespace ssnmt
