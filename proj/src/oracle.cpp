// SPDX-License-Identifier: Apache-2.0
#include "ssnmt/oracle.hpp"

#include "ssnmt/errors.hpp"

namespace ssnmt {

OracleKind parse_oracle_kind(const std::string& name) {
  if (name == "none") return OracleKind::None;
  if (name == "lm" || name == "language_model") return OracleKind::LanguageModel;
  if (name == "pretrained" || name == "pre") return OracleKind::PretrainedNMT;
  throw ConfigError("unknown oracle '" + name + "' (expected none, lm, pretrained)");
}

std::string to_string(OracleKind kind) {
  switch (kind) {
    case OracleKind::None: return "none";
    case OracleKind::LanguageModel: return "lm";
    case OracleKind::PretrainedNMT: return "pretrained";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// ReferenceBag

ReferenceBag::ReferenceBag(const Sentence& gold, std::size_t vocab) : counts_(vocab, 0) {
  for (TokenId id : gold) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("reference token " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
    ++counts_[static_cast<std::size_t>(id)];
    ++size_;
  }
}

int ReferenceBag::count(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= counts_.size()) return 0;
  return counts_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> ReferenceBag::members() const {
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    if (counts_[i] > 0) out.push_back(static_cast<TokenId>(i));
  }
  return out;
}

void ReferenceBag::remove_one(TokenId id) {
  if (!contains(id)) throw ContractError("remove_one: token not in the reference bag");
  --counts_[static_cast<std::size_t>(id)];
  --size_;
}

// ---------------------------------------------------------------------------
// OracleHandle

struct OracleHandle::Impl {
  std::shared_ptr<const LanguageModelParameters> lm;
  std::shared_ptr<const ModelParameters> nmt;
  bool deplete = false;

  std::unique_ptr<Tape> tape;
  std::unique_ptr<LanguageModelGraph> lm_graph;
  std::unique_ptr<Seq2SeqGraph> nmt_graph;
  LanguageModelState lm_state;
  DecoderState nmt_state;
  EncoderOutput encoder;

  std::size_t batch = 0;
  bool ready = false;
  std::vector<ReferenceBag> bags;
  std::vector<std::vector<TokenId>> fed;  // one column per step
  std::size_t consumed = 0;
  Matrix logits;
  // Proposal cache keyed by prefix length, so repeated queries at the same
  // prefix neither recompute nor deplete twice.
  std::vector<std::optional<TokenId>> cached;
  std::vector<std::size_t> cached_at;

  int target_vocab() const {
    return lm ? lm->config().vocab : nmt->config().target_vocab;
  }

  void catch_up() {
    while (consumed < fed.size()) {
      const std::vector<TokenId>& column = fed[consumed];
      if (lm) {
        LanguageModelStep step = lm_graph->step(lm_state, column);
        logits = step.logits.value();
        lm_state = std::move(step.next);
      } else {
        DecoderStep step = nmt_graph->decode_step(nmt_state, column, encoder);
        logits = step.logits.value();
        nmt_state = std::move(step.next);
      }
      ++consumed;
    }
  }
};

OracleHandle::OracleHandle(std::unique_ptr<Impl> impl, OracleKind kind)
    : impl_(std::move(impl)), kind_(kind) {}
OracleHandle::OracleHandle(OracleHandle&&) noexcept = default;
OracleHandle& OracleHandle::operator=(OracleHandle&&) noexcept = default;
OracleHandle::~OracleHandle() = default;

OracleHandle OracleHandle::language_model(std::shared_ptr<const LanguageModelParameters> lm,
                                          bool deplete_bag) {
  if (!lm) throw ContractError("language-model oracle needs a model");
  auto impl = std::make_unique<Impl>();
  impl->lm = std::move(lm);
  impl->deplete = deplete_bag;
  return OracleHandle(std::move(impl), OracleKind::LanguageModel);
}

OracleHandle OracleHandle::pretrained(std::shared_ptr<const ModelParameters> model) {
  if (!model) throw ContractError("pre-trained oracle needs a model");
  auto impl = std::make_unique<Impl>();
  impl->nmt = std::move(model);
  return OracleHandle(std::move(impl), OracleKind::PretrainedNMT);
}

void OracleHandle::reset_for_batch(std::span<const Sentence> sources,
                                   std::span<const Sentence> gold_targets) {
  Impl& s = *impl_;
  if (gold_targets.empty() || (s.nmt && sources.size() != gold_targets.size())) {
    throw ContractError("oracle reset: batch of " + std::to_string(sources.size()) +
                        " sources and " + std::to_string(gold_targets.size()) + " targets");
  }
  s.batch = gold_targets.size();
  s.tape = std::make_unique<Tape>();
  s.bags.clear();
  const auto vocab = static_cast<std::size_t>(s.target_vocab());
  for (const Sentence& g : gold_targets) s.bags.emplace_back(g, vocab);
  if (s.lm) {
    s.lm_graph = std::make_unique<LanguageModelGraph>(*s.tape, *s.lm, false);
    s.lm_state = s.lm_graph->initial_state(static_cast<Eigen::Index>(s.batch));
  } else {
    const int src_vocab = s.nmt->config().source_vocab;
    for (const Sentence& src : sources) {
      for (TokenId id : src) {
        if (id < 0 || id >= src_vocab) {
          throw ContractError("oracle reset: source id " + std::to_string(id) +
                              " does not belong to the pre-trained model's vocabulary");
        }
      }
    }
    s.nmt_graph = std::make_unique<Seq2SeqGraph>(*s.tape, *s.nmt, false);
    s.encoder = s.nmt_graph->encode(sources);
    s.nmt_state = s.nmt_graph->initial_state(s.encoder);
  }
  s.fed.clear();
  s.consumed = 0;
  s.logits.resize(0, 0);
  s.cached.assign(s.batch, std::nullopt);
  s.cached_at.assign(s.batch, SIZE_MAX);
  s.ready = true;
}

void OracleHandle::reset_for_sentence(const Sentence& source, const Sentence& gold_target) {
  reset_for_batch(std::span<const Sentence>(&source, 1),
                  std::span<const Sentence>(&gold_target, 1));
}

void OracleHandle::advance(std::span<const TokenId> fed) {
  Impl& s = *impl_;
  if (!s.ready) throw ContractError("oracle used before reset_for_batch");
  if (fed.size() != s.batch) {
    throw DimensionError("oracle advance: " + std::to_string(fed.size()) +
                         " tokens for a batch of " + std::to_string(s.batch));
  }
  const int vocab = s.target_vocab();
  for (TokenId id : fed) {
    if (id < 0 || id >= vocab) {
      throw IndexError("oracle advance: token " + std::to_string(id) + " outside vocabulary");
    }
  }
  s.fed.emplace_back(fed.begin(), fed.end());
}

std::optional<TokenId> OracleHandle::propose(std::size_t row) {
  Impl& s = *impl_;
  if (!s.ready) throw ContractError("oracle used before reset_for_batch");
  if (row >= s.batch) throw IndexError("oracle row " + std::to_string(row) + " outside batch");
  if (s.fed.empty()) throw ContractError("oracle proposal requires at least one fed token");
  if (s.cached_at[row] == s.fed.size()) return s.cached[row];

  s.catch_up();
  const auto r = static_cast<Eigen::Index>(row);
  std::optional<TokenId> out;
  if (s.lm) {
    ReferenceBag& bag = s.bags[row];
    double best = -std::numeric_limits<double>::infinity();
    for (TokenId id : bag.members()) {
      // members() ascends, so strict '>' keeps the lowest id among ties.
      if (!out || s.logits(r, id) > best) {
        best = s.logits(r, id);
        out = id;
      }
    }
    if (out && s.deplete) bag.remove_one(*out);
  } else {
    Eigen::Index arg = 0;
    s.logits.row(r).maxCoeff(&arg);
    out = static_cast<TokenId>(arg);
  }
  s.cached[row] = out;
  s.cached_at[row] = s.fed.size();
  return out;
}

std::optional<TokenId> OracleHandle::next(TokenId prefix_last_token) {
  if (batch() != 1) throw ContractError("next() is the single-sentence form (batch of 1)");
  const TokenId column[1] = {prefix_last_token};
  advance(column);
  return propose(0);
}

std::size_t OracleHandle::batch() const { return impl_->batch; }
std::size_t OracleHandle::prefix_length() const { return impl_->fed.size(); }

const ReferenceBag& OracleHandle::bag(std::size_t row) const {
  if (row >= impl_->bags.size()) throw IndexError("oracle row outside batch");
  return impl_->bags[row];
}

Matrix OracleHandle::hidden_state(std::size_t row) {
  Impl& s = *impl_;
  if (!s.ready) throw ContractError("oracle used before reset_for_batch");
  if (row >= s.batch) throw IndexError("oracle row outside batch");
  s.catch_up();
  const Matrix& h = s.lm ? s.lm_state.hidden.value() : s.nmt_state.hidden.value();
  return h.row(static_cast<Eigen::Index>(row));
}

std::uint64_t OracleHandle::parameter_checksum() const {
  return impl_->lm ? impl_->lm->set().checksum() : impl_->nmt->set().checksum();
}

std::optional<TokenId> lm_oracle_next(OracleHandle& handle, TokenId prefix_last_token) {
  if (handle.kind() != OracleKind::LanguageModel) {
    throw ContractError("lm_oracle_next called on a " + to_string(handle.kind()) + " oracle");
  }
  return handle.next(prefix_last_token);
}

std::optional<TokenId> pretrained_oracle_next(OracleHandle& handle, TokenId prefix_last_token) {
  if (handle.kind() != OracleKind::PretrainedNMT) {
    throw ContractError("pretrained_oracle_next called on a " + to_string(handle.kind()) +
                        " oracle");
  }
  return handle.next(prefix_last_token);
}

}  // namespace ssnmt
