// SPDX-License-Identifier: Apache-2.0
#include "ssnmt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ssnmt/errors.hpp"

namespace ssnmt {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'N', 'M', 'T', 'C', 'K', 'P'};
constexpr std::size_t kHeaderSize = 8 + 4 + 8 + 8;

class Writer {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void i64(std::int64_t v) { le(static_cast<std::uint64_t>(v), 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(le(8)); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == size_; }

 private:
  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw IntegrityError("checkpoint payload truncated");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::int64_t hyper(const Checkpoint& ck, const std::string& key) {
  const auto it = ck.hyperparameters.find(key);
  if (it == ck.hyperparameters.end()) {
    throw IntegrityError("checkpoint lacks hyperparameter '" + key + "'");
  }
  return it->second;
}

void expect_dim(const char* field, std::int64_t expected, std::int64_t found) {
  if (expected != found) {
    throw DimensionError(std::string("checkpoint ") + field + " is " + std::to_string(found) +
                         " but the configuration expects " + std::to_string(expected));
  }
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  Writer p;
  p.str(ck.kind);
  p.u32(static_cast<std::uint32_t>(ck.hyperparameters.size()));
  for (const auto& [k, v] : ck.hyperparameters) {
    p.str(k);
    p.i64(v);
  }
  for (const auto* vocab : {&ck.source_vocab, &ck.target_vocab}) {
    p.u32(static_cast<std::uint32_t>(vocab->size()));
    for (const std::string& t : *vocab) p.str(t);
  }
  p.str(ck.config_fingerprint);
  p.u64(ck.seed);
  p.u32(static_cast<std::uint32_t>(ck.parameters.size()));
  for (std::size_t i = 0; i < ck.parameters.size(); ++i) {
    const Matrix& m = ck.parameters.value(i);
    p.str(ck.parameters.name(i));
    p.u32(2);
    p.u64(static_cast<std::uint64_t>(m.rows()));
    p.u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.size(); ++j) p.f64(m.data()[j]);
  }

  std::vector<std::uint8_t>& payload = p.bytes();
  Writer out;
  auto& bytes = out.bytes();
  bytes.insert(bytes.end(), std::begin(kMagic), std::end(kMagic));
  out.u32(ck.version);
  out.u64(fnv1a(payload.data(), payload.size()));
  out.u64(payload.size());
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  return std::move(bytes);
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw IntegrityError("not a checkpoint file (bad magic or short header)");
  }
  Reader header(bytes.data() + 8, kHeaderSize - 8);
  Checkpoint ck;
  ck.version = header.u32();
  if (ck.version != kCheckpointVersion) {
    throw IntegrityError("unsupported checkpoint version " + std::to_string(ck.version) +
                         " (this build reads version " + std::to_string(kCheckpointVersion) +
                         ")");
  }
  const std::uint64_t checksum = header.u64();
  const std::uint64_t length = header.u64();
  if (bytes.size() - kHeaderSize != length) {
    throw IntegrityError("checkpoint truncated: header declares " + std::to_string(length) +
                         " payload bytes, file holds " + std::to_string(bytes.size() - kHeaderSize));
  }
  const std::uint8_t* payload = bytes.data() + kHeaderSize;
  if (fnv1a(payload, length) != checksum) throw IntegrityError("checkpoint checksum mismatch");

  Reader r(payload, length);
  ck.kind = r.str();
  const std::uint32_t n_hyper = r.u32();
  for (std::uint32_t i = 0; i < n_hyper; ++i) {
    std::string k = r.str();
    ck.hyperparameters[k] = r.i64();
  }
  for (auto* vocab : {&ck.source_vocab, &ck.target_vocab}) {
    const std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) vocab->push_back(r.str());
  }
  ck.config_fingerprint = r.str();
  ck.seed = r.u64();
  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank != 2) throw IntegrityError("tensor '" + name + "' has unsupported rank");
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    if (rows > length || cols > length || rows * cols * 8 > length) {
      throw IntegrityError("tensor '" + name + "' dimensions exceed the payload");
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = r.f64();
    ck.parameters.add(std::move(name), std::move(m));
  }
  if (!r.done()) throw IntegrityError("trailing bytes after checkpoint payload");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

Checkpoint make_checkpoint(const ModelParameters& params, const Vocabulary& source,
                           const Vocabulary& target, const std::string& fingerprint,
                           std::uint64_t seed) {
  const ModelConfig& c = params.config();
  Checkpoint ck;
  ck.kind = "seq2seq";
  ck.hyperparameters = {{"source_vocab", c.source_vocab},   {"target_vocab", c.target_vocab},
                        {"embedding_dim", c.embedding_dim}, {"hidden_dim", c.hidden_dim},
                        {"attention_dim", c.attention_dim}};
  ck.parameters = params.set();
  ck.source_vocab = source.tokens();
  ck.target_vocab = target.tokens();
  ck.config_fingerprint = fingerprint;
  ck.seed = seed;
  return ck;
}

Checkpoint make_checkpoint(const LanguageModelParameters& params, const Vocabulary& target,
                           const std::string& fingerprint, std::uint64_t seed) {
  const LanguageModelConfig& c = params.config();
  Checkpoint ck;
  ck.kind = "language_model";
  ck.hyperparameters = {
      {"vocab", c.vocab}, {"embedding_dim", c.embedding_dim}, {"hidden_dim", c.hidden_dim}};
  ck.parameters = params.set();
  ck.target_vocab = target.tokens();
  ck.config_fingerprint = fingerprint;
  ck.seed = seed;
  return ck;
}

ModelConfig model_config_of(const Checkpoint& ck) {
  if (ck.kind != "seq2seq") {
    throw IntegrityError("checkpoint holds a '" + ck.kind + "', not a translation model");
  }
  ModelConfig c;
  c.source_vocab = static_cast<int>(hyper(ck, "source_vocab"));
  c.target_vocab = static_cast<int>(hyper(ck, "target_vocab"));
  c.embedding_dim = static_cast<int>(hyper(ck, "embedding_dim"));
  c.hidden_dim = static_cast<int>(hyper(ck, "hidden_dim"));
  c.attention_dim = static_cast<int>(hyper(ck, "attention_dim"));
  return c;
}

LanguageModelConfig language_model_config_of(const Checkpoint& ck) {
  if (ck.kind != "language_model") {
    throw IntegrityError("checkpoint holds a '" + ck.kind + "', not a language model");
  }
  LanguageModelConfig c;
  c.vocab = static_cast<int>(hyper(ck, "vocab"));
  c.embedding_dim = static_cast<int>(hyper(ck, "embedding_dim"));
  c.hidden_dim = static_cast<int>(hyper(ck, "hidden_dim"));
  return c;
}

ModelParameters model_from_checkpoint(const Checkpoint& ck, const ModelConfig* expected) {
  const ModelConfig c = model_config_of(ck);
  if (expected) {
    expect_dim("source_vocab", expected->source_vocab, c.source_vocab);
    expect_dim("target_vocab", expected->target_vocab, c.target_vocab);
    expect_dim("embedding_dim", expected->embedding_dim, c.embedding_dim);
    expect_dim("hidden_dim", expected->hidden_dim, c.hidden_dim);
    expect_dim("attention_dim", expected->attention_width(), c.attention_width());
  }
  return ModelParameters(c, ck.parameters);
}

LanguageModelParameters language_model_from_checkpoint(const Checkpoint& ck,
                                                       const LanguageModelConfig* expected) {
  const LanguageModelConfig c = language_model_config_of(ck);
  if (expected) {
    expect_dim("vocab", expected->vocab, c.vocab);
    expect_dim("embedding_dim", expected->embedding_dim, c.embedding_dim);
    expect_dim("hidden_dim", expected->hidden_dim, c.hidden_dim);
  }
  return LanguageModelParameters(c, ck.parameters);
}

}  // namespace ssnmt
