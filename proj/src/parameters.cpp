// SPDX-License-Identifier: Apache-2.0
#include "ssnmt/parameters.hpp"

#include <cstring>

#include "ssnmt/errors.hpp"

namespace ssnmt {

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t ParameterSet::add(std::string name, Matrix value) {
  for (const auto& n : names_) {
    if (n == name) throw ContractError("duplicate parameter name '" + name + "'");
  }
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::size_t ParameterSet::index(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw ContractError("unknown parameter '" + std::string(name) + "'");
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

void ParameterSet::init_uniform(Rng& rng, Scalar scale) {
  for (auto& v : values_) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = rng.uniform(-scale, scale);
  }
}

std::uint64_t ParameterSet::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    h = fnv1a(names_[i].data(), names_[i].size(), h);
    const std::int64_t dims[2] = {values_[i].rows(), values_[i].cols()};
    h = fnv1a(dims, sizeof(dims), h);
    h = fnv1a(values_[i].data(), sizeof(Scalar) * static_cast<std::size_t>(values_[i].size()), h);
  }
  return h;
}

bool ParameterSet::all_finite() const {
  for (const auto& v : values_) {
    if (!v.allFinite()) return false;
  }
  return true;
}

bool ParameterSet::operator==(const ParameterSet& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const Matrix& a = values_[i];
    const Matrix& b = other.values_[i];
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    // Bitwise comparison so that a round trip is checked exactly.
    if (std::memcmp(a.data(), b.data(), sizeof(Scalar) * static_cast<std::size_t>(a.size())) != 0) {
      return false;
    }
  }
  return true;
}

BoundParameters::BoundParameters(Tape& tape, const ParameterSet& set, bool track_gradients)
    : tape_(&tape), tracking_(track_gradients) {
  leaves_.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    leaves_.push_back(tape.bind(set.value(i), track_gradients));
  }
}

std::vector<Matrix> BoundParameters::gradients() const {
  std::vector<Matrix> out;
  out.reserve(leaves_.size());
  for (const Tensor& t : leaves_) out.push_back(t.grad());
  return out;
}

}  // namespace ssnmt
