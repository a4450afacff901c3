// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ssnmt/random.hpp"
#include "ssnmt/tensor.hpp"

namespace ssnmt {

/// Ordered, named collection of parameter matrices (theta).
class ParameterSet {
 public:
  std::size_t add(std::string name, Matrix value);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Matrix& value(std::size_t i) { return values_[i]; }
  const Matrix& value(std::size_t i) const { return values_[i]; }
  /// Throws ContractError for unknown names.
  std::size_t index(std::string_view name) const;
  std::size_t scalar_count() const;

  /// Fills every matrix with uniform(-scale, scale) draws, in insertion order.
  void init_uniform(Rng& rng, Scalar scale);
  /// FNV-1a over names, shapes and the raw bytes of every value.
  std::uint64_t checksum() const;
  bool all_finite() const;

  bool operator==(const ParameterSet& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

/// A ParameterSet bound to a tape: one leaf tensor per parameter.
class BoundParameters {
 public:
  BoundParameters(Tape& tape, const ParameterSet& set, bool track_gradients);

  const Tensor& operator[](std::size_t i) const { return leaves_[i]; }
  Tape& tape() const { return *tape_; }
  bool tracking() const { return tracking_; }
  /// Gradients after backward(), aligned with the parameter set.
  std::vector<Matrix> gradients() const;

 private:
  Tape* tape_;
  bool tracking_;
  std::vector<Tensor> leaves_;
};

/// FNV-1a 64-bit hash, used for checksums and fingerprints.
std::uint64_t fnv1a(const void* data, std::size_t size,
                    std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace ssnmt
