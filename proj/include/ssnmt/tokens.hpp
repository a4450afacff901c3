// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "ssnmt/tensor.hpp"

namespace ssnmt {

// Reserved ids, identical in source and target vocabularies.
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr int kNumSpecials = 4;

using Sentence = std::vector<TokenId>;

}  // namespace ssnmt
