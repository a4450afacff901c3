// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "ssnmt/parameters.hpp"

namespace ssnmt {

/// Indices of one GRU transition inside a ParameterSet.
///   input     [d_in x 3H]  columns ordered (update, reset, candidate)
///   gates     [H x 2H]     recurrent weights for (update, reset)
///   candidate [H x H]      recurrent weights applied to reset * h
///   bias      [1 x 3H]
struct GruLayout {
  std::size_t input = 0;
  std::size_t gates = 0;
  std::size_t candidate = 0;
  std::size_t bias = 0;
  Eigen::Index input_dim = 0;
  Eigen::Index hidden_dim = 0;
};

GruLayout add_gru(ParameterSet& set, const std::string& prefix, Eigen::Index input_dim,
                  Eigen::Index hidden_dim);

/// One transition h' = (1 - z) * h + z * tanh(x W_c + (r * h) U_c + b_c) with
/// z, r = sigmoid(x W + h U + b). x is [B x d_in], h is [B x H].
Tensor gru_step(const BoundParameters& bound, const GruLayout& layout, const Tensor& x,
                const Tensor& h);

}  // namespace ssnmt
