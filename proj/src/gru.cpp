// SPDX-License-Identifier: Apache-2.0
#include "ssnmt/gru.hpp"

namespace ssnmt {

GruLayout add_gru(ParameterSet& set, const std::string& prefix, Eigen::Index input_dim,
                  Eigen::Index hidden_dim) {
  GruLayout g;
  g.input_dim = input_dim;
  g.hidden_dim = hidden_dim;
  g.input = set.add(prefix + ".input", Matrix::Zero(input_dim, 3 * hidden_dim));
  g.gates = set.add(prefix + ".gates", Matrix::Zero(hidden_dim, 2 * hidden_dim));
  g.candidate = set.add(prefix + ".candidate", Matrix::Zero(hidden_dim, hidden_dim));
  g.bias = set.add(prefix + ".bias", Matrix::Zero(1, 3 * hidden_dim));
  return g;
}

Tensor gru_step(const BoundParameters& bound, const GruLayout& layout, const Tensor& x,
                const Tensor& h) {
  const Eigen::Index H = layout.hidden_dim;
  const Tensor xw = add_bias(matmul(x, bound[layout.input]), bound[layout.bias]);
  const Tensor hu = matmul(h, bound[layout.gates]);
  const Tensor z = sigmoid(slice_cols(xw, 0, H) + slice_cols(hu, 0, H));
  const Tensor r = sigmoid(slice_cols(xw, H, H) + slice_cols(hu, H, H));
  const Tensor cand = tanh(slice_cols(xw, 2 * H, H) + matmul(r * h, bound[layout.candidate]));
  return h + z * (cand - h);
}

}  // namespace ssnmt
