// Copyright 2026 The pholid Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PHOLID_LAYERS_HPP_
#define PHOLID_LAYERS_HPP_

// Differentiable building blocks with explicit forward/backward passes.
// Forward functions fill a cache; Backward consumes it, accumulates parameter
// gradients into Param::grad and returns the gradient w.r.t. the input.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pholid/tensor.hpp"

namespace pholid::nn {

struct Param {
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(Eigen::Index rows, Eigen::Index cols)
      : value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

  void ZeroGrad() { grad.setZero(value.rows(), value.cols()); }
};

enum class Mode { kTrain, kEval };

enum class Activation { kRelu, kTanh };

std::string_view ActivationName(Activation a);
Activation ParseActivation(std::string_view name);

Matrix Activate(const Matrix& pre, Activation a);
// Gradient through the activation given its input, output and upstream grad.
Matrix ActivateBackward(const Matrix& pre, const Matrix& post, const Matrix& dy, Activation a);

// y = x W^T + b, applied row-wise. A kernel-size-1 convolution over frames is
// exactly this map applied to every frame independently.
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_dim, std::size_t out_dim, Rng& rng);

  Matrix Forward(const Matrix& x) const;
  Matrix Backward(const Matrix& x, const Matrix& dy);

  std::size_t in_dim() const { return static_cast<std::size_t>(weight.value.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weight.value.rows()); }

  Param weight;  // out x in
  Param bias;    // 1 x out
};

// Batch normalisation over rows (frames), per column (channel).
class BatchNorm {
 public:
  struct Cache {
    Matrix normalized;
    RowVector inv_std;
    Mode mode = Mode::kEval;
  };

  BatchNorm() = default;
  BatchNorm(std::size_t channels, double momentum, double eps);

  // In training mode uses batch statistics and updates the running ones.
  Matrix Forward(const Matrix& x, Mode mode, Cache* cache);
  Matrix Backward(const Matrix& dy, const Cache& cache);

  Param gamma;  // 1 x C
  Param beta;   // 1 x C
  Matrix running_mean;  // 1 x C
  Matrix running_var;   // 1 x C
  double momentum = 0.1;
  double eps = 1e-5;
};

// Layer normalisation over columns, per row.
class LayerNorm {
 public:
  struct Cache {
    Matrix normalized;
    Eigen::VectorXd inv_std;
  };

  LayerNorm() = default;
  LayerNorm(std::size_t dim, double eps);

  Matrix Forward(const Matrix& x, Cache* cache) const;
  Matrix Backward(const Matrix& dy, const Cache& cache);

  Param gamma;
  Param beta;
  double eps = 1e-5;
};

// Inverted dropout. A rate of 0 is the identity and draws nothing.
struct DropoutMask {
  Matrix scale;  // empty when inactive
  Matrix Apply(const Matrix& x) const;
};
DropoutMask MakeDropoutMask(Eigen::Index rows, Eigen::Index cols, double rate, Mode mode, Rng* rng);

class MultiHeadSelfAttention {
 public:
  struct Cache {
    Matrix x;
    Matrix q, k, v;
    std::vector<Matrix> attention;  // per head, T x T (rows are queries)
    Matrix context;                 // concatenated head outputs, T x d_model
  };

  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(std::size_t d_model, std::size_t n_heads, Rng& rng);

  // `key_mask` is empty (all valid) or holds one flag per row; keys flagged
  // false receive zero attention weight.
  Matrix Forward(const Matrix& x, std::span<const bool> key_mask, Cache* cache) const;
  Matrix Backward(const Matrix& dy, const Cache& cache);

  std::size_t n_heads = 1;
  Linear query, key, value, output;
};

// Post-norm encoder layer: h = LN(x + MHA(x)); y = LN(h + FFN(h)).
class TransformerEncoderLayer {
 public:
  struct Cache {
    MultiHeadSelfAttention::Cache attention;
    DropoutMask attention_dropout;
    LayerNorm::Cache norm1;
    Matrix h1;
    Matrix ff_pre, ff_post;
    DropoutMask ff_dropout;
    LayerNorm::Cache norm2;
  };

  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(std::size_t d_model, std::size_t n_heads, std::size_t d_ff,
                          double ln_eps, Rng& rng);

  Matrix Forward(const Matrix& x, std::span<const bool> key_mask, Mode mode, double dropout,
                 Rng* dropout_rng, Cache* cache) const;
  Matrix Backward(const Matrix& dy, const Cache& cache);

  MultiHeadSelfAttention attention;
  LayerNorm norm1;
  Linear ff1, ff2;
  LayerNorm norm2;
};

// Half-open row range [begin, end).
struct RowRange {
  Eigen::Index begin = 0;
  Eigen::Index end = 0;
};

// Row g of the result is concat(mean, std) over rows of `x` in ranges[g],
// with the population standard deviation sqrt(var + eps).
Matrix MeanStdPool(const Matrix& x, std::span<const RowRange> ranges, double eps);
Matrix MeanStdPoolBackward(const Matrix& x, std::span<const RowRange> ranges,
                           const Matrix& pooled, const Matrix& dy);

}  // namespace pholid::nn

#endif  // PHOLID_LAYERS_HPP_
