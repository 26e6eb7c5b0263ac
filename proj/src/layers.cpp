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

#include "pholid/layers.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>

#include "pholid/error.hpp"

namespace pholid::nn {
namespace {

void InitUniform(Matrix* m, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = dist(rng);
}

void CheckCols(const Matrix& x, std::size_t expected, std::string_view what) {
  if (static_cast<std::size_t>(x.cols()) != expected) {
    Fail(ErrorCategory::kShape,
         fmt::format("{}: expected {} columns, got {}", what, expected, x.cols()));
  }
}

}  // namespace

std::string_view ActivationName(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

Activation ParseActivation(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  Fail(ErrorCategory::kConfig, fmt::format("unknown activation '{}'", name));
}

Matrix Activate(const Matrix& pre, Activation a) {
  if (a == Activation::kRelu) return pre.cwiseMax(0.0);
  return pre.array().tanh().matrix();
}

Matrix ActivateBackward(const Matrix& pre, const Matrix& post, const Matrix& dy, Activation a) {
  if (a == Activation::kRelu) return (pre.array() > 0.0).select(dy, 0.0);
  return (dy.array() * (1.0 - post.array().square())).matrix();
}

Linear::Linear(std::size_t in_dim, std::size_t out_dim, Rng& rng)
    : weight(static_cast<Eigen::Index>(out_dim), static_cast<Eigen::Index>(in_dim)),
      bias(1, static_cast<Eigen::Index>(out_dim)) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  InitUniform(&weight.value, bound, rng);
  InitUniform(&bias.value, bound, rng);
}

Matrix Linear::Forward(const Matrix& x) const {
  CheckCols(x, in_dim(), "linear");
  Matrix y = x * weight.value.transpose();
  y.rowwise() += bias.value.row(0);
  return y;
}

Matrix Linear::Backward(const Matrix& x, const Matrix& dy) {
  weight.grad.noalias() += dy.transpose() * x;
  bias.grad.row(0) += dy.colwise().sum();
  return dy * weight.value;
}

BatchNorm::BatchNorm(std::size_t channels, double momentum_in, double eps_in)
    : gamma(1, static_cast<Eigen::Index>(channels)),
      beta(1, static_cast<Eigen::Index>(channels)),
      running_mean(Matrix::Zero(1, static_cast<Eigen::Index>(channels))),
      running_var(Matrix::Ones(1, static_cast<Eigen::Index>(channels))),
      momentum(momentum_in),
      eps(eps_in) {
  gamma.value.setOnes();
}

Matrix BatchNorm::Forward(const Matrix& x, Mode mode, Cache* cache) {
  CheckCols(x, static_cast<std::size_t>(gamma.value.cols()), "batch norm");
  const Eigen::Index n = x.rows();
  if (n == 0) Fail(ErrorCategory::kShape, "batch norm on zero rows");
  RowVector mean, var;
  if (mode == Mode::kTrain) {
    mean = x.colwise().mean();
    var = (x.rowwise() - mean).array().square().colwise().mean().matrix();
    const double unbiased = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
    running_mean.row(0) = (1.0 - momentum) * running_mean.row(0) + momentum * mean;
    running_var.row(0) = (1.0 - momentum) * running_var.row(0) + momentum * unbiased * var;
  } else {
    mean = running_mean.row(0);
    var = running_var.row(0);
  }
  RowVector inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix normalized = ((x.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
  Matrix y = (normalized.array().rowwise() * gamma.value.row(0).array()).matrix();
  y.rowwise() += beta.value.row(0);
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return y;
}

Matrix BatchNorm::Backward(const Matrix& dy, const Cache& cache) {
  const auto& xhat = cache.normalized;
  gamma.grad.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  beta.grad.row(0) += dy.colwise().sum();
  const Matrix dxhat = (dy.array().rowwise() * gamma.value.row(0).array()).matrix();
  if (cache.mode == Mode::kEval) {
    return (dxhat.array().rowwise() * cache.inv_std.array()).matrix();
  }
  const double n = static_cast<double>(dy.rows());
  const RowVector sum_dxhat = dxhat.colwise().sum();
  const RowVector sum_dxhat_xhat = (dxhat.array() * xhat.array()).colwise().sum().matrix();
  Matrix dx = (n * dxhat.array()).matrix();
  dx.rowwise() -= sum_dxhat;
  dx -= (xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
  return ((dx.array().rowwise() * cache.inv_std.array()) / n).matrix();
}

LayerNorm::LayerNorm(std::size_t dim, double eps_in)
    : gamma(1, static_cast<Eigen::Index>(dim)), beta(1, static_cast<Eigen::Index>(dim)), eps(eps_in) {
  gamma.value.setOnes();
}

Matrix LayerNorm::Forward(const Matrix& x, Cache* cache) const {
  CheckCols(x, static_cast<std::size_t>(gamma.value.cols()), "layer norm");
  const Eigen::VectorXd mean = x.rowwise().mean();
  Matrix centered = x.colwise() - mean;
  const Eigen::VectorXd var = centered.array().square().rowwise().mean();
  Eigen::VectorXd inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix normalized = (centered.array().colwise() * inv_std.array()).matrix();
  Matrix y = (normalized.array().rowwise() * gamma.value.row(0).array()).matrix();
  y.rowwise() += beta.value.row(0);
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix LayerNorm::Backward(const Matrix& dy, const Cache& cache) {
  const auto& xhat = cache.normalized;
  gamma.grad.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  beta.grad.row(0) += dy.colwise().sum();
  const Matrix dxhat = (dy.array().rowwise() * gamma.value.row(0).array()).matrix();
  const double d = static_cast<double>(dy.cols());
  const Eigen::VectorXd sum_dxhat = dxhat.rowwise().sum();
  const Eigen::VectorXd sum_dxhat_xhat = (dxhat.array() * xhat.array()).rowwise().sum();
  Matrix dx = (d * dxhat.array()).matrix();
  dx.colwise() -= sum_dxhat;
  dx -= (xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
  return ((dx.array().colwise() * cache.inv_std.array()) / d).matrix();
}

Matrix DropoutMask::Apply(const Matrix& x) const {
  if (scale.size() == 0) return x;
  return x.cwiseProduct(scale);
}

DropoutMask MakeDropoutMask(Eigen::Index rows, Eigen::Index cols, double rate, Mode mode, Rng* rng) {
  DropoutMask mask;
  if (mode != Mode::kTrain || rate <= 0.0) return mask;
  if (rate >= 1.0) Fail(ErrorCategory::kConfig, "dropout rate must be < 1");
  if (!rng) Fail(ErrorCategory::kState, "dropout in training mode needs a generator");
  std::bernoulli_distribution keep(1.0 - rate);
  mask.scale.resize(rows, cols);
  const double s = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.scale.size(); ++i) mask.scale.data()[i] = keep(*rng) ? s : 0.0;
  return mask;
}

MultiHeadSelfAttention::MultiHeadSelfAttention(std::size_t d_model, std::size_t heads, Rng& rng)
    : n_heads(heads),
      query(d_model, d_model, rng),
      key(d_model, d_model, rng),
      value(d_model, d_model, rng),
      output(d_model, d_model, rng) {
  if (heads == 0 || d_model % heads != 0) {
    Fail(ErrorCategory::kConfig,
         fmt::format("d_model {} not divisible by {} heads", d_model, heads));
  }
}

Matrix MultiHeadSelfAttention::Forward(const Matrix& x, std::span<const bool> key_mask,
                                       Cache* cache) const {
  const Eigen::Index t = x.rows();
  if (t == 0) Fail(ErrorCategory::kShape, "self-attention over an empty sequence");
  if (!key_mask.empty() && static_cast<Eigen::Index>(key_mask.size()) != t) {
    Fail(ErrorCategory::kShape, "attention mask length differs from sequence length");
  }
  bool any_valid = key_mask.empty();
  for (bool b : key_mask) any_valid |= b;
  if (!any_valid) Fail(ErrorCategory::kShape, "attention mask excludes every position");

  Matrix q = query.Forward(x);
  Matrix k = key.Forward(x);
  Matrix v = value.Forward(x);
  const auto d_model = static_cast<Eigen::Index>(query.out_dim());
  const Eigen::Index dh = d_model / static_cast<Eigen::Index>(n_heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix context(t, d_model);
  std::vector<Matrix> attention(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const Eigen::Index off = static_cast<Eigen::Index>(h) * dh;
    Matrix scores = (q.middleCols(off, dh) * k.middleCols(off, dh).transpose()) * scale;
    for (Eigen::Index j = 0; j < t; ++j) {
      if (!key_mask.empty() && !key_mask[static_cast<std::size_t>(j)]) {
        scores.col(j).setConstant(-std::numeric_limits<double>::infinity());
      }
    }
    const Eigen::VectorXd row_max = scores.rowwise().maxCoeff();
    Matrix a = (scores.colwise() - row_max).array().exp().matrix();
    const Eigen::VectorXd denom = a.rowwise().sum();
    a = (a.array().colwise() / denom.array()).matrix();
    context.middleCols(off, dh) = a * v.middleCols(off, dh);
    attention[h] = std::move(a);
  }
  Matrix y = output.Forward(context);
  if (cache) {
    cache->x = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->attention = std::move(attention);
    cache->context = std::move(context);
  }
  return y;
}

Matrix MultiHeadSelfAttention::Backward(const Matrix& dy, const Cache& cache) {
  const Matrix dcontext = output.Backward(cache.context, dy);
  const Eigen::Index t = cache.x.rows();
  const auto d_model = static_cast<Eigen::Index>(query.out_dim());
  const Eigen::Index dh = d_model / static_cast<Eigen::Index>(n_heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix dq(t, d_model), dk(t, d_model), dv(t, d_model);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const Eigen::Index off = static_cast<Eigen::Index>(h) * dh;
    const Matrix& a = cache.attention[h];
    const auto dctx_h = dcontext.middleCols(off, dh);
    const Matrix da = dctx_h * cache.v.middleCols(off, dh).transpose();
    dv.middleCols(off, dh) = a.transpose() * dctx_h;
    const Eigen::VectorXd row_dot = (da.array() * a.array()).rowwise().sum();
    const Matrix ds = ((da.colwise() - row_dot).array() * a.array() * scale).matrix();
    dq.middleCols(off, dh) = ds * cache.k.middleCols(off, dh);
    dk.middleCols(off, dh) = ds.transpose() * cache.q.middleCols(off, dh);
  }
  Matrix dx = query.Backward(cache.x, dq);
  dx += key.Backward(cache.x, dk);
  dx += value.Backward(cache.x, dv);
  return dx;
}

TransformerEncoderLayer::TransformerEncoderLayer(std::size_t d_model, std::size_t n_heads,
                                                 std::size_t d_ff, double ln_eps, Rng& rng)
    : attention(d_model, n_heads, rng),
      norm1(d_model, ln_eps),
      ff1(d_model, d_ff, rng),
      ff2(d_ff, d_model, rng),
      norm2(d_model, ln_eps) {}

Matrix TransformerEncoderLayer::Forward(const Matrix& x, std::span<const bool> key_mask, Mode mode,
                                        double dropout, Rng* dropout_rng, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  Matrix a = attention.Forward(x, key_mask, &c.attention);
  c.attention_dropout = MakeDropoutMask(a.rows(), a.cols(), dropout, mode, dropout_rng);
  c.h1 = norm1.Forward(x + c.attention_dropout.Apply(a), &c.norm1);
  c.ff_pre = ff1.Forward(c.h1);
  c.ff_post = c.ff_pre.cwiseMax(0.0);
  Matrix f = ff2.Forward(c.ff_post);
  c.ff_dropout = MakeDropoutMask(f.rows(), f.cols(), dropout, mode, dropout_rng);
  return norm2.Forward(c.h1 + c.ff_dropout.Apply(f), &c.norm2);
}

Matrix TransformerEncoderLayer::Backward(const Matrix& dy, const Cache& c) {
  const Matrix dsum2 = norm2.Backward(dy, c.norm2);
  const Matrix dpost = ff2.Backward(c.ff_post, c.ff_dropout.Apply(dsum2));
  const Matrix dpre = (c.ff_pre.array() > 0.0).select(dpost, 0.0);
  Matrix dh1 = dsum2 + ff1.Backward(c.h1, dpre);
  const Matrix dsum1 = norm1.Backward(dh1, c.norm1);
  return dsum1 + attention.Backward(c.attention_dropout.Apply(dsum1), c.attention);
}

Matrix MeanStdPool(const Matrix& x, std::span<const RowRange> ranges, double eps) {
  const Eigen::Index c = x.cols();
  Matrix out(static_cast<Eigen::Index>(ranges.size()), 2 * c);
  for (std::size_t g = 0; g < ranges.size(); ++g) {
    const auto& r = ranges[g];
    if (r.begin < 0 || r.end > x.rows() || r.end <= r.begin) {
      Fail(ErrorCategory::kShape, fmt::format("pooling range [{}, {}) invalid for {} rows",
                                              r.begin, r.end, x.rows()));
    }
    const auto block = x.middleRows(r.begin, r.end - r.begin);
    const RowVector mean = block.colwise().mean();
    const RowVector var = (block.rowwise() - mean).array().square().colwise().mean().matrix();
    const auto gi = static_cast<Eigen::Index>(g);
    out.row(gi).head(c) = mean;
    out.row(gi).tail(c) = (var.array() + eps).sqrt().matrix();
  }
  return out;
}

Matrix MeanStdPoolBackward(const Matrix& x, std::span<const RowRange> ranges, const Matrix& pooled,
                           const Matrix& dy) {
  const Eigen::Index c = x.cols();
  Matrix dx = Matrix::Zero(x.rows(), c);
  for (std::size_t g = 0; g < ranges.size(); ++g) {
    const auto& r = ranges[g];
    const auto gi = static_cast<Eigen::Index>(g);
    const Eigen::Index n = r.end - r.begin;
    const RowVector mean = pooled.row(gi).head(c);
    const RowVector std = pooled.row(gi).tail(c);
    const RowVector dmean = dy.row(gi).head(c) / static_cast<double>(n);
    const RowVector dstd_scaled =
        (dy.row(gi).tail(c).array() / (std.array() * static_cast<double>(n))).matrix();
    auto block = dx.middleRows(r.begin, n);
    block = ((x.middleRows(r.begin, n).rowwise() - mean).array().rowwise() *
             dstd_scaled.array()).matrix();
    block.rowwise() += dmean;
  }
  return dx;
}

}  // namespace pholid::nn
