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

#include "pholid/model.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "pholid/error.hpp"

namespace pholid {

using nn::Mode;
using nn::RowRange;

void ModelConfig::Validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) Fail(ErrorCategory::kConfig, fmt::format("model config: {} must be >= 1", name));
  };
  positive(input_dim, "input_dim");
  positive(segment_frames, "segment_frames");
  positive(seg_dim, "seg_dim");
  positive(embed_dim, "embed_dim");
  positive(n_heads, "n_heads");
  positive(d_model, "d_model");
  positive(d_ff, "d_ff");
  if (n_classes < 2) Fail(ErrorCategory::kConfig, "model config: n_classes must be >= 2");
  if (cnn_channels.empty()) Fail(ErrorCategory::kConfig, "model config: need >= 1 CNN layer");
  for (auto c : cnn_channels) positive(c, "cnn_channels");
  for (auto c : classifier_hidden) positive(c, "classifier_hidden");
  if (cnn_kernel != 1) {
    Fail(ErrorCategory::kConfig,
         fmt::format("model config: cnn_kernel must be 1 (frame-local encoder), got {}", cnn_kernel));
  }
  if (d_model % n_heads != 0) {
    Fail(ErrorCategory::kConfig,
         fmt::format("model config: d_model {} not divisible by n_heads {}", d_model, n_heads));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    Fail(ErrorCategory::kConfig, "model config: dropout must lie in [0, 1)");
  }
  if (!(stats_eps > 0.0)) Fail(ErrorCategory::kConfig, "model config: stats_eps must be > 0");
}

ModelConfig ModelConfig::Scaled(std::size_t divisor, std::size_t input_dim, std::size_t n_classes) {
  ModelConfig c;
  auto div = [divisor](std::size_t v) { return std::max<std::size_t>(1, v / divisor); };
  c.input_dim = input_dim;
  c.n_classes = n_classes;
  for (auto& ch : c.cnn_channels) ch = div(ch);
  c.seg_dim = div(c.seg_dim);
  c.embed_dim = div(c.embed_dim);
  c.d_model = div(c.d_model);
  c.d_ff = div(c.d_ff);
  for (auto& h : c.classifier_hidden) h = div(h);
  if (c.d_model % c.n_heads != 0) c.n_heads = 1;
  return c;
}

nlohmann::json ToJson(const ModelConfig& c) {
  return {
      {"input_dim", c.input_dim},
      {"segment_frames", c.segment_frames},
      {"cnn_channels", c.cnn_channels},
      {"cnn_kernel", c.cnn_kernel},
      {"seg_dim", c.seg_dim},
      {"embed_dim", c.embed_dim},
      {"n_transformer_layers", c.n_transformer_layers},
      {"n_heads", c.n_heads},
      {"d_model", c.d_model},
      {"d_ff", c.d_ff},
      {"classifier_hidden", c.classifier_hidden},
      {"n_classes", c.n_classes},
      {"activation", std::string(nn::ActivationName(c.activation))},
      {"batch_norm", c.batch_norm},
      {"bn_momentum", c.bn_momentum},
      {"bn_eps", c.bn_eps},
      {"ln_eps", c.ln_eps},
      {"stats_eps", c.stats_eps},
      {"dropout", c.dropout},
  };
}

ModelConfig ModelConfigFromJson(const nlohmann::json& j) {
  ModelConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      if (k == "input_dim") c.input_dim = it->get<std::size_t>();
      else if (k == "segment_frames") c.segment_frames = it->get<std::size_t>();
      else if (k == "cnn_channels") c.cnn_channels = it->get<std::vector<std::size_t>>();
      else if (k == "cnn_kernel") c.cnn_kernel = it->get<std::size_t>();
      else if (k == "seg_dim") c.seg_dim = it->get<std::size_t>();
      else if (k == "embed_dim") c.embed_dim = it->get<std::size_t>();
      else if (k == "n_transformer_layers") c.n_transformer_layers = it->get<std::size_t>();
      else if (k == "n_heads") c.n_heads = it->get<std::size_t>();
      else if (k == "d_model") c.d_model = it->get<std::size_t>();
      else if (k == "d_ff") c.d_ff = it->get<std::size_t>();
      else if (k == "classifier_hidden") c.classifier_hidden = it->get<std::vector<std::size_t>>();
      else if (k == "n_classes") c.n_classes = it->get<std::size_t>();
      else if (k == "activation") c.activation = nn::ParseActivation(it->get<std::string>());
      else if (k == "batch_norm") c.batch_norm = it->get<bool>();
      else if (k == "bn_momentum") c.bn_momentum = it->get<double>();
      else if (k == "bn_eps") c.bn_eps = it->get<double>();
      else if (k == "ln_eps") c.ln_eps = it->get<double>();
      else if (k == "stats_eps") c.stats_eps = it->get<double>();
      else if (k == "dropout") c.dropout = it->get<double>();
      else Fail(ErrorCategory::kConfig, fmt::format("model config: unknown key '{}'", k));
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCategory::kConfig, fmt::format("model config: {}", e.what()));
  }
  return c;
}

std::vector<RowRange> SegmentLayout::Ranges() const {
  std::vector<RowRange> out(n_segments);
  for (std::size_t t = 0; t < n_segments; ++t) {
    const auto begin = static_cast<Eigen::Index>(t * segment_frames);
    const auto end = static_cast<Eigen::Index>(std::min((t + 1) * segment_frames, n_valid));
    out[t] = {begin, end};
  }
  return out;
}

PhoLidModel::PhoLidModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.Validate();
  Rng rng = MakeRng(seed, 0x400de1);
  std::size_t in = config_.input_dim;
  for (auto ch : config_.cnn_channels) {
    conv.emplace_back(in, ch, rng);
    if (config_.batch_norm) conv_norm.emplace_back(ch, config_.bn_momentum, config_.bn_eps);
    in = ch;
  }
  const std::size_t h = config_.encoder_dim();
  seg_head = nn::Linear(h, config_.seg_dim, rng);
  phonotactic = nn::Linear(2 * h, config_.embed_dim, rng);
  embed_norm = nn::LayerNorm(config_.embed_dim, config_.ln_eps);
  lift = nn::Linear(config_.embed_dim, config_.d_model, rng);
  for (std::size_t l = 0; l < config_.n_transformer_layers; ++l) {
    encoder_layers.emplace_back(config_.d_model, config_.n_heads, config_.d_ff, config_.ln_eps, rng);
  }
  in = 2 * config_.d_model;
  for (auto hid : config_.classifier_hidden) {
    classifier.emplace_back(in, hid, rng);
    in = hid;
  }
  classifier.emplace_back(in, config_.n_classes, rng);
}

FrameEncodings PhoLidModel::CnnForward(const Matrix& frames, Mode mode, CnnCache* cache) {
  if (static_cast<std::size_t>(frames.cols()) != config_.input_dim) {
    Fail(ErrorCategory::kShape, fmt::format("encoder expects F={}, got {}", config_.input_dim,
                                            frames.cols()));
  }
  if (frames.rows() == 0) Fail(ErrorCategory::kShape, "encoder input has no frames");
  if (cache) *cache = CnnCache{};
  Matrix x = frames;
  for (std::size_t l = 0; l < conv.size(); ++l) {
    Matrix y = conv[l].Forward(x);
    if (config_.batch_norm) {
      nn::BatchNorm::Cache bn;
      y = conv_norm[l].Forward(y, mode, cache ? &bn : nullptr);
      if (cache) cache->norms.push_back(std::move(bn));
    }
    Matrix a = nn::Activate(y, config_.activation);
    if (cache) {
      cache->inputs.push_back(std::move(x));
      cache->pre_activation.push_back(std::move(y));
      cache->post_activation.push_back(a);
    }
    x = std::move(a);
  }
  return {std::move(x)};
}

Matrix PhoLidModel::CnnBackward(const Matrix& d_encodings, const CnnCache& cache) {
  Matrix d = d_encodings;
  for (std::size_t l = conv.size(); l-- > 0;) {
    d = nn::ActivateBackward(cache.pre_activation[l], cache.post_activation[l], d, config_.activation);
    if (config_.batch_norm) d = conv_norm[l].Backward(d, cache.norms[l]);
    d = conv[l].Backward(cache.inputs[l], d);
  }
  return d;
}

SegmentationFrameEmbeddings PhoLidModel::SegHeadForward(const FrameEncodings& h) const {
  return {seg_head.Forward(h.values)};
}

Matrix PhoLidModel::SegHeadBackward(const FrameEncodings& h, const Matrix& d_embeddings) {
  return seg_head.Backward(h.values, d_embeddings);
}

namespace {

void CheckLayout(const FrameEncodings& h, const SegmentLayout& layout) {
  const std::size_t k = layout.segment_frames;
  const std::size_t t = layout.n_segments;
  if (t == 0 || k == 0 || layout.n_valid <= (t - 1) * k || layout.n_valid > t * k) {
    Fail(ErrorCategory::kShape, fmt::format("invalid segment layout T={} K={} valid={}", t, k,
                                            layout.n_valid));
  }
  if (static_cast<std::size_t>(h.values.rows()) != layout.n_valid) {
    Fail(ErrorCategory::kShape,
         fmt::format("segment pooling: {} frame rows, layout expects {}", h.values.rows(),
                     layout.n_valid));
  }
}

}  // namespace

Matrix PhoLidModel::SegmentStatsPool(const FrameEncodings& h, const SegmentLayout& layout,
                                     double eps) {
  CheckLayout(h, layout);
  const auto ranges = layout.Ranges();
  return nn::MeanStdPool(h.values, ranges, eps);
}

Matrix PhoLidModel::SegmentStatsPoolBackward(const FrameEncodings& h, const SegmentLayout& layout,
                                             const Matrix& stats, const Matrix& d_stats) {
  const auto ranges = layout.Ranges();
  return nn::MeanStdPoolBackward(h.values, ranges, stats, d_stats);
}

PhonotacticEmbeddingSequence PhoLidModel::PhonotacticProject(const Matrix& stats) const {
  return {phonotactic.Forward(stats)};
}

Matrix PhoLidModel::PhonotacticProjectBackward(const Matrix& stats, const Matrix& d_embeddings) {
  return phonotactic.Backward(stats, d_embeddings);
}

Matrix PhoLidModel::TransformerForward(const PhonotacticEmbeddingSequence& e,
                                       std::span<const bool> mask, const ForwardContext& ctx,
                                       TransformerCache* cache) const {
  if (e.values.rows() == 0) Fail(ErrorCategory::kShape, "transformer over zero segments");
  TransformerCache local;
  TransformerCache& c = cache ? *cache : local;
  c.mask.assign(mask.begin(), mask.end());
  c.layer_inputs.clear();
  c.layers.assign(encoder_layers.size(), {});
  c.normed = embed_norm.Forward(e.values, &c.input_norm);
  Matrix x = lift.Forward(c.normed);
  for (std::size_t l = 0; l < encoder_layers.size(); ++l) {
    c.layer_inputs.push_back(x);
    x = encoder_layers[l].Forward(x, mask, ctx.mode, config_.dropout, ctx.dropout_rng, &c.layers[l]);
  }
  return x;
}

Matrix PhoLidModel::TransformerBackward(const Matrix& d_out, const TransformerCache& c) {
  Matrix d = d_out;
  for (std::size_t l = encoder_layers.size(); l-- > 0;) d = encoder_layers[l].Backward(d, c.layers[l]);
  d = lift.Backward(c.normed, d);
  return embed_norm.Backward(d, c.input_norm);
}

ScoreVector PhoLidModel::UtterancePoolClassify(const Matrix& u, std::span<const bool> mask,
                                               ClassifierCache* cache) const {
  if (u.rows() == 0) Fail(ErrorCategory::kShape, "utterance pooling over zero positions");
  if (static_cast<std::size_t>(u.cols()) != config_.d_model) {
    Fail(ErrorCategory::kShape, fmt::format("classifier expects {} columns, got {}",
                                            config_.d_model, u.cols()));
  }
  if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != u.rows()) {
    Fail(ErrorCategory::kShape, "pooling mask length differs from sequence length");
  }
  ClassifierCache local;
  ClassifierCache& c = cache ? *cache : local;
  c.n_positions = u.rows();
  c.rows.clear();
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    if (mask.empty() || mask[static_cast<std::size_t>(r)]) c.rows.push_back(r);
  }
  if (c.rows.empty()) Fail(ErrorCategory::kShape, "pooling mask excludes every position");
  c.gathered.resize(static_cast<Eigen::Index>(c.rows.size()), u.cols());
  for (std::size_t i = 0; i < c.rows.size(); ++i) c.gathered.row(static_cast<Eigen::Index>(i)) = u.row(c.rows[i]);
  const RowRange all{0, c.gathered.rows()};
  c.pooled = nn::MeanStdPool(c.gathered, std::span(&all, 1), config_.stats_eps);
  c.inputs.clear();
  c.pre_activation.clear();
  Matrix x = c.pooled;
  for (std::size_t l = 0; l < classifier.size(); ++l) {
    Matrix y = classifier[l].Forward(x);
    c.inputs.push_back(std::move(x));
    if (l + 1 == classifier.size()) return {y.row(0)};
    c.pre_activation.push_back(y);
    x = nn::Activate(y, config_.activation);
  }
  return {x.row(0)};
}

Matrix PhoLidModel::UtterancePoolClassifyBackward(const RowVector& d_scores,
                                                  const ClassifierCache& c) {
  Matrix d = d_scores;
  for (std::size_t l = classifier.size(); l-- > 0;) {
    if (l + 1 != classifier.size()) {
      const Matrix post = nn::Activate(c.pre_activation[l], config_.activation);
      d = nn::ActivateBackward(c.pre_activation[l], post, d, config_.activation);
    }
    d = classifier[l].Backward(c.inputs[l], d);
  }
  const RowRange all{0, c.gathered.rows()};
  const Matrix d_gathered = nn::MeanStdPoolBackward(c.gathered, std::span(&all, 1), c.pooled, d);
  Matrix du = Matrix::Zero(c.n_positions, d_gathered.cols());
  for (std::size_t i = 0; i < c.rows.size(); ++i) du.row(c.rows[i]) = d_gathered.row(static_cast<Eigen::Index>(i));
  return du;
}

PhoLidModel::BatchOutput PhoLidModel::Forward(std::span<const SegmentedUtterance> batch, Heads heads,
                                              const ForwardContext& ctx, Tape* tape) {
  std::vector<const SegmentedUtterance*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& u : batch) ptrs.push_back(&u);
  return Forward(std::span<const SegmentedUtterance* const>(ptrs), heads, ctx, tape);
}

PhoLidModel::BatchOutput PhoLidModel::Forward(std::span<const SegmentedUtterance* const> batch,
                                              Heads heads, const ForwardContext& ctx, Tape* tape) {
  if (batch.empty()) Fail(ErrorCategory::kShape, "empty batch");
  Tape local;
  Tape& t = tape ? *tape : local;
  t.heads = heads;
  t.utterances.assign(batch.size(), {});

  Eigen::Index total = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& utt = *batch[b];
    if (utt.segment_frames != config_.segment_frames) {
      Fail(ErrorCategory::kShape, fmt::format("utterance '{}' has K={}, model expects {}",
                                              utt.utterance_id, utt.segment_frames,
                                              config_.segment_frames));
    }
    if (utt.dim() != config_.input_dim) {
      Fail(ErrorCategory::kShape, fmt::format("utterance '{}' has F={}, model expects {}",
                                              utt.utterance_id, utt.dim(), config_.input_dim));
    }
    t.utterances[b].layout = SegmentLayout::Of(utt);
    t.utterances[b].row_offset = total;
    total += static_cast<Eigen::Index>(utt.n_valid);
  }
  Matrix stacked(total, static_cast<Eigen::Index>(config_.input_dim));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    stacked.middleRows(t.utterances[b].row_offset, static_cast<Eigen::Index>(batch[b]->n_valid)) =
        batch[b]->valid_frames();
  }
  t.encodings = CnnForward(stacked, ctx.mode, &t.cnn);

  BatchOutput out;
  const bool want_seg = heads != Heads::kLid;
  const bool want_lid = heads != Heads::kSegmentation;
  if (want_seg) {
    const Matrix z = seg_head.Forward(t.encodings.values);
    for (const auto& ut : t.utterances) {
      out.embeddings.push_back(
          {z.middleRows(ut.row_offset, static_cast<Eigen::Index>(ut.layout.n_valid))});
    }
  }
  if (want_lid) {
    out.logits.resize(static_cast<Eigen::Index>(batch.size()),
                      static_cast<Eigen::Index>(config_.n_classes));
    for (std::size_t b = 0; b < batch.size(); ++b) {
      auto& ut = t.utterances[b];
      const FrameEncodings h{t.encodings.values.middleRows(
          ut.row_offset, static_cast<Eigen::Index>(ut.layout.n_valid))};
      ut.stats = SegmentStatsPool(h, ut.layout, config_.stats_eps);
      ut.embeddings = PhonotacticProject(ut.stats);
      const Matrix u = TransformerForward(ut.embeddings, {}, ctx, &ut.transformer);
      out.logits.row(static_cast<Eigen::Index>(b)) = UtterancePoolClassify(u, {}, &ut.classifier).values;
    }
  }
  return out;
}

void PhoLidModel::Backward(const Tape& t, const Matrix* d_logits,
                           const std::vector<Matrix>* d_embeddings) {
  Matrix d_enc = Matrix::Zero(t.encodings.values.rows(), t.encodings.values.cols());
  bool any = false;
  if (d_logits && t.heads != Heads::kSegmentation) {
    any = true;
    for (std::size_t b = 0; b < t.utterances.size(); ++b) {
      const auto& ut = t.utterances[b];
      const auto n = static_cast<Eigen::Index>(ut.layout.n_valid);
      Matrix du = UtterancePoolClassifyBackward(d_logits->row(static_cast<Eigen::Index>(b)),
                                                ut.classifier);
      const Matrix de = TransformerBackward(du, ut.transformer);
      const Matrix d_stats = PhonotacticProjectBackward(ut.stats, de);
      const FrameEncodings h{t.encodings.values.middleRows(ut.row_offset, n)};
      d_enc.middleRows(ut.row_offset, n) += SegmentStatsPoolBackward(h, ut.layout, ut.stats, d_stats);
    }
  }
  if (d_embeddings && t.heads != Heads::kLid) {
    any = true;
    Matrix dz(t.encodings.values.rows(), static_cast<Eigen::Index>(config_.seg_dim));
    for (std::size_t b = 0; b < t.utterances.size(); ++b) {
      const auto& ut = t.utterances[b];
      dz.middleRows(ut.row_offset, static_cast<Eigen::Index>(ut.layout.n_valid)) = (*d_embeddings)[b];
    }
    d_enc += seg_head.Backward(t.encodings.values, dz);
  }
  if (any) CnnBackward(d_enc, t.cnn);
}

void PhoLidModel::ZeroGrad() {
  ForEachParam([](const std::string&, ParamGroup, nn::Param& p) { p.ZeroGrad(); });
}

std::size_t PhoLidModel::ParameterCount() const {
  std::size_t n = 0;
  ForEachParam([&n](const std::string&, ParamGroup, const nn::Param& p) {
    n += static_cast<std::size_t>(p.value.size());
  });
  return n;
}

}  // namespace pholid
