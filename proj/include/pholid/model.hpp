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

#ifndef PHOLID_MODEL_HPP_
#define PHOLID_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pholid/data.hpp"
#include "pholid/layers.hpp"
#include "pholid/tensor.hpp"

namespace pholid {

struct ModelConfig {
  std::size_t input_dim = 1024;      // F
  std::size_t segment_frames = 20;   // K
  std::vector<std::size_t> cnn_channels{512, 512, 512};
  std::size_t cnn_kernel = 1;
  std::size_t seg_dim = 64;          // G
  std::size_t embed_dim = 64;        // D
  std::size_t n_transformer_layers = 2;
  std::size_t n_heads = 8;
  std::size_t d_model = 512;
  std::size_t d_ff = 2048;
  std::vector<std::size_t> classifier_hidden{512, 512};
  std::size_t n_classes = 10;        // C
  nn::Activation activation = nn::Activation::kRelu;
  bool batch_norm = true;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  double ln_eps = 1e-5;
  double stats_eps = 1e-8;
  double dropout = 0.0;

  void Validate() const;
  std::size_t encoder_dim() const { return cnn_channels.back(); }

  // The default architecture with every width divided by `divisor`
  // (heads and depth unchanged).
  static ModelConfig Scaled(std::size_t divisor, std::size_t input_dim, std::size_t n_classes);

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json ToJson(const ModelConfig& cfg);
ModelConfig ModelConfigFromJson(const nlohmann::json& j);

// Which optimisation objective a parameter tensor belongs to.
enum class ParamGroup {
  kEncoder,           // shared CNN
  kSegmentationHead,  // NCE branch only
  kLidBranch,         // everything after segment pooling
};

struct FrameEncodings {
  Matrix values;  // n_frames x H
};

struct SegmentationFrameEmbeddings {
  Matrix values;  // n_frames x G
};

struct PhonotacticEmbeddingSequence {
  Matrix values;  // T x D
};

struct ScoreVector {
  RowVector values;  // C unnormalised logits
};

struct SegmentLayout {
  std::size_t n_segments = 0;
  std::size_t segment_frames = 0;
  std::size_t n_valid = 0;

  static SegmentLayout Of(const SegmentedUtterance& utt) {
    return {utt.n_segments, utt.segment_frames, utt.n_valid};
  }
  // Valid frame rows of each segment. Only the last one may be short.
  std::vector<nn::RowRange> Ranges() const;
};

enum class Heads { kBoth, kSegmentation, kLid };

struct ForwardContext {
  nn::Mode mode = nn::Mode::kEval;
  Rng* dropout_rng = nullptr;
};

class PhoLidModel {
 public:
  struct CnnCache {
    std::vector<Matrix> inputs;
    std::vector<Matrix> pre_activation;
    std::vector<Matrix> post_activation;
    std::vector<nn::BatchNorm::Cache> norms;
  };
  struct TransformerCache {
    nn::LayerNorm::Cache input_norm;
    Matrix normed;
    std::vector<Matrix> layer_inputs;
    std::vector<nn::TransformerEncoderLayer::Cache> layers;
    std::vector<bool> mask;
  };
  struct ClassifierCache {
    Eigen::Index n_positions = 0;
    std::vector<Eigen::Index> rows;  // valid positions pooled
    Matrix gathered;
    Matrix pooled;
    std::vector<Matrix> inputs;
    std::vector<Matrix> pre_activation;
  };
  struct UtteranceTape {
    SegmentLayout layout;
    Eigen::Index row_offset = 0;
    Matrix stats;
    PhonotacticEmbeddingSequence embeddings;
    TransformerCache transformer;
    ClassifierCache classifier;
  };
  struct Tape {
    Heads heads = Heads::kBoth;
    CnnCache cnn;
    FrameEncodings encodings;  // all utterances stacked
    std::vector<UtteranceTape> utterances;
  };
  struct BatchOutput {
    Matrix logits;  // B x C (empty when the LID head is skipped)
    std::vector<SegmentationFrameEmbeddings> embeddings;  // per utterance
  };

  PhoLidModel() = default;
  PhoLidModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // Shared encoder over a stack of frames (rows), kernel-1 convolutions.
  FrameEncodings CnnForward(const Matrix& frames, nn::Mode mode, CnnCache* cache);
  Matrix CnnBackward(const Matrix& d_encodings, const CnnCache& cache);

  SegmentationFrameEmbeddings SegHeadForward(const FrameEncodings& h) const;
  Matrix SegHeadBackward(const FrameEncodings& h, const Matrix& d_embeddings);

  // T x 2H: concat(mean, std) over each segment's valid frames.
  static Matrix SegmentStatsPool(const FrameEncodings& h, const SegmentLayout& layout, double eps);
  static Matrix SegmentStatsPoolBackward(const FrameEncodings& h, const SegmentLayout& layout,
                                         const Matrix& stats, const Matrix& d_stats);

  PhonotacticEmbeddingSequence PhonotacticProject(const Matrix& stats) const;
  Matrix PhonotacticProjectBackward(const Matrix& stats, const Matrix& d_embeddings);

  // T x d_model. No positional encoding is added. `mask` is empty or flags
  // valid segments.
  Matrix TransformerForward(const PhonotacticEmbeddingSequence& e, std::span<const bool> mask,
                            const ForwardContext& ctx, TransformerCache* cache) const;
  Matrix TransformerBackward(const Matrix& d_out, const TransformerCache& cache);

  ScoreVector UtterancePoolClassify(const Matrix& u, std::span<const bool> mask,
                                    ClassifierCache* cache) const;
  Matrix UtterancePoolClassifyBackward(const RowVector& d_scores, const ClassifierCache& cache);

  // Runs the requested heads for a batch. All utterances' valid frames are
  // stacked through the encoder together (batch norm sees the whole batch).
  BatchOutput Forward(std::span<const SegmentedUtterance* const> batch, Heads heads,
                      const ForwardContext& ctx, Tape* tape);
  BatchOutput Forward(std::span<const SegmentedUtterance> batch, Heads heads,
                      const ForwardContext& ctx, Tape* tape);

  // Accumulates parameter gradients. Either upstream gradient may be null
  // when that head was not run or carries no loss.
  void Backward(const Tape& tape, const Matrix* d_logits,
                const std::vector<Matrix>* d_embeddings);

  void ZeroGrad();

  template <typename F>
  void ForEachParam(F&& f);
  template <typename F>
  void ForEachParam(F&& f) const;
  template <typename F>
  void ForEachBuffer(F&& f);
  template <typename F>
  void ForEachBuffer(F&& f) const;

  std::size_t ParameterCount() const;

  // Public for tests and checkpointing.
  std::vector<nn::Linear> conv;
  std::vector<nn::BatchNorm> conv_norm;
  nn::Linear seg_head;
  nn::Linear phonotactic;
  nn::LayerNorm embed_norm;
  nn::Linear lift;
  std::vector<nn::TransformerEncoderLayer> encoder_layers;
  std::vector<nn::Linear> classifier;

 private:
  ModelConfig config_;
};

template <typename Self, typename F>
void VisitParams(Self& m, F&& f) {
  auto linear = [&](const std::string& name, auto& lin, ParamGroup g) {
    f(name + ".weight", g, lin.weight);
    f(name + ".bias", g, lin.bias);
  };
  auto norm = [&](const std::string& name, auto& n, ParamGroup g) {
    f(name + ".gamma", g, n.gamma);
    f(name + ".beta", g, n.beta);
  };
  for (std::size_t i = 0; i < m.conv.size(); ++i) {
    linear("encoder.conv" + std::to_string(i), m.conv[i], ParamGroup::kEncoder);
    if (i < m.conv_norm.size()) {
      norm("encoder.bn" + std::to_string(i), m.conv_norm[i], ParamGroup::kEncoder);
    }
  }
  linear("seg_head", m.seg_head, ParamGroup::kSegmentationHead);
  linear("phonotactic", m.phonotactic, ParamGroup::kLidBranch);
  norm("embed_norm", m.embed_norm, ParamGroup::kLidBranch);
  linear("lift", m.lift, ParamGroup::kLidBranch);
  for (std::size_t i = 0; i < m.encoder_layers.size(); ++i) {
    auto& layer = m.encoder_layers[i];
    const std::string p = "transformer.layer" + std::to_string(i);
    linear(p + ".attn.query", layer.attention.query, ParamGroup::kLidBranch);
    linear(p + ".attn.key", layer.attention.key, ParamGroup::kLidBranch);
    linear(p + ".attn.value", layer.attention.value, ParamGroup::kLidBranch);
    linear(p + ".attn.output", layer.attention.output, ParamGroup::kLidBranch);
    norm(p + ".norm1", layer.norm1, ParamGroup::kLidBranch);
    linear(p + ".ff1", layer.ff1, ParamGroup::kLidBranch);
    linear(p + ".ff2", layer.ff2, ParamGroup::kLidBranch);
    norm(p + ".norm2", layer.norm2, ParamGroup::kLidBranch);
  }
  for (std::size_t i = 0; i < m.classifier.size(); ++i) {
    linear("classifier." + std::to_string(i), m.classifier[i], ParamGroup::kLidBranch);
  }
}

template <typename Self, typename F>
void VisitBuffers(Self& m, F&& f) {
  for (std::size_t i = 0; i < m.conv_norm.size(); ++i) {
    f("encoder.bn" + std::to_string(i) + ".running_mean", m.conv_norm[i].running_mean);
    f("encoder.bn" + std::to_string(i) + ".running_var", m.conv_norm[i].running_var);
  }
}

template <typename F>
void PhoLidModel::ForEachParam(F&& f) { VisitParams(*this, f); }
template <typename F>
void PhoLidModel::ForEachParam(F&& f) const { VisitParams(*this, f); }
template <typename F>
void PhoLidModel::ForEachBuffer(F&& f) { VisitBuffers(*this, f); }
template <typename F>
void PhoLidModel::ForEachBuffer(F&& f) const { VisitBuffers(*this, f); }

}  // namespace pholid

#endif  // PHOLID_MODEL_HPP_
