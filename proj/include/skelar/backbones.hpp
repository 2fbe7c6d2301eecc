#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "skelar/checkpoint.hpp"
#include "skelar/encoder.hpp"
#include "skelar/rng.hpp"
#include "skelar/tensor.hpp"

namespace skelar {

enum class BackboneFamily { kResidualConv, kTemporalAttention };

inline BackboneFamily parse_backbone(const std::string& name) {
  if (name == "resnet" || name == "residual-conv-1d") return BackboneFamily::kResidualConv;
  if (name == "attention" || name == "temporal-attention") return BackboneFamily::kTemporalAttention;
  throw data_error("unknown backbone '" + name + "' (expected resnet or attention)");
}

inline const char* backbone_name(BackboneFamily family) {
  return family == BackboneFamily::kResidualConv ? "resnet" : "attention";
}

struct BackboneConfig {
  BackboneFamily family = BackboneFamily::kResidualConv;
  std::size_t channels = 12;   // input channels
  std::size_t width = 32;      // hidden width
  std::size_t d = 256;         // output feature size
  std::size_t patch = 10;      // attention family: time steps per token
};

// Sensor-series feature extractor emitting one d-vector per sample.
//
// Residual family: strided stem conv, then 4 residual stages (two width-3
// valid convs with a cropped identity shortcut; the first two stages also
// downsample), global average pool, linear head.
//
// Attention family: patchify time into fixed-size tokens, two self-attention
// layers with residual feedforwards, mean-pool, linear head.
class Backbone {
 public:
  Backbone() = default;

  static Backbone init(BackboneConfig config, Rng& rng) {
    Backbone net;
    net.config_ = config;
    const std::size_t w = config.width;
    if (config.family == BackboneFamily::kResidualConv) {
      net.stem_ = detail::glorot_uniform({w, config.channels, 5}, config.channels * 5, w, rng);
      for (std::size_t s = 0; s < 4; ++s) {
        net.res1_.push_back(detail::glorot_uniform({w, w, 3}, w * 3, w, rng));
        net.res2_.push_back(detail::glorot_uniform({w, w, 3}, w * 3, w, rng));
        if (s < 2) net.down_.push_back(detail::glorot_uniform({w, w, 3}, w * 3, w, rng));
      }
    } else {
      const std::size_t token_dim = config.patch * config.channels;
      net.embed_w_ = detail::glorot_uniform({token_dim, w}, token_dim, w, rng);
      net.embed_b_ = Tensor::zeros({w}, true);
      for (std::size_t l = 0; l < 2; ++l) {
        net.attn_.push_back(PerJointAttentionLayer::init(w, rng));
        net.ff_w_.push_back(detail::glorot_uniform({w, w}, w, w, rng));
        net.ff_b_.push_back(Tensor::zeros({w}, true));
      }
    }
    net.head_w_ = detail::glorot_uniform({w, config.d}, w, config.d, rng);
    net.head_b_ = Tensor::zeros({config.d}, true);
    return net;
  }

  const BackboneConfig& config() const { return config_; }

  // x: [t, channels] -> feature [1, d]
  Tensor forward(const Tensor& x) const {
    if (x.shape().size() != 2 || x.shape()[1] != config_.channels) {
      throw contract_error("backbone: expected [t, " + std::to_string(config_.channels) +
                           "] input");
    }
    Tensor pooled = config_.family == BackboneFamily::kResidualConv ? conv_trunk(x)
                                                                    : attention_trunk(x);
    return add_rows(matmul(pooled, head_w_), head_b_);
  }

  std::vector<std::pair<std::string, Tensor>> named_params(const std::string& prefix = "backbone/") {
    std::vector<std::pair<std::string, Tensor>> out;
    if (config_.family == BackboneFamily::kResidualConv) {
      out.emplace_back(prefix + "stem", stem_);
      for (std::size_t s = 0; s < res1_.size(); ++s) {
        out.emplace_back(prefix + "stage" + std::to_string(s) + "/conv1", res1_[s]);
        out.emplace_back(prefix + "stage" + std::to_string(s) + "/conv2", res2_[s]);
        if (s < down_.size())
          out.emplace_back(prefix + "stage" + std::to_string(s) + "/down", down_[s]);
      }
    } else {
      out.emplace_back(prefix + "embed/W", embed_w_);
      out.emplace_back(prefix + "embed/b", embed_b_);
      for (std::size_t l = 0; l < attn_.size(); ++l) {
        const std::string base = prefix + "layer" + std::to_string(l) + "/";
        out.emplace_back(base + "Wq", attn_[l].Wq);
        out.emplace_back(base + "Wk", attn_[l].Wk);
        out.emplace_back(base + "Wv", attn_[l].Wv);
        out.emplace_back(base + "ff/W", ff_w_[l]);
        out.emplace_back(base + "ff/b", ff_b_[l]);
      }
    }
    out.emplace_back(prefix + "head/W", head_w_);
    out.emplace_back(prefix + "head/b", head_b_);
    return out;
  }

  std::vector<Tensor> params() {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
  }

  void load(const std::vector<CheckpointRecord>& records, const std::string& prefix = "backbone/") {
    for (auto& [name, t] : named_params(prefix)) load_into(records, name, t);
  }

 private:
  Tensor conv_trunk(const Tensor& x) const {
    Tensor h = relu(conv1d(permute(x, {1, 0}), stem_, 2));  // [w, t']
    for (std::size_t s = 0; s < res1_.size(); ++s) {
      Tensor h1 = relu(conv1d(h, res1_[s], 1));
      Tensor h2 = conv1d(h1, res2_[s], 1);
      Tensor skip = slice(h, 1, 2, h.shape()[1] - 4);  // crop to the valid-conv length
      h = relu(add(h2, skip));
      if (s < down_.size()) h = relu(conv1d(h, down_[s], 2));
    }
    return reshape(mean_axis(h, 1), {1, config_.width});
  }

  Tensor attention_trunk(const Tensor& x) const {
    const std::size_t tokens = x.shape()[0] / config_.patch;
    if (tokens == 0) throw contract_error("backbone: series shorter than one patch");
    const std::size_t token_dim = config_.patch * config_.channels;
    Tensor patched = reshape(slice(x, 0, 0, tokens * config_.patch), {tokens, token_dim});
    Tensor h = relu(add_rows(matmul(patched, embed_w_), embed_b_));  // [tokens, w]
    for (std::size_t l = 0; l < attn_.size(); ++l) {
      // the per-joint layer runs temporal attention on [t, 1, c]
      Tensor attended = reshape(
          attn_[l].forward(reshape(h, {tokens, 1, config_.width})), {tokens, config_.width});
      h = add(h, attended);
      h = add(h, relu(add_rows(matmul(h, ff_w_[l]), ff_b_[l])));
    }
    return reshape(mean_axis(h, 0), {1, config_.width});
  }

  BackboneConfig config_;
  Tensor stem_;
  std::vector<Tensor> res1_, res2_, down_;
  Tensor embed_w_, embed_b_;
  std::vector<PerJointAttentionLayer> attn_;
  std::vector<Tensor> ff_w_, ff_b_;
  Tensor head_w_, head_b_;
};

}  // namespace skelar
