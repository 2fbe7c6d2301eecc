#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "skelar/checkpoint.hpp"
#include "skelar/rng.hpp"
#include "skelar/skeleton.hpp"
#include "skelar/tensor.hpp"
#include "skelar/topology.hpp"

namespace skelar {

namespace detail {

inline Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-limit, limit);
  return Tensor(std::move(shape), std::move(v), true);
}

}  // namespace detail

struct EncoderBlockConfig {
  std::size_t channels = 64;
  std::size_t temporal_kernel = 5;
  std::size_t stride = 2;
  bool attention = true;
};

struct EncoderConfig {
  std::vector<EncoderBlockConfig> blocks;
  std::size_t groups = 8;
  std::size_t v = SkeletonTopology::kNumJoints;

  std::size_t feature_size() const { return blocks.back().channels; }

  static EncoderConfig defaults() {
    EncoderConfig cfg;
    cfg.blocks = {{64, 5, 2, true}, {128, 5, 2, true}, {256, 5, 2, true}};
    cfg.groups = 8;
    return cfg;
  }

  // Reduced widths for fast tests and desk-scale experiments.
  static EncoderConfig small(std::size_t k = 32) {
    EncoderConfig cfg;
    cfg.blocks = {{16, 5, 2, true}, {k, 5, 2, true}, {k, 5, 2, true}};
    cfg.groups = 4;
    return cfg;
  }

  // Valid-convolution output length after all temporal strides.
  std::size_t final_length(std::size_t t) const {
    for (const EncoderBlockConfig& b : blocks) {
      if (b.temporal_kernel > t) {
        throw contract_error("encoder config: temporal kernel exceeds remaining length");
      }
      t = (t - b.temporal_kernel) / b.stride + 1;
    }
    return t;
  }
};

// Decoupled graph convolution: channel groups each aggregate with their own
// trainable [v, v] kernel, all initialized to the shared normalized
// adjacency.
struct GcnLayer {
  Tensor W;                     // [c_in, c_out]
  std::vector<Tensor> kernels;  // groups x [v, v]
  std::size_t groups = 1;

  static GcnLayer init(std::size_t v, std::size_t c_in, std::size_t c_out, std::size_t groups,
                       Rng& rng) {
    if (groups == 0 || c_out % groups != 0) {
      throw contract_error("gcn: group count " + std::to_string(groups) +
                           " must divide output channels " + std::to_string(c_out));
    }
    GcnLayer layer;
    layer.groups = groups;
    layer.W = detail::glorot_uniform({c_in, c_out}, c_in, c_out, rng);
    const std::vector<double> norm_adj = topology().normalized_adjacency();
    for (std::size_t g = 0; g < groups; ++g)
      layer.kernels.emplace_back(Shape{v, v}, norm_adj, true);
    return layer;
  }

  // x: [t, v, c_in] -> [t, v, c_out], with ReLU.
  Tensor forward(const Tensor& x) const {
    const std::size_t t = x.shape()[0], v = x.shape()[1], c_in = x.shape()[2];
    const std::size_t c_out = W.shape()[1];
    Tensor hw = reshape(matmul(reshape(x, {t * v, c_in}), W), {t, v, c_out});
    const std::size_t group_size = c_out / groups;
    std::vector<Tensor> parts;
    parts.reserve(groups);
    for (std::size_t g = 0; g < groups; ++g) {
      Tensor sl = slice(hw, 2, g * group_size, group_size);
      parts.push_back(matmul(kernels[g], sl));
    }
    return relu(groups == 1 ? parts[0] : concat(parts, 2));
  }

  void collect_params(std::vector<std::pair<std::string, Tensor>>& out,
                      const std::string& prefix) {
    out.emplace_back(prefix + "W", W);
    for (std::size_t g = 0; g < kernels.size(); ++g)
      out.emplace_back(prefix + "kernel" + std::to_string(g), kernels[g]);
  }
};

// Plain (coupled) graph convolution of the non-decoupled formulation; used as
// the reference the g=1 decoupled layer must collapse to.
inline Tensor gcn_reference_forward(const Tensor& h, const Tensor& w,
                                    const std::vector<double>& norm_adj) {
  const std::size_t v = h.shape()[0];
  Tensor kernel({v, v}, norm_adj, false);
  return relu(matmul(kernel, matmul(h, w)));
}

// Single-time-step convenience entry: H [v, c_in] -> [v, c_out].
inline Tensor gcn_forward(const GcnLayer& layer, const Tensor& h) {
  const std::size_t v = h.shape()[0], c = h.shape()[1];
  return reshape(layer.forward(reshape(h, {1, v, c})), {v, layer.W.shape()[1]});
}

// Strided valid temporal convolution applied independently per joint.
struct TemporalConvLayer {
  Tensor kernel;  // [c_out, c_in, w]
  std::size_t stride = 1;

  static TemporalConvLayer init(std::size_t c_in, std::size_t c_out, std::size_t width,
                                std::size_t stride, Rng& rng) {
    TemporalConvLayer layer;
    layer.stride = stride;
    layer.kernel = detail::glorot_uniform({c_out, c_in, width}, c_in * width, c_out, rng);
    return layer;
  }

  // x: [t, v, c_in] -> [t', v, c_out], with ReLU.
  Tensor forward(const Tensor& x) const {
    const std::size_t v = x.shape()[1];
    Tensor joints_major = permute(x, {1, 2, 0});  // [v, c_in, t]
    std::vector<Tensor> per_joint;
    per_joint.reserve(v);
    for (std::size_t j = 0; j < v; ++j) {
      Tensor xj = reshape(slice(joints_major, 0, j, 1),
                          {x.shape()[2], x.shape()[0]});  // [c_in, t]
      Tensor yj = conv1d(xj, kernel, stride);
      per_joint.push_back(reshape(yj, {1, yj.shape()[0], yj.shape()[1]}));
    }
    Tensor y = concat(per_joint, 0);       // [v, c_out, t']
    return relu(permute(y, {2, 0, 1}));    // [t', v, c_out]
  }

  void collect_params(std::vector<std::pair<std::string, Tensor>>& out,
                      const std::string& prefix) {
    out.emplace_back(prefix + "kernel", kernel);
  }
};

// Single-head temporal self-attention applied separately per joint, so no
// information crosses joints here.
struct PerJointAttentionLayer {
  Tensor Wq, Wk, Wv;  // [c, c]

  static PerJointAttentionLayer init(std::size_t c, Rng& rng) {
    PerJointAttentionLayer layer;
    layer.Wq = detail::glorot_uniform({c, c}, c, c, rng);
    layer.Wk = detail::glorot_uniform({c, c}, c, c, rng);
    layer.Wv = detail::glorot_uniform({c, c}, c, c, rng);
    return layer;
  }

  // x: [t, v, c] -> [t, v, c]
  Tensor forward(const Tensor& x) const {
    const std::size_t t = x.shape()[0], v = x.shape()[1], c = x.shape()[2];
    const double scale_factor = 1.0 / std::sqrt(static_cast<double>(c));
    std::vector<Tensor> per_joint;
    per_joint.reserve(v);
    for (std::size_t j = 0; j < v; ++j) {
      Tensor xj = reshape(slice(x, 1, j, 1), {t, c});
      Tensor q = matmul(xj, Wq);
      Tensor k = matmul(xj, Wk);
      Tensor vv = matmul(xj, Wv);
      Tensor attn = softmax(scale(matmul(q, transpose2d(k)), scale_factor), 1);
      per_joint.push_back(reshape(matmul(attn, vv), {t, 1, c}));
    }
    return concat(per_joint, 1);
  }

  void collect_params(std::vector<std::pair<std::string, Tensor>>& out,
                      const std::string& prefix) {
    out.emplace_back(prefix + "Wq", Wq);
    out.emplace_back(prefix + "Wk", Wk);
    out.emplace_back(prefix + "Wv", Wv);
  }
};

// Spec-facing entry: X [v, c, t] -> [v, c, t].
inline Tensor per_joint_attention(const PerJointAttentionLayer& layer, const Tensor& x) {
  return permute(layer.forward(permute(x, {2, 0, 1})), {1, 2, 0});
}

// The spatio-temporal skeleton encoder: per block gcn -> temporal conv ->
// per-joint attention, then mean-pooling over the remaining time axis.
class Encoder {
 public:
  Encoder() = default;

  static Encoder init(EncoderConfig config, Rng& rng) {
    Encoder enc;
    enc.config_ = std::move(config);
    enc.config_.final_length(WindowedSample::kFrames);  // validates the schedule
    std::size_t c_in = 3;
    for (const EncoderBlockConfig& block : enc.config_.blocks) {
      enc.gcn_.push_back(GcnLayer::init(enc.config_.v, c_in, block.channels,
                                        enc.config_.groups, rng));
      enc.tconv_.push_back(TemporalConvLayer::init(block.channels, block.channels,
                                                   block.temporal_kernel, block.stride, rng));
      if (block.attention) {
        enc.attn_.push_back(PerJointAttentionLayer::init(block.channels, rng));
      } else {
        enc.attn_.push_back(std::nullopt);
      }
      c_in = block.channels;
    }
    return enc;
  }

  const EncoderConfig& config() const { return config_; }

  // sample: [21, 3, 150] coordinates; joint_mask, when given, zeroes whole
  // joints at every time step. Returns Z [v, k].
  Tensor encode(const WindowedSample& sample,
                const std::vector<std::uint8_t>* joint_mask = nullptr) const {
    const std::size_t v = config_.v;
    const std::size_t t = WindowedSample::kFrames;
    if (sample.coords.size() != v * 3 * t) {
      throw contract_error("encode: sample has " + std::to_string(sample.coords.size()) +
                           " values, expected " + std::to_string(v * 3 * t));
    }
    std::vector<double> input(t * v * 3);
    for (std::size_t f = 0; f < t; ++f)
      for (std::size_t j = 0; j < v; ++j) {
        const bool keep = joint_mask == nullptr || (*joint_mask)[j] != 0;
        for (std::size_t a = 0; a < 3; ++a)
          input[(f * v + j) * 3 + a] = keep ? sample.coords[(j * 3 + a) * t + f] : 0.0;
      }
    Tensor x({t, v, 3}, std::move(input), false);
    for (std::size_t b = 0; b < config_.blocks.size(); ++b) {
      x = gcn_[b].forward(x);
      x = tconv_[b].forward(x);
      if (attn_[b]) x = attn_[b]->forward(x);
    }
    return mean_axis(x, 0);  // [v, k]
  }

  std::vector<std::pair<std::string, Tensor>> named_params(const std::string& prefix = "encoder/") {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t b = 0; b < config_.blocks.size(); ++b) {
      const std::string base = prefix + "block" + std::to_string(b) + "/";
      gcn_[b].collect_params(out, base + "gcn/");
      tconv_[b].collect_params(out, base + "tconv/");
      if (attn_[b]) attn_[b]->collect_params(out, base + "attn/");
    }
    return out;
  }

  std::vector<Tensor> params() {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
  }

  void load(const std::vector<CheckpointRecord>& records, const std::string& prefix = "encoder/") {
    for (auto& [name, t] : named_params(prefix)) load_into(records, name, t);
  }

  GcnLayer& gcn(std::size_t b) { return gcn_[b]; }
  TemporalConvLayer& tconv(std::size_t b) { return tconv_[b]; }
  std::optional<PerJointAttentionLayer>& attn(std::size_t b) { return attn_[b]; }

 private:
  EncoderConfig config_;
  std::vector<GcnLayer> gcn_;
  std::vector<TemporalConvLayer> tconv_;
  std::vector<std::optional<PerJointAttentionLayer>> attn_;
};

}  // namespace skelar
