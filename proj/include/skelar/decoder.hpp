#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "skelar/checkpoint.hpp"
#include "skelar/encoder.hpp"
#include "skelar/rng.hpp"
#include "skelar/tensor.hpp"
#include "skelar/topology.hpp"

namespace skelar {

// Zero-padded decoder input: the chosen joint's representation plus its
// neighbors, padded to the tree's maximum degree of 3, concatenated into a
// 4k-channel length-1 sequence.
inline Tensor assemble_decoder_input(const Tensor& z, std::size_t joint) {
  const std::size_t k = z.shape()[1];
  auto nbrs = topology().neighbors(joint);
  if (nbrs.size() > 3) throw contract_error("decoder input: joint degree exceeds 3");
  std::vector<Tensor> rows;
  rows.push_back(slice(z, 0, joint, 1));
  for (std::size_t n : nbrs) rows.push_back(slice(z, 0, n, 1));
  while (rows.size() < 4) rows.push_back(Tensor::zeros({1, k}));
  return reshape(concat(rows, 0), {4 * k, 1});
}

// 1D transpose-convolution stack expanding a length-1 input to 150 frames:
// strides (5, 5, 3, 2) give lengths 1 -> 5 -> 25 -> 75 -> 150.
struct TransposeStack {
  std::vector<Tensor> kernels;  // [c_in, c_out, w]
  std::vector<std::size_t> strides;

  static TransposeStack init(std::size_t c_in, std::size_t width, Rng& rng) {
    const std::size_t widths[4] = {5, 5, 3, 2};
    const std::size_t strides[4] = {5, 5, 3, 2};
    TransposeStack stack;
    std::size_t c = c_in;
    for (std::size_t i = 0; i < 4; ++i) {
      stack.kernels.push_back(
          detail::glorot_uniform({c, width, widths[i]}, c * widths[i], width, rng));
      stack.strides.push_back(strides[i]);
      c = width;
    }
    return stack;
  }

  // x: [c_in, 1] -> [width, 150]
  Tensor forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < kernels.size(); ++i)
      h = relu(conv1d_transpose(h, kernels[i], strides[i]));
    return h;
  }

  void collect_params(std::vector<std::pair<std::string, Tensor>>& out,
                      const std::string& prefix) {
    for (std::size_t i = 0; i < kernels.size(); ++i)
      out.emplace_back(prefix + "tconv" + std::to_string(i), kernels[i]);
  }
};

// Decoder for the angle objectives: transpose-conv stack plus three parallel
// per-frame linear heads, one per axis. Coarse mode emits 2m class logits
// per frame, fine mode a single regressed angle.
class AngleDecoder {
 public:
  AngleDecoder() = default;

  static AngleDecoder init(std::size_t k, std::size_t m, std::size_t width, bool fine_mode,
                           Rng& rng) {
    AngleDecoder dec;
    dec.k_ = k;
    dec.m_ = m;
    dec.fine_mode_ = fine_mode;
    dec.stack_ = TransposeStack::init(4 * k, width, rng);
    const std::size_t out_dim = fine_mode ? 1 : 2 * m;
    for (std::size_t h = 0; h < 3; ++h) {
      dec.head_w_[h] = detail::glorot_uniform({width, out_dim}, width, out_dim, rng);
      dec.head_b_[h] = Tensor::zeros({out_dim}, true);
    }
    return dec;
  }

  std::size_t m() const { return m_; }
  bool fine_mode() const { return fine_mode_; }

  // z: [v, k] joint representations; returns one [150, out_dim] tensor per
  // axis head.
  std::array<Tensor, 3> decode(const Tensor& z, std::size_t joint) const {
    Tensor h = stack_.forward(assemble_decoder_input(z, joint));  // [width, 150]
    Tensor ht = transpose2d(h);                                   // [150, width]
    std::array<Tensor, 3> heads;
    for (std::size_t i = 0; i < 3; ++i)
      heads[i] = add_rows(matmul(ht, head_w_[i]), head_b_[i]);
    return heads;
  }

  std::vector<std::pair<std::string, Tensor>> named_params(const std::string& prefix = "decoder/") {
    std::vector<std::pair<std::string, Tensor>> out;
    stack_.collect_params(out, prefix);
    for (std::size_t h = 0; h < 3; ++h) {
      out.emplace_back(prefix + "head" + std::to_string(h) + "/W", head_w_[h]);
      out.emplace_back(prefix + "head" + std::to_string(h) + "/b", head_b_[h]);
    }
    return out;
  }

  void load(const std::vector<CheckpointRecord>& records, const std::string& prefix = "decoder/") {
    for (auto& [name, t] : named_params(prefix)) load_into(records, name, t);
  }

 private:
  std::size_t k_ = 0, m_ = 6;
  bool fine_mode_ = false;
  TransposeStack stack_;
  std::array<Tensor, 3> head_w_, head_b_;
};

// Decoder for the coordinate-reconstruction ablation: the whole Z feeds the
// same transpose stack and one head regresses all joint coordinates per
// frame.
class CoordDecoder {
 public:
  CoordDecoder() = default;

  static CoordDecoder init(std::size_t v, std::size_t k, std::size_t width, Rng& rng) {
    CoordDecoder dec;
    dec.v_ = v;
    dec.k_ = k;
    dec.stack_ = TransposeStack::init(v * k, width, rng);
    dec.head_w_ = detail::glorot_uniform({width, v * 3}, width, v * 3, rng);
    dec.head_b_ = Tensor::zeros({v * 3}, true);
    return dec;
  }

  // z: [v, k] -> [150, v*3] per-frame coordinate predictions.
  Tensor decode(const Tensor& z) const {
    Tensor h = stack_.forward(reshape(z, {v_ * k_, 1}));
    return add_rows(matmul(transpose2d(h), head_w_), head_b_);
  }

  // Rearranges a sample's [v, 3, t] coordinates into the decoder's
  // [t, v*3] output layout.
  static Tensor coordinate_target(const WindowedSample& sample, std::size_t v) {
    const std::size_t t = WindowedSample::kFrames;
    std::vector<double> vals(t * v * 3);
    for (std::size_t f = 0; f < t; ++f)
      for (std::size_t j = 0; j < v; ++j)
        for (std::size_t a = 0; a < 3; ++a)
          vals[f * v * 3 + j * 3 + a] = sample.coords[(j * 3 + a) * t + f];
    return Tensor({t, v * 3}, std::move(vals), false);
  }

  std::vector<std::pair<std::string, Tensor>> named_params(const std::string& prefix = "decoder/") {
    std::vector<std::pair<std::string, Tensor>> out;
    stack_.collect_params(out, prefix);
    out.emplace_back(prefix + "head/W", head_w_);
    out.emplace_back(prefix + "head/b", head_b_);
    return out;
  }

  void load(const std::vector<CheckpointRecord>& records, const std::string& prefix = "decoder/") {
    for (auto& [name, t] : named_params(prefix)) load_into(records, name, t);
  }

 private:
  std::size_t v_ = 0, k_ = 0;
  TransposeStack stack_;
  Tensor head_w_, head_b_;
};

}  // namespace skelar
