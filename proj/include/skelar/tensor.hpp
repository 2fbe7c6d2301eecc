#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "skelar/common.hpp"

namespace skelar {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense f64 row-major array with optional gradient buffer. Copies are
// shallow: two Tensor handles may share one buffer, which is what lets tape
// closures accumulate gradients into the tensors the caller still holds.
class Tensor {
 public:
  struct Impl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // sized like values iff requires_grad
    bool requires_grad = false;
  };

  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : impl_(std::make_shared<Impl>()) {
    if (values.size() != shape_numel(shape)) {
      throw contract_error("tensor value count " + std::to_string(values.size()) +
                           " does not match shape " + shape_str(shape));
    }
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
    impl_->requires_grad = requires_grad;
    if (requires_grad) impl_->grad.assign(impl_->values.size(), 0.0);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> v(shape_numel(shape), 0.0);
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    std::vector<double> v(shape_numel(shape), value);
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->values.size(); }
  bool requires_grad() const { return impl_ && impl_->requires_grad; }

  std::vector<double>& values() { return impl_->values; }
  const std::vector<double>& values() const { return impl_->values; }
  double item() const {
    if (size() != 1) throw contract_error("item() on non-scalar tensor");
    return impl_->values[0];
  }

  std::vector<double>& grad() {
    if (!requires_grad()) throw contract_error("grad() on tensor without requires_grad");
    return impl_->grad;
  }
  const std::vector<double>& grad() const {
    if (!requires_grad()) throw contract_error("grad() on tensor without requires_grad");
    return impl_->grad;
  }
  void zero_grad() {
    if (requires_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }

  std::shared_ptr<Impl> impl() const { return impl_; }

 private:
  std::shared_ptr<Impl> impl_;
};

// Reverse-mode tape. Ops record backward closures onto the active tape in
// forward order; backward() replays them once in reverse. A tape is an RAII
// scope: while alive it is the thread's active tape.
class Tape {
 public:
  Tape() : previous_(active_ref()) { active_ref() = this; }
  ~Tape() { active_ref() = previous_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_ref(); }

  void record(std::function<void()> backward_fn) {
    entries_.push_back(std::move(backward_fn));
  }

  bool consumed() const { return consumed_; }

  void run_backward() {
    if (consumed_) {
      throw contract_error("backward() called twice on the same tape");
    }
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    consumed_ = true;
  }

  std::size_t num_entries() const { return entries_.size(); }

 private:
  static Tape*& active_ref() {
    thread_local Tape* active = nullptr;
    return active;
  }
  Tape* previous_;
  std::vector<std::function<void()>> entries_;
  bool consumed_ = false;
};

namespace detail {

// An op output tracks gradients only when a tape is open and some input does.
inline bool track(bool any_input_grad) {
  return Tape::active() != nullptr && any_input_grad;
}

inline void record(std::function<void()> fn) { Tape::active()->record(std::move(fn)); }

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw contract_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

}  // namespace detail

inline void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw contract_error("backward() requires a scalar loss, got " + shape_str(loss.shape()));
  }
  Tape* tape = Tape::active();
  if (tape == nullptr) throw contract_error("backward() with no open tape");
  if (!loss.requires_grad()) {
    throw contract_error("backward() on a loss that does not require grad");
  }
  loss.impl()->grad[0] += 1.0;
  tape->run_backward();
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  Tensor result(a.shape(), std::move(out),
                detail::track(a.requires_grad() || b.requires_grad()));
  if (result.requires_grad()) {
    auto ai = a.impl(), bi = b.impl(), oi = result.impl();
    detail::record([ai, bi, oi] {
      if (ai->requires_grad)
        for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
      if (bi->requires_grad)
        for (std::size_t i = 0; i < oi->grad.size(); ++i) bi->grad[i] += oi->grad[i];
    });
  }
  return result;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  Tensor result(a.shape(), std::move(out),
                detail::track(a.requires_grad() || b.requires_grad()));
  if (result.requires_grad()) {
    auto ai = a.impl(), bi = b.impl(), oi = result.impl();
    detail::record([ai, bi, oi] {
      if (ai->requires_grad)
        for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
      if (bi->requires_grad)
        for (std::size_t i = 0; i < oi->grad.size(); ++i) bi->grad[i] -= oi->grad[i];
    });
  }
  return result;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  Tensor result(a.shape(), std::move(out),
                detail::track(a.requires_grad() || b.requires_grad()));
  if (result.requires_grad()) {
    auto ai = a.impl(), bi = b.impl(), oi = result.impl();
    detail::record([ai, bi, oi] {
      if (ai->requires_grad)
        for (std::size_t i = 0; i < oi->grad.size(); ++i)
          ai->grad[i] += oi->grad[i] * bi->values[i];
      if (bi->requires_grad)
        for (std::size_t i = 0; i < oi->grad.size(); ++i)
          bi->grad[i] += oi->grad[i] * ai->values[i];
    });
  }
  return result;
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
  Tensor result(a.shape(), std::move(out), detail::track(a.requires_grad()));
  if (result.requires_grad()) {
    auto ai = a.impl();
    auto oi = result.impl();
    detail::record([ai, oi, c] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i] * c;
    });
  }
  return result;
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  Tensor result(a.shape(), std::move(out), detail::track(a.requires_grad()));
  if (result.requires_grad()) {
    auto ai = a.impl();
    auto oi = result.impl();
    detail::record([ai, oi] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i)
        if (ai->values[i] > 0.0) ai->grad[i] += oi->grad[i];
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.size()) {
    throw contract_error("reshape: " + shape_str(a.shape()) + " -> " +
                         shape_str(new_shape) + " changes element count");
  }
  Tensor result(std::move(new_shape), a.values(), detail::track(a.requires_grad()));
  if (result.requires_grad()) {
    auto ai = a.impl();
    auto oi = result.impl();
    detail::record([ai, oi] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
    });
  }
  return result;
}

namespace detail {

inline std::vector<std::size_t> row_major_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

// Maps every flat output index to the corresponding flat input index for a
// permutation of axes.
inline std::vector<std::size_t> permute_index_map(const Shape& in_shape,
                                                  const std::vector<std::size_t>& perm) {
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = in_shape[perm[i]];
  const auto in_strides = row_major_strides(in_shape);
  const auto out_strides = row_major_strides(out_shape);
  std::vector<std::size_t> map(shape_numel(in_shape));
  for (std::size_t o = 0; o < map.size(); ++o) {
    std::size_t rem = o;
    std::size_t src = 0;
    for (std::size_t axis = 0; axis < perm.size(); ++axis) {
      const std::size_t idx = rem / out_strides[axis];
      rem %= out_strides[axis];
      src += idx * in_strides[perm[axis]];
    }
    map[o] = src;
  }
  return map;
}

}  // namespace detail

inline Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm) {
  if (perm.size() != a.rank()) throw contract_error("permute: axis count mismatch");
  auto map = detail::permute_index_map(a.shape(), perm);
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = a.shape()[perm[i]];
  std::vector<double> out(a.size());
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = a.values()[map[o]];
  Tensor result(std::move(out_shape), std::move(out), detail::track(a.requires_grad()));
  if (result.requires_grad()) {
    auto ai = a.impl();
    auto oi = result.impl();
    auto shared_map = std::make_shared<std::vector<std::size_t>>(std::move(map));
    detail::record([ai, oi, shared_map] {
      for (std::size_t o = 0; o < oi->grad.size(); ++o)
        ai->grad[(*shared_map)[o]] += oi->grad[o];
    });
  }
  return result;
}

inline Tensor transpose2d(const Tensor& a) {
  if (a.rank() != 2) throw contract_error("transpose2d: expected rank 2, got " + shape_str(a.shape()));
  return permute(a, {1, 0});
}

inline Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len) {
  if (axis >= a.rank()) throw contract_error("slice: axis out of range");
  if (start + len > a.shape()[axis]) {
    throw contract_error("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") exceeds dim " +
                         std::to_string(a.shape()[axis]));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.shape()[i];
  const std::size_t dim = a.shape()[axis];
  std::vector<double> out(outer * len * inner);
  for (std::size_t ou = 0; ou < outer; ++ou)
    for (std::size_t j = 0; j < len; ++j) {
      const double* src = a.values().data() + (ou * dim + start + j) * inner;
      double* dst = out.data() + (ou * len + j) * inner;
      std::copy(src, src + inner, dst);
    }
  Tensor result(std::move(out_shape), std::move(out), detail::track(a.requires_grad()));
  if (result.requires_grad()) {
    auto ai = a.impl();
    auto oi = result.impl();
    detail::record([ai, oi, outer, inner, dim, start, len] {
      for (std::size_t ou = 0; ou < outer; ++ou)
        for (std::size_t j = 0; j < len; ++j) {
          const double* src = oi->grad.data() + (ou * len + j) * inner;
          double* dst = ai->grad.data() + (ou * dim + start + j) * inner;
          for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    });
  }
  return result;
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw contract_error("concat: no inputs");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw contract_error("concat: axis out of range");
  std::size_t cat_dim = 0;
  bool any_grad = false;
  for (const Tensor& p : parts) {
    if (p.rank() != ref.size()) throw contract_error("concat: rank mismatch");
    for (std::size_t i = 0; i < ref.size(); ++i)
      if (i != axis && p.shape()[i] != ref[i])
        throw contract_error("concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                             shape_str(ref));
    cat_dim += p.shape()[axis];
    any_grad = any_grad || p.requires_grad();
  }
  Shape out_shape = ref;
  out_shape[axis] = cat_dim;
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
  for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
  std::vector<double> out(outer * cat_dim * inner);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t d = p.shape()[axis];
    for (std::size_t ou = 0; ou < outer; ++ou) {
      const double* src = p.values().data() + ou * d * inner;
      double* dst = out.data() + (ou * cat_dim + offset) * inner;
      std::copy(src, src + d * inner, dst);
    }
    offset += d;
  }
  Tensor result(std::move(out_shape), std::move(out), detail::track(any_grad));
  if (result.requires_grad()) {
    auto oi = result.impl();
    std::vector<std::shared_ptr<Tensor::Impl>> impls;
    std::vector<std::size_t> dims;
    for (const Tensor& p : parts) {
      impls.push_back(p.impl());
      dims.push_back(p.shape()[axis]);
    }
    detail::record([oi, impls, dims, outer, inner, cat_dim] {
      std::size_t off = 0;
      for (std::size_t pi = 0; pi < impls.size(); ++pi) {
        const std::size_t d = dims[pi];
        if (impls[pi]->requires_grad) {
          for (std::size_t ou = 0; ou < outer; ++ou) {
            const double* src = oi->grad.data() + (ou * cat_dim + off) * inner;
            double* dst = impls[pi]->grad.data() + ou * d * inner;
            for (std::size_t i = 0; i < d * inner; ++i) dst[i] += src[i];
          }
        }
        off += d;
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  Tensor result({1}, {total}, detail::track(a.requires_grad()));
  if (result.requires_grad()) {
    auto ai = a.impl();
    auto oi = result.impl();
    detail::record([ai, oi] {
      for (double& g : ai->grad) g += oi->grad[0];
    });
  }
  return result;
}

// Mean over one axis; the axis is removed from the shape.
inline Tensor mean_axis(const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) throw contract_error("mean_axis: axis out of range");
  const std::size_t dim = a.shape()[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.shape()[i];
  Shape out_shape;
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (i != axis) out_shape.push_back(a.shape()[i]);
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t ou = 0; ou < outer; ++ou)
    for (std::size_t j = 0; j < dim; ++j) {
      const double* src = a.values().data() + (ou * dim + j) * inner;
      double* dst = out.data() + ou * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  const double inv = 1.0 / static_cast<double>(dim);
  for (double& v : out) v *= inv;
  Tensor result(std::move(out_shape), std::move(out), detail::track(a.requires_grad()));
  if (result.requires_grad()) {
    auto ai = a.impl();
    auto oi = result.impl();
    detail::record([ai, oi, outer, inner, dim, inv] {
      for (std::size_t ou = 0; ou < outer; ++ou)
        for (std::size_t j = 0; j < dim; ++j) {
          double* dst = ai->grad.data() + (ou * dim + j) * inner;
          const double* src = oi->grad.data() + ou * inner;
          for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
        }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Matrix multiply: [..,p,q] x [..,q,r] -> [..,p,r]. Leading batch dims must
// match exactly, or one side may omit them entirely (it is then broadcast).
// ---------------------------------------------------------------------------

namespace detail {

inline void matmul_kernel(const double* a, const double* b, double* out, std::size_t p,
                          std::size_t q, std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    double* orow = out + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const double av = a[i * q + k];
      if (av == 0.0) continue;
      const double* brow = b + k * r;
      for (std::size_t j = 0; j < r; ++j) orow[j] += av * brow[j];
    }
  }
}

// out += a^T stored as (p,q) times c: dB = A^T * dOut
inline void matmul_at_b(const double* a, const double* dout, double* db, std::size_t p,
                        std::size_t q, std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    const double* arow = a + i * q;
    const double* drow = dout + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const double av = arow[k];
      if (av == 0.0) continue;
      double* brow = db + k * r;
      for (std::size_t j = 0; j < r; ++j) brow[j] += av * drow[j];
    }
  }
}

// dA = dOut * B^T
inline void matmul_a_bt(const double* dout, const double* b, double* da, std::size_t p,
                        std::size_t q, std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    const double* drow = dout + i * r;
    double* arow = da + i * q;
    for (std::size_t k = 0; k < q; ++k) {
      const double* brow = b + k * r;
      double acc = 0.0;
      for (std::size_t j = 0; j < r; ++j) acc += drow[j] * brow[j];
      arow[k] += acc;
    }
  }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw contract_error("matmul: inputs must be at least rank 2, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t p = a.shape()[a.rank() - 2];
  const std::size_t q = a.shape()[a.rank() - 1];
  const std::size_t q2 = b.shape()[b.rank() - 2];
  const std::size_t r = b.shape()[b.rank() - 1];
  if (q != q2) {
    throw contract_error("matmul: inner dimension mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  Shape a_batch(a.shape().begin(), a.shape().end() - 2);
  Shape b_batch(b.shape().begin(), b.shape().end() - 2);
  Shape batch;
  if (a_batch == b_batch) {
    batch = a_batch;
  } else if (a_batch.empty()) {
    batch = b_batch;
  } else if (b_batch.empty()) {
    batch = a_batch;
  } else {
    throw contract_error("matmul: incompatible batch dims " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  const std::size_t nbatch = shape_numel(batch);
  const bool a_bcast = a_batch.empty() && !batch.empty();
  const bool b_bcast = b_batch.empty() && !batch.empty();
  Shape out_shape = batch;
  out_shape.push_back(p);
  out_shape.push_back(r);
  std::vector<double> out(nbatch * p * r, 0.0);
  for (std::size_t n = 0; n < nbatch; ++n) {
    const double* pa = a.values().data() + (a_bcast ? 0 : n * p * q);
    const double* pb = b.values().data() + (b_bcast ? 0 : n * q * r);
    detail::matmul_kernel(pa, pb, out.data() + n * p * r, p, q, r);
  }
  Tensor result(std::move(out_shape), std::move(out),
                detail::track(a.requires_grad() || b.requires_grad()));
  if (result.requires_grad()) {
    auto ai = a.impl(), bi = b.impl(), oi = result.impl();
    detail::record([ai, bi, oi, nbatch, p, q, r, a_bcast, b_bcast] {
      for (std::size_t n = 0; n < nbatch; ++n) {
        const double* dout = oi->grad.data() + n * p * r;
        const double* pa = ai->values.data() + (a_bcast ? 0 : n * p * q);
        const double* pb = bi->values.data() + (b_bcast ? 0 : n * q * r);
        if (ai->requires_grad)
          detail::matmul_a_bt(dout, pb, ai->grad.data() + (a_bcast ? 0 : n * p * q), p, q, r);
        if (bi->requires_grad)
          detail::matmul_at_b(pa, dout, bi->grad.data() + (b_bcast ? 0 : n * q * r), p, q, r);
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// 1D convolutions (valid, no padding)
// ---------------------------------------------------------------------------

// x: [c_in, t], kernel: [c_out, c_in, w] -> [c_out, t'] with
// t' = floor((t - w) / stride) + 1.
inline Tensor conv1d(const Tensor& x, const Tensor& kernel, std::size_t stride) {
  if (x.rank() != 2 || kernel.rank() != 3) {
    throw contract_error("conv1d: expected x rank 2 and kernel rank 3, got " +
                         shape_str(x.shape()) + " and " + shape_str(kernel.shape()));
  }
  if (stride == 0) throw contract_error("conv1d: stride must be positive");
  const std::size_t c_in = x.shape()[0];
  const std::size_t t = x.shape()[1];
  const std::size_t c_out = kernel.shape()[0];
  const std::size_t w = kernel.shape()[2];
  if (kernel.shape()[1] != c_in) {
    throw contract_error("conv1d: kernel c_in " + std::to_string(kernel.shape()[1]) +
                         " does not match input c_in " + std::to_string(c_in));
  }
  if (w > t) {
    throw data_error("conv1d: input too short, t=" + std::to_string(t) +
                     " < kernel width " + std::to_string(w));
  }
  const std::size_t t_out = (t - w) / stride + 1;
  std::vector<double> out(c_out * t_out, 0.0);
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      const double* krow = kernel.values().data() + (o * c_in + ci) * w;
      const double* xrow = x.values().data() + ci * t;
      double* orow = out.data() + o * t_out;
      for (std::size_t i = 0; i < t_out; ++i) {
        double acc = 0.0;
        const double* xseg = xrow + i * stride;
        for (std::size_t j = 0; j < w; ++j) acc += xseg[j] * krow[j];
        orow[i] += acc;
      }
    }
  Tensor result({c_out, t_out}, std::move(out),
                detail::track(x.requires_grad() || kernel.requires_grad()));
  if (result.requires_grad()) {
    auto xi = x.impl(), ki = kernel.impl(), oi = result.impl();
    detail::record([xi, ki, oi, c_in, c_out, t, w, t_out, stride] {
      for (std::size_t o = 0; o < c_out; ++o)
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          const double* krow = ki->values.data() + (o * c_in + ci) * w;
          const double* xrow = xi->values.data() + ci * t;
          const double* drow = oi->grad.data() + o * t_out;
          double* dx = xi->requires_grad ? xi->grad.data() + ci * t : nullptr;
          double* dk = ki->requires_grad ? ki->grad.data() + (o * c_in + ci) * w : nullptr;
          for (std::size_t i = 0; i < t_out; ++i) {
            const double g = drow[i];
            if (g == 0.0) continue;
            const std::size_t base = i * stride;
            for (std::size_t j = 0; j < w; ++j) {
              if (dx) dx[base + j] += g * krow[j];
              if (dk) dk[j] += g * xrow[base + j];
            }
          }
        }
    });
  }
  return result;
}

// x: [c_in, t], kernel: [c_in, c_out, w] -> [c_out, (t-1)*stride + w].
// Scatter-add semantics: the gradient of conv1d with the same kernel.
inline Tensor conv1d_transpose(const Tensor& x, const Tensor& kernel, std::size_t stride) {
  if (x.rank() != 2 || kernel.rank() != 3) {
    throw contract_error("conv1d_transpose: expected x rank 2 and kernel rank 3, got " +
                         shape_str(x.shape()) + " and " + shape_str(kernel.shape()));
  }
  if (stride == 0) throw contract_error("conv1d_transpose: stride must be positive");
  const std::size_t c_in = x.shape()[0];
  const std::size_t t = x.shape()[1];
  if (t < 1) throw contract_error("conv1d_transpose: empty input");
  if (kernel.shape()[0] != c_in) {
    throw contract_error("conv1d_transpose: kernel c_in " + std::to_string(kernel.shape()[0]) +
                         " does not match input c_in " + std::to_string(c_in));
  }
  const std::size_t c_out = kernel.shape()[1];
  const std::size_t w = kernel.shape()[2];
  const std::size_t t_out = (t - 1) * stride + w;
  std::vector<double> out(c_out * t_out, 0.0);
  for (std::size_t ci = 0; ci < c_in; ++ci)
    for (std::size_t o = 0; o < c_out; ++o) {
      const double* krow = kernel.values().data() + (ci * c_out + o) * w;
      const double* xrow = x.values().data() + ci * t;
      double* orow = out.data() + o * t_out;
      for (std::size_t i = 0; i < t; ++i) {
        const double xv = xrow[i];
        if (xv == 0.0) continue;
        double* oseg = orow + i * stride;
        for (std::size_t j = 0; j < w; ++j) oseg[j] += xv * krow[j];
      }
    }
  Tensor result({c_out, t_out}, std::move(out),
                detail::track(x.requires_grad() || kernel.requires_grad()));
  if (result.requires_grad()) {
    auto xi = x.impl(), ki = kernel.impl(), oi = result.impl();
    detail::record([xi, ki, oi, c_in, c_out, t, w, t_out, stride] {
      for (std::size_t ci = 0; ci < c_in; ++ci)
        for (std::size_t o = 0; o < c_out; ++o) {
          const double* krow = ki->values.data() + (ci * c_out + o) * w;
          const double* xrow = xi->values.data() + ci * t;
          const double* dout = oi->grad.data() + o * t_out;
          double* dx = xi->requires_grad ? xi->grad.data() + ci * t : nullptr;
          double* dk = ki->requires_grad ? ki->grad.data() + (ci * c_out + o) * w : nullptr;
          for (std::size_t i = 0; i < t; ++i) {
            const double* dseg = dout + i * stride;
            if (dx) {
              double acc = 0.0;
              for (std::size_t j = 0; j < w; ++j) acc += dseg[j] * krow[j];
              dx[i] += acc;
            }
            if (dk) {
              const double xv = xrow[i];
              if (xv != 0.0)
                for (std::size_t j = 0; j < w; ++j) dk[j] += xv * dseg[j];
            }
          }
        }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// Softmax / losses
// ---------------------------------------------------------------------------

inline Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw contract_error("softmax: axis out of range");
  for (double v : x.values())
    if (std::isnan(v)) throw numeric_error("softmax: NaN input");
  const std::size_t dim = x.shape()[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.shape()[i];
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape()[i];
  std::vector<double> out(x.size());
  for (std::size_t ou = 0; ou < outer; ++ou)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = ou * dim * inner + in;
      double max_v = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < dim; ++j)
        max_v = std::max(max_v, x.values()[base + j * inner]);
      double sum = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double e = std::exp(x.values()[base + j * inner] - max_v);
        out[base + j * inner] = e;
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (std::size_t j = 0; j < dim; ++j) out[base + j * inner] *= inv;
    }
  Tensor result(x.shape(), std::move(out), detail::track(x.requires_grad()));
  if (result.requires_grad()) {
    auto xi = x.impl();
    auto oi = result.impl();
    detail::record([xi, oi, outer, inner, dim] {
      for (std::size_t ou = 0; ou < outer; ++ou)
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = ou * dim * inner + in;
          double dot = 0.0;
          for (std::size_t j = 0; j < dim; ++j)
            dot += oi->grad[base + j * inner] * oi->values[base + j * inner];
          for (std::size_t j = 0; j < dim; ++j) {
            const std::size_t idx = base + j * inner;
            xi->grad[idx] += (oi->grad[idx] - dot) * oi->values[idx];
          }
        }
    });
  }
  return result;
}

// Sentinel target that excludes a row from the loss.
inline constexpr long kIgnoreIndex = -100;

// logits: [n, classes]; mean negative log-softmax over non-ignored rows.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<long>& targets,
                            long ignore_index = kIgnoreIndex) {
  if (logits.rank() != 2) {
    throw contract_error("cross_entropy: expected rank-2 logits, got " +
                         shape_str(logits.shape()));
  }
  const std::size_t n = logits.shape()[0];
  const std::size_t classes = logits.shape()[1];
  if (targets.size() != n) throw contract_error("cross_entropy: target count mismatch");
  std::size_t live = 0;
  double total = 0.0;
  std::vector<double> log_probs(logits.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.values().data() + i * classes;
    double max_v = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) max_v = std::max(max_v, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(row[c] - max_v);
    const double lse = max_v + std::log(sum);
    for (std::size_t c = 0; c < classes; ++c) log_probs[i * classes + c] = row[c] - lse;
    const long tgt = targets[i];
    if (tgt == ignore_index) continue;
    if (tgt < 0 || static_cast<std::size_t>(tgt) >= classes) {
      throw contract_error("cross_entropy: target " + std::to_string(tgt) +
                           " out of range [0," + std::to_string(classes) + ")");
    }
    total -= log_probs[i * classes + static_cast<std::size_t>(tgt)];
    ++live;
  }
  const double loss = live > 0 ? total / static_cast<double>(live) : 0.0;
  Tensor result({1}, {loss}, detail::track(logits.requires_grad() && live > 0));
  if (result.requires_grad()) {
    auto li = logits.impl();
    auto oi = result.impl();
    auto shared_lp = std::make_shared<std::vector<double>>(std::move(log_probs));
    auto shared_tgt = std::make_shared<std::vector<long>>(targets);
    detail::record([li, oi, shared_lp, shared_tgt, n, classes, live, ignore_index] {
      const double g = oi->grad[0] / static_cast<double>(live);
      for (std::size_t i = 0; i < n; ++i) {
        const long tgt = (*shared_tgt)[i];
        if (tgt == ignore_index) continue;
        for (std::size_t c = 0; c < classes; ++c) {
          double p = std::exp((*shared_lp)[i * classes + c]);
          if (c == static_cast<std::size_t>(tgt)) p -= 1.0;
          li->grad[i * classes + c] += g * p;
        }
      }
    });
  }
  return result;
}

// Mean squared error over all elements, optionally restricted by a mask
// (nonzero = included). With an empty mask vector all elements count.
inline Tensor mse(const Tensor& pred, const Tensor& target,
                  const std::vector<std::uint8_t>& mask = {}) {
  detail::check_same_shape(pred, target, "mse");
  if (!mask.empty() && mask.size() != pred.size())
    throw contract_error("mse: mask size mismatch");
  std::size_t live = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask.empty() && mask[i] == 0) continue;
    const double d = pred.values()[i] - target.values()[i];
    total += d * d;
    ++live;
  }
  const double loss = live > 0 ? total / static_cast<double>(live) : 0.0;
  Tensor result({1}, {loss}, detail::track(pred.requires_grad() && live > 0));
  if (result.requires_grad()) {
    auto pi = pred.impl(), ti = target.impl(), oi = result.impl();
    auto shared_mask = std::make_shared<std::vector<std::uint8_t>>(mask);
    detail::record([pi, ti, oi, shared_mask, live] {
      const double g = 2.0 * oi->grad[0] / static_cast<double>(live);
      for (std::size_t i = 0; i < pi->values.size(); ++i) {
        if (!shared_mask->empty() && (*shared_mask)[i] == 0) continue;
        pi->grad[i] += g * (pi->values[i] - ti->values[i]);
      }
    });
  }
  return result;
}

// Adds a bias row vector [c] to every row of x [n, c].
inline Tensor add_rows(const Tensor& x, const Tensor& bias) {
  if (x.rank() != 2 || bias.rank() != 1 || bias.shape()[0] != x.shape()[1]) {
    throw contract_error("add_rows: expected x [n,c] and bias [c], got " +
                         shape_str(x.shape()) + " and " + shape_str(bias.shape()));
  }
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.values()[i * c + j] + bias.values()[j];
  Tensor result(x.shape(), std::move(out),
                detail::track(x.requires_grad() || bias.requires_grad()));
  if (result.requires_grad()) {
    auto xi = x.impl(), bi = bias.impl(), oi = result.impl();
    detail::record([xi, bi, oi, n, c] {
      if (xi->requires_grad)
        for (std::size_t i = 0; i < n * c; ++i) xi->grad[i] += oi->grad[i];
      if (bi->requires_grad)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) bi->grad[j] += oi->grad[i * c + j];
    });
  }
  return result;
}

}  // namespace skelar
