#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "skelar/checkpoint.hpp"
#include "skelar/encoder.hpp"
#include "skelar/rng.hpp"
#include "skelar/skeleton.hpp"
#include "skelar/tensor.hpp"

namespace skelar {

// Multiply-add counter for the matching layer; bulk-incremented with the
// exact loop-iteration counts of the operations performed.
inline std::uint64_t& matching_flops() {
  thread_local std::uint64_t count = 0;
  return count;
}

enum class MatchMode { kAttention, kSimple };

// Label-matching head. Attention mode holds the three k->d projections of
// the self-attention enhancement; simple mode the single d x k bilinear map.
struct MatchHead {
  MatchMode mode = MatchMode::kAttention;
  std::size_t k = 256, d = 256;
  Tensor Wq, Wk, Wv;  // [k, d], attention mode
  Tensor W;           // [d, k], simple mode

  static MatchHead init(MatchMode mode, std::size_t k, std::size_t d, Rng& rng) {
    MatchHead head;
    head.mode = mode;
    head.k = k;
    head.d = d;
    if (mode == MatchMode::kAttention) {
      head.Wq = detail::glorot_uniform({k, d}, k, d, rng);
      head.Wk = detail::glorot_uniform({k, d}, k, d, rng);
      head.Wv = detail::glorot_uniform({k, d}, k, d, rng);
    } else {
      head.W = detail::glorot_uniform({d, k}, d, k, rng);
    }
    return head;
  }

  std::vector<std::pair<std::string, Tensor>> named_params(const std::string& prefix = "match/") {
    std::vector<std::pair<std::string, Tensor>> out;
    if (mode == MatchMode::kAttention) {
      out.emplace_back(prefix + "Wq", Wq);
      out.emplace_back(prefix + "Wk", Wk);
      out.emplace_back(prefix + "Wv", Wv);
    } else {
      out.emplace_back(prefix + "W", W);
    }
    return out;
  }
};

// Per-activity label representations: the average of few-shot encodings,
// plus the optional cached attention-enhanced vectors.
struct LabelBank {
  std::size_t v = 0, k = 0;
  std::vector<std::string> activities;
  std::vector<std::vector<double>> z;        // per activity, v*k row-major
  std::vector<std::vector<double>> z_cache;  // per activity, d (empty until cached)

  std::size_t size() const { return activities.size(); }
  bool cached() const { return !z_cache.empty(); }

  // Mean over the v joint rows -> [k].
  std::vector<double> mean_over_joints(std::size_t label) const {
    std::vector<double> out(k, 0.0);
    for (std::size_t j = 0; j < v; ++j)
      for (std::size_t c = 0; c < k; ++c) out[c] += z[label][j * k + c];
    const double inv = 1.0 / static_cast<double>(v);
    for (double& x : out) x *= inv;
    return out;
  }
};

// Z_i = mean of the encoded few-shot samples, in input order.
inline LabelBank build_label_bank(
    const std::vector<std::pair<std::string, std::vector<WindowedSample>>>& samples,
    const Encoder& encoder) {
  if (samples.empty()) throw contract_error("build_label_bank: no activities");
  LabelBank bank;
  bank.v = encoder.config().v;
  bank.k = encoder.config().feature_size();
  for (const auto& [activity, shots] : samples) {
    if (shots.empty()) throw contract_error("build_label_bank: activity '" + activity +
                                            "' has no samples");
    std::vector<double> acc(bank.v * bank.k, 0.0);
    for (const WindowedSample& sample : shots) {
      Tensor z = encoder.encode(sample);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += z.values()[i];
    }
    const double inv = 1.0 / static_cast<double>(shots.size());
    for (double& x : acc) x *= inv;
    bank.activities.push_back(activity);
    bank.z.push_back(std::move(acc));
  }
  return bank;
}

// ---------------------------------------------------------------------------
// Attention enhancement
// ---------------------------------------------------------------------------

// Inference path: single-head self-attention over the v joint rows with
// scale 1/sqrt(d), summed over the output rows. Counts multiply-adds.
inline std::vector<double> attention_enhance(const std::vector<double>& zi, std::size_t v,
                                             std::size_t k, const MatchHead& head) {
  if (head.mode != MatchMode::kAttention)
    throw contract_error("attention_enhance: head is not in attention mode");
  if (zi.size() != v * k) throw contract_error("attention_enhance: Z_i size mismatch");
  const std::size_t d = head.d;
  auto project = [&](const Tensor& w) {
    std::vector<double> out(v * d, 0.0);
    for (std::size_t i = 0; i < v; ++i)
      for (std::size_t c = 0; c < k; ++c) {
        const double x = zi[i * k + c];
        if (x == 0.0) continue;
        const double* wrow = w.values().data() + c * d;
        double* orow = out.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) orow[j] += x * wrow[j];
      }
    return out;
  };
  const std::vector<double> q = project(head.Wq);
  const std::vector<double> key = project(head.Wk);
  const std::vector<double> val = project(head.Wv);
  matching_flops() += 3ull * v * k * d;
  const double scl = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> attn(v * v, 0.0);
  for (std::size_t i = 0; i < v; ++i) {
    double max_s = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < v; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += q[i * d + c] * key[j * d + c];
      attn[i * v + j] = s * scl;
      max_s = std::max(max_s, attn[i * v + j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      attn[i * v + j] = std::exp(attn[i * v + j] - max_s);
      sum += attn[i * v + j];
    }
    for (std::size_t j = 0; j < v; ++j) attn[i * v + j] /= sum;
  }
  matching_flops() += 1ull * v * v * d;
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < v; ++i)
    for (std::size_t j = 0; j < v; ++j) {
      const double a = attn[i * v + j];
      for (std::size_t c = 0; c < d; ++c) out[c] += a * val[j * d + c];
    }
  matching_flops() += 1ull * v * v * d + 1ull * v * d;
  return out;
}

// Differentiable path used while training the head: gradients reach
// Wq/Wk/Wv (and anything upstream of them), never the frozen Z_i.
inline Tensor attention_enhance_t(const Tensor& zi, const MatchHead& head) {
  if (head.mode != MatchMode::kAttention)
    throw contract_error("attention_enhance_t: head is not in attention mode");
  const std::size_t v = zi.shape()[0];
  const double scl = 1.0 / std::sqrt(static_cast<double>(head.d));
  Tensor q = matmul(zi, head.Wq);
  Tensor key = matmul(zi, head.Wk);
  Tensor val = matmul(zi, head.Wv);
  Tensor attn = softmax(scale(matmul(q, transpose2d(key)), scl), 1);
  Tensor out = matmul(attn, val);  // [v, d]
  return reshape(scale(mean_axis(out, 0), static_cast<double>(v)), {1, head.d});  // row sum
}

// Fills the cached attention-enhanced vectors; inference then no longer
// touches the projections. A no-op for simple mode.
inline void cache_bank(LabelBank& bank, const MatchHead& head) {
  if (head.mode != MatchMode::kAttention) return;
  bank.z_cache.clear();
  for (std::size_t i = 0; i < bank.size(); ++i)
    bank.z_cache.push_back(attention_enhance(bank.z[i], bank.v, bank.k, head));
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

// Per-activity similarity scores for one query feature. Uses the cache when
// present; per-query cost is then |labels| * d multiply-adds.
inline std::vector<double> score(const std::vector<double>& y, const LabelBank& bank,
                                 const MatchHead& head) {
  if (bank.size() == 0) throw contract_error("score: empty label bank");
  if (y.size() != head.d) {
    throw contract_error("score: feature size " + std::to_string(y.size()) +
                         " does not match head d=" + std::to_string(head.d));
  }
  std::vector<double> scores(bank.size(), 0.0);
  if (head.mode == MatchMode::kAttention) {
    for (std::size_t i = 0; i < bank.size(); ++i) {
      const std::vector<double> zp = bank.cached()
                                         ? bank.z_cache[i]
                                         : attention_enhance(bank.z[i], bank.v, bank.k, head);
      double s = 0.0;
      for (std::size_t c = 0; c < head.d; ++c) s += y[c] * zp[c];
      scores[i] = s;
      matching_flops() += head.d;
    }
  } else {
    std::vector<double> yw(head.k, 0.0);
    for (std::size_t r = 0; r < head.d; ++r) {
      const double x = y[r];
      if (x == 0.0) continue;
      const double* wrow = head.W.values().data() + r * head.k;
      for (std::size_t c = 0; c < head.k; ++c) yw[c] += x * wrow[c];
    }
    matching_flops() += 1ull * head.d * head.k;
    for (std::size_t i = 0; i < bank.size(); ++i) {
      const std::vector<double> zbar = bank.mean_over_joints(i);
      double s = 0.0;
      for (std::size_t c = 0; c < head.k; ++c) s += yw[c] * zbar[c];
      scores[i] = s;
      matching_flops() += head.k;
    }
  }
  return scores;
}

// Ties broken toward the lowest label index.
inline std::size_t argmax_label(const std::vector<double>& scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

// Differentiable similarity scores for downstream training: y is the
// backbone feature [1, d]; returns [1, labels]. The bank is frozen.
inline Tensor score_t(const Tensor& y, const LabelBank& bank, const MatchHead& head) {
  if (bank.size() == 0) throw contract_error("score_t: empty label bank");
  if (head.mode == MatchMode::kAttention) {
    std::vector<Tensor> rows;
    rows.reserve(bank.size());
    for (std::size_t i = 0; i < bank.size(); ++i) {
      Tensor zi({bank.v, bank.k}, bank.z[i], false);
      rows.push_back(attention_enhance_t(zi, head));
    }
    Tensor bank_mat = concat(rows, 0);  // [labels, d]
    return matmul(y, transpose2d(bank_mat));
  }
  std::vector<double> means;
  means.reserve(bank.size() * bank.k);
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const auto m = bank.mean_over_joints(i);
    means.insert(means.end(), m.begin(), m.end());
  }
  Tensor mean_mat({bank.size(), bank.k}, std::move(means), false);
  return matmul(matmul(y, head.W), transpose2d(mean_mat));
}

// ---------------------------------------------------------------------------
// Bank persistence (checkpoint format)
// ---------------------------------------------------------------------------

inline void save_label_bank(const std::filesystem::path& path, const LabelBank& bank) {
  std::vector<CheckpointRecord> records;
  records.push_back(CheckpointRecord{
      "bank/meta", {2}, {static_cast<double>(bank.v), static_cast<double>(bank.k)}});
  for (std::size_t i = 0; i < bank.size(); ++i) {
    records.push_back(CheckpointRecord{"bank/" + bank.activities[i] + "/Z",
                                       {bank.v, bank.k}, bank.z[i]});
    if (bank.cached()) {
      records.push_back(CheckpointRecord{"bank/" + bank.activities[i] + "/Zp",
                                         {bank.z_cache[i].size()}, bank.z_cache[i]});
    }
  }
  save_checkpoint(path, records);
}

inline LabelBank label_bank_from_records(const std::vector<CheckpointRecord>& records) {
  LabelBank bank;
  const CheckpointRecord& meta = find_record(records, "bank/meta");
  bank.v = static_cast<std::size_t>(meta.values[0]);
  bank.k = static_cast<std::size_t>(meta.values[1]);
  bool any_cache = false;
  for (const CheckpointRecord& rec : records) {
    if (rec.name.size() > 7 && rec.name.rfind("bank/", 0) == 0 &&
        rec.name.compare(rec.name.size() - 2, 2, "/Z") == 0) {
      bank.activities.push_back(rec.name.substr(5, rec.name.size() - 7));
      bank.z.push_back(rec.values);
    }
    if (rec.name.size() > 8 && rec.name.compare(rec.name.size() - 3, 3, "/Zp") == 0)
      any_cache = true;
  }
  if (any_cache) {
    for (const std::string& act : bank.activities)
      bank.z_cache.push_back(find_record(records, "bank/" + act + "/Zp").values);
  }
  return bank;
}

inline LabelBank load_label_bank(const std::filesystem::path& path) {
  return label_bank_from_records(load_checkpoint(path));
}

}  // namespace skelar
