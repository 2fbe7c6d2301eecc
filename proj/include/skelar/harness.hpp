#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "skelar/backbones.hpp"
#include "skelar/matching.hpp"
#include "skelar/optim.hpp"
#include "skelar/rng.hpp"
#include "skelar/synth.hpp"
#include "skelar/tensor.hpp"

namespace skelar {

// ---------------------------------------------------------------------------
// Sensor datasets and splits
// ---------------------------------------------------------------------------

struct SensorSample {
  std::vector<double> series;  // row-major [t, channels]
  std::size_t label = 0;
  std::string subject_id;
};

struct SensorDataset {
  std::size_t t = 0, channels = 0;
  std::vector<std::string> label_names;
  std::vector<SensorSample> samples;

  std::size_t label_index(const std::string& name) const {
    for (std::size_t i = 0; i < label_names.size(); ++i)
      if (label_names[i] == name) return i;
    throw contract_error("unknown label: " + name);
  }
};

// Virtual-IMU dataset derived from a labeled skeleton corpus.
inline SensorDataset make_imu_dataset(const std::vector<WindowedSample>& corpus,
                                      double noise_sigma, std::uint64_t seed,
                                      const std::vector<std::size_t>& mounts = default_imu_mounts()) {
  if (corpus.empty()) throw contract_error("make_imu_dataset: empty corpus");
  SensorDataset ds;
  ds.t = WindowedSample::kFrames;
  ds.channels = mounts.size() * 6;
  for (const WindowedSample& s : corpus) {
    if (s.activity_label.empty()) throw contract_error("make_imu_dataset: unlabeled sample");
    if (std::find(ds.label_names.begin(), ds.label_names.end(), s.activity_label) ==
        ds.label_names.end())
      ds.label_names.push_back(s.activity_label);
  }
  std::sort(ds.label_names.begin(), ds.label_names.end());
  Rng rng(seed);
  for (const WindowedSample& s : corpus) {
    SensorSample sensor;
    sensor.series = synth_imu_from_skeleton(s, mounts, noise_sigma, rng.next_u64());
    sensor.label = ds.label_index(s.activity_label);
    sensor.subject_id = s.subject_id;
    ds.samples.push_back(std::move(sensor));
  }
  return ds;
}

// 10% test split, then 10% of the remainder as validation, seeded shuffle.
struct DatasetSplit {
  std::vector<std::size_t> train, val, test;
  std::uint64_t hash = 0;
};

inline DatasetSplit split_dataset(std::size_t n, std::uint64_t seed) {
  if (n < 3) throw contract_error("split_dataset: need at least 3 samples");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed ^ 0x51e17eedULL);
  rng.shuffle(order);
  DatasetSplit split;
  const std::size_t n_test = std::max<std::size_t>(1, n / 10);
  const std::size_t n_val = std::max<std::size_t>(1, (n - n_test) / 10);
  split.test.assign(order.begin(), order.begin() + static_cast<long>(n_test));
  split.val.assign(order.begin() + static_cast<long>(n_test),
                   order.begin() + static_cast<long>(n_test + n_val));
  split.train.assign(order.begin() + static_cast<long>(n_test + n_val), order.end());
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::size_t x) {
    for (int b = 0; b < 8; ++b) {
      h ^= (x >> (8 * b)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  for (std::size_t i : split.train) mix(i);
  mix(SIZE_MAX);
  for (std::size_t i : split.val) mix(i);
  mix(SIZE_MAX);
  for (std::size_t i : split.test) mix(i);
  split.hash = h;
  return split;
}

// ---------------------------------------------------------------------------
// Representation providers
// ---------------------------------------------------------------------------

enum class ProviderKind { kSkeleton, kOneHot, kRandom };

inline ProviderKind parse_provider(const std::string& name) {
  if (name == "skeleton") return ProviderKind::kSkeleton;
  if (name == "one-hot" || name == "onehot") return ProviderKind::kOneHot;
  if (name == "random") return ProviderKind::kRandom;
  throw data_error("unknown provider '" + name + "' (expected skeleton, one-hot or random)");
}

inline const char* provider_name(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::kSkeleton: return "skeleton";
    case ProviderKind::kOneHot: return "one-hot";
    default: return "random";
  }
}

inline constexpr std::size_t kRandomProviderDim = 256;

// Maps a backbone feature to per-label logits. Skeleton mode scores against
// the frozen label bank through a matching head; one-hot mode is a plain
// linear classification head; random mode scores against fixed seeded
// random vectors.
class Provider {
 public:
  Provider() = default;

  static Provider skeleton(LabelBank bank, MatchMode mode, std::size_t d, Rng& rng) {
    Provider p;
    p.kind_ = ProviderKind::kSkeleton;
    p.bank_ = std::move(bank);
    // normalize the provider's bank copy to unit RMS: raw encoder features
    // can be orders of magnitude above the backbone feature scale, which
    // saturates the matching logits and stalls optimization
    double sum_sq = 0.0;
    std::size_t count = 0;
    for (const std::vector<double>& zi : p.bank_.z) {
      for (double x : zi) sum_sq += x * x;
      count += zi.size();
    }
    const double rms = count > 0 ? std::sqrt(sum_sq / static_cast<double>(count)) : 0.0;
    if (rms > 0.0)
      for (std::vector<double>& zi : p.bank_.z)
        for (double& x : zi) x /= rms;
    p.bank_.z_cache.clear();  // any cache was built from the unscaled bank
    p.head_ = MatchHead::init(mode, p.bank_.k, d, rng);
    return p;
  }

  static Provider one_hot(std::vector<std::string> labels, std::size_t d, Rng& rng) {
    Provider p;
    p.kind_ = ProviderKind::kOneHot;
    p.labels_ = std::move(labels);
    p.linear_w_ = detail::glorot_uniform({d, p.labels_.size()}, d, p.labels_.size(), rng);
    p.linear_b_ = Tensor::zeros({p.labels_.size()}, true);
    return p;
  }

  static Provider random(std::vector<std::string> labels, std::size_t d, Rng& rng) {
    Provider p;
    p.kind_ = ProviderKind::kRandom;
    p.labels_ = std::move(labels);
    std::vector<double> vecs(p.labels_.size() * kRandomProviderDim);
    for (double& x : vecs) x = rng.normal();
    p.random_ = Tensor({p.labels_.size(), kRandomProviderDim}, std::move(vecs), false);
    // the backbone feature size d is projected onto the random vectors with
    // a fixed (untrained) seeded map when d differs from their dimension
    if (d != kRandomProviderDim) {
      std::vector<double> proj(d * kRandomProviderDim);
      for (double& x : proj) x = rng.normal() / std::sqrt(static_cast<double>(d));
      p.random_proj_ = Tensor({d, kRandomProviderDim}, std::move(proj), false);
    }
    return p;
  }

  ProviderKind kind() const { return kind_; }
  const LabelBank& bank() const { return bank_; }
  MatchHead& head() { return head_; }
  const MatchHead& head() const { return head_; }

  std::vector<std::string> label_names() const {
    return kind_ == ProviderKind::kSkeleton ? bank_.activities : labels_;
  }

  // y: [1, d] -> logits [1, labels]
  Tensor logits(const Tensor& y) const {
    switch (kind_) {
      case ProviderKind::kSkeleton:
        return score_t(y, bank_, head_);
      case ProviderKind::kOneHot:
        return add_rows(matmul(y, linear_w_), linear_b_);
      default: {
        Tensor q = random_proj_.defined() ? matmul(y, random_proj_) : y;
        return matmul(q, transpose2d(random_));
      }
    }
  }

  std::vector<std::pair<std::string, Tensor>> named_params(const std::string& prefix = "provider/") {
    switch (kind_) {
      case ProviderKind::kSkeleton:
        return head_.named_params(prefix);
      case ProviderKind::kOneHot:
        return {{prefix + "W", linear_w_}, {prefix + "b", linear_b_}};
      default:
        return {};  // random vectors are fixed
    }
  }

 private:
  ProviderKind kind_ = ProviderKind::kOneHot;
  LabelBank bank_;
  MatchHead head_;
  std::vector<std::string> labels_;
  Tensor linear_w_, linear_b_;
  Tensor random_;
  Tensor random_proj_;
};

// ---------------------------------------------------------------------------
// Downstream training
// ---------------------------------------------------------------------------

struct DownstreamConfig {
  BackboneConfig backbone;
  std::size_t epochs = 100;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct DownstreamEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct DownstreamResult {
  std::vector<DownstreamEpoch> metrics;
  double best_val_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::uint64_t split_hash = 0;
  Backbone backbone;
  Provider provider;
};

namespace harness_detail {

inline Tensor sample_tensor(const SensorDataset& ds, std::size_t idx) {
  return Tensor({ds.t, ds.channels}, ds.samples[idx].series, false);
}

inline double accuracy_on(const SensorDataset& ds, const std::vector<std::size_t>& indices,
                          const Backbone& backbone, const Provider& provider) {
  if (indices.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t idx : indices) {
    Tensor logits = provider.logits(backbone.forward(sample_tensor(ds, idx)));
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.size(); ++c)
      if (logits.values()[c] > logits.values()[best]) best = c;
    if (best == ds.samples[idx].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

inline std::vector<std::vector<double>> snapshot(std::vector<Tensor>& params) {
  std::vector<std::vector<double>> out;
  for (Tensor& p : params) out.push_back(p.values());
  return out;
}

inline void restore(std::vector<Tensor>& params, const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].values() = snap[i];
}

}  // namespace harness_detail

// Full-shot protocol: train on the 80% split, keep the checkpoint with the
// best validation accuracy, report its test accuracy.
inline DownstreamResult train_downstream(const SensorDataset& dataset, const DatasetSplit& split,
                                         const DownstreamConfig& config, Provider provider,
                                         std::vector<DownstreamEpoch>* metrics_out = nullptr) {
  {
    auto provider_labels = provider.label_names();
    std::sort(provider_labels.begin(), provider_labels.end());
    auto ds_labels = dataset.label_names;
    std::sort(ds_labels.begin(), ds_labels.end());
    if (provider_labels != ds_labels)
      throw contract_error("train_downstream: provider and dataset label sets differ");
  }
  DownstreamResult result;
  result.split_hash = split.hash;
  Rng rng(config.seed ^ 0xd05edULL);
  BackboneConfig bb = config.backbone;
  bb.channels = dataset.channels;
  result.backbone = Backbone::init(bb, rng);
  result.provider = std::move(provider);
  std::vector<Tensor> params = result.backbone.params();
  for (auto& [name, t] : result.provider.named_params()) params.push_back(t);
  Adam opt(params, config.lr);
  std::vector<std::vector<double>> best_params = harness_detail::snapshot(params);
  double best_val = -1.0;
  std::vector<std::size_t> order = split.train;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(start + config.batch_size, order.size());
      Tape tape;
      Tensor batch_loss = Tensor::zeros({1});
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t idx = order[i];
        Tensor logits =
            result.provider.logits(result.backbone.forward(harness_detail::sample_tensor(dataset, idx)));
        batch_loss = add(batch_loss,
                         cross_entropy(logits, {static_cast<long>(dataset.samples[idx].label)}));
      }
      batch_loss = scale(batch_loss, 1.0 / static_cast<double>(end - start));
      if (std::isnan(batch_loss.item())) throw numeric_error("downstream training: NaN loss");
      loss_sum += batch_loss.item();
      backward(batch_loss);
      opt.step();
      ++batches;
    }
    DownstreamEpoch row;
    row.epoch = epoch;
    row.train_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
    row.val_accuracy =
        harness_detail::accuracy_on(dataset, split.val, result.backbone, result.provider);
    // >= keeps the most-trained model among validation ties, which matters
    // when the validation split is only a handful of samples
    if (row.val_accuracy >= best_val) {
      best_val = row.val_accuracy;
      best_params = harness_detail::snapshot(params);
    }
    result.metrics.push_back(row);
    if (metrics_out) metrics_out->push_back(row);
  }
  harness_detail::restore(params, best_params);
  result.best_val_accuracy = best_val;
  result.test_accuracy =
      harness_detail::accuracy_on(dataset, split.test, result.backbone, result.provider);
  return result;
}

// Few-shot protocol: per seed, resample `shots` training examples per class,
// train, keep the checkpoint with the lowest training loss, evaluate on the
// shared test split. Skeleton matching runs without attention here.
struct FewShotResult {
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  std::vector<double> per_seed;
};

inline DownstreamResult train_with_lowest_loss(const SensorDataset& dataset,
                                               const DatasetSplit& split,
                                               const DownstreamConfig& config, Provider provider);

template <typename ProviderFactory>
inline FewShotResult few_shot_protocol(const SensorDataset& dataset, std::size_t shots,
                                       const DownstreamConfig& base_config,
                                       ProviderFactory make_provider, std::size_t seeds = 5) {
  FewShotResult result;
  for (std::size_t s = 0; s < seeds; ++s) {
    const std::uint64_t seed = base_config.seed + s;
    DatasetSplit split = split_dataset(dataset.samples.size(), seed);
    // resample shots per class from the training portion
    std::map<std::size_t, std::vector<std::size_t>> per_class;
    for (std::size_t idx : split.train) per_class[dataset.samples[idx].label].push_back(idx);
    Rng rng(seed ^ 0xf3375ULL);
    std::vector<std::size_t> few;
    for (auto& [label, indices] : per_class) {
      if (indices.size() < shots)
        throw contract_error("few_shot_protocol: class " + std::to_string(label) + " has only " +
                             std::to_string(indices.size()) + " training samples for " +
                             std::to_string(shots) + " shots");
      rng.shuffle(indices);
      few.insert(few.end(), indices.begin(), indices.begin() + static_cast<long>(shots));
    }
    std::sort(few.begin(), few.end());
    DatasetSplit few_split = split;
    few_split.train = few;
    DownstreamConfig config = base_config;
    config.seed = seed;
    DownstreamResult run = train_with_lowest_loss(dataset, few_split, config, make_provider(seed));
    result.per_seed.push_back(run.test_accuracy);
  }
  double mean = 0.0;
  for (double a : result.per_seed) mean += a;
  mean /= static_cast<double>(result.per_seed.size());
  double var = 0.0;
  for (double a : result.per_seed) var += (a - mean) * (a - mean);
  var /= static_cast<double>(result.per_seed.size());
  result.mean_accuracy = mean;
  result.std_accuracy = std::sqrt(var);
  return result;
}

// Variant of train_downstream selecting the checkpoint with the lowest
// training loss instead of the best validation accuracy.
inline DownstreamResult train_with_lowest_loss(const SensorDataset& dataset,
                                               const DatasetSplit& split,
                                               const DownstreamConfig& config,
                                               Provider provider) {
  DownstreamResult result;
  result.split_hash = split.hash;
  Rng rng(config.seed ^ 0xd05edULL);
  BackboneConfig bb = config.backbone;
  bb.channels = dataset.channels;
  result.backbone = Backbone::init(bb, rng);
  result.provider = std::move(provider);
  std::vector<Tensor> params = result.backbone.params();
  for (auto& [name, t] : result.provider.named_params()) params.push_back(t);
  Adam opt(params, config.lr);
  std::vector<std::vector<double>> best_params = harness_detail::snapshot(params);
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order = split.train;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(start + config.batch_size, order.size());
      Tape tape;
      Tensor batch_loss = Tensor::zeros({1});
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t idx = order[i];
        Tensor logits =
            result.provider.logits(result.backbone.forward(harness_detail::sample_tensor(dataset, idx)));
        batch_loss = add(batch_loss,
                         cross_entropy(logits, {static_cast<long>(dataset.samples[idx].label)}));
      }
      batch_loss = scale(batch_loss, 1.0 / static_cast<double>(end - start));
      if (std::isnan(batch_loss.item())) throw numeric_error("downstream training: NaN loss");
      loss_sum += batch_loss.item();
      backward(batch_loss);
      opt.step();
      ++batches;
    }
    DownstreamEpoch row;
    row.epoch = epoch;
    row.train_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
    if (row.train_loss < best_loss) {
      best_loss = row.train_loss;
      best_params = harness_detail::snapshot(params);
    }
    result.metrics.push_back(row);
  }
  harness_detail::restore(params, best_params);
  result.test_accuracy =
      harness_detail::accuracy_on(dataset, split.test, result.backbone, result.provider);
  return result;
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

inline void write_downstream_csv(const std::filesystem::path& path,
                                 const std::vector<DownstreamEpoch>& metrics) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot open metrics file: " + path.string());
  out << "epoch,train_loss,val_accuracy\n";
  for (const DownstreamEpoch& m : metrics)
    out << m.epoch << "," << m.train_loss << "," << m.val_accuracy << "\n";
}

inline void write_summary_json(const std::filesystem::path& path, const std::string& provider,
                               const std::string& backbone, double mean_acc, double std_acc,
                               const std::vector<double>& per_seed,
                               std::uint64_t split_hash = 0) {
  nlohmann::json doc;
  doc["provider"] = provider;
  doc["backbone"] = backbone;
  doc["mean_acc"] = mean_acc;
  doc["std_acc"] = std_acc;
  doc["per_seed"] = per_seed;
  doc["split_hash"] = split_hash;
  std::ofstream out(path);
  if (!out) throw data_error("cannot open summary file: " + path.string());
  out << doc.dump(2) << "\n";
}

// Per-joint attention mass per activity: the column mass of the attention
// matrix used by attention_enhance, averaged over query rows.
inline void write_attention_heatmap(const std::filesystem::path& path, const LabelBank& bank,
                                    const MatchHead& head) {
  if (head.mode != MatchMode::kAttention)
    throw contract_error("attention heatmap requires an attention-mode head");
  std::ofstream out(path);
  if (!out) throw data_error("cannot open heatmap file: " + path.string());
  out << "activity,joint,attention_mass\n";
  const std::size_t v = bank.v, k = bank.k, d = head.d;
  for (std::size_t label = 0; label < bank.size(); ++label) {
    const std::vector<double>& zi = bank.z[label];
    auto project = [&](const Tensor& w) {
      std::vector<double> p(v * d, 0.0);
      for (std::size_t i = 0; i < v; ++i)
        for (std::size_t c = 0; c < k; ++c)
          for (std::size_t j = 0; j < d; ++j)
            p[i * d + j] += zi[i * k + c] * w.values()[c * d + j];
      return p;
    };
    const auto q = project(head.Wq), key = project(head.Wk);
    std::vector<double> mass(v, 0.0);
    const double scl = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t i = 0; i < v; ++i) {
      std::vector<double> row(v, 0.0);
      double max_s = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < v; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += q[i * d + c] * key[j * d + c];
        row[j] = s * scl;
        max_s = std::max(max_s, row[j]);
      }
      double sum = 0.0;
      for (double& x : row) {
        x = std::exp(x - max_s);
        sum += x;
      }
      for (std::size_t j = 0; j < v; ++j) mass[j] += row[j] / sum;
    }
    for (std::size_t j = 0; j < v; ++j)
      out << bank.activities[label] << "," << topology().joint_names()[j] << ","
          << mass[j] / static_cast<double>(v) << "\n";
  }
}

}  // namespace skelar
