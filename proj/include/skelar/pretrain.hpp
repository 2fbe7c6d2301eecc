#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "skelar/angles.hpp"
#include "skelar/checkpoint.hpp"
#include "skelar/decoder.hpp"
#include "skelar/encoder.hpp"
#include "skelar/optim.hpp"
#include "skelar/rng.hpp"
#include "skelar/skeleton.hpp"
#include "skelar/tensor.hpp"
#include "skelar/topology.hpp"

namespace skelar {

// ---------------------------------------------------------------------------
// Joint dropout
// ---------------------------------------------------------------------------

// Expected fraction of joints zeroed (sampled nodes plus their direct
// adjacency) when each node is sampled independently with probability
// lambda: a joint survives iff neither it nor any neighbor was sampled.
inline double expected_dropout_fraction(double lambda) {
  const SkeletonTopology& topo = topology();
  double dropped = 0.0;
  for (std::size_t j = 0; j < SkeletonTopology::kNumJoints; ++j) {
    const double keep = std::pow(1.0 - lambda, static_cast<double>(1 + topo.degree(j)));
    dropped += 1.0 - keep;
  }
  return dropped / static_cast<double>(SkeletonTopology::kNumJoints);
}

// Solves for the per-node sampling probability that hits a target expected
// dropped fraction (bisection; the expectation is monotone in lambda).
inline double lambda_for_dropout_fraction(double target_fraction) {
  if (target_fraction <= 0.0) return 0.0;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (expected_dropout_fraction(mid) < target_fraction) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Progressive schedule: target total-drop fractions step up at fixed epochs.
inline double dropout_target_for_epoch(std::size_t epoch) {
  if (epoch >= 800) return 0.20;
  if (epoch >= 600) return 0.15;
  if (epoch >= 400) return 0.10;
  if (epoch >= 200) return 0.05;
  return 0.0;
}

// Samples nodes with probability lambda and zeroes them together with their
// direct adjacency. Returns a per-joint keep mask applied at every time step.
inline std::vector<std::uint8_t> joint_dropout(double lambda, Rng& rng) {
  if (lambda < 0.0 || lambda >= 1.0) throw contract_error("joint_dropout: lambda outside [0,1)");
  const SkeletonTopology& topo = topology();
  std::vector<std::uint8_t> mask(SkeletonTopology::kNumJoints, 1);
  for (std::size_t j = 0; j < SkeletonTopology::kNumJoints; ++j) {
    if (lambda > 0.0 && rng.bernoulli(lambda)) {
      mask[j] = 0;
      for (std::size_t n : topo.neighbors(j)) mask[n] = 0;
    }
  }
  return mask;
}

// Uniform over the eight essential limb joints; one per batch.
inline std::size_t sample_essential_joint(Rng& rng) {
  const auto& essential = topology().essential_joints();
  return essential[rng.uniform_int(essential.size())];
}

// ---------------------------------------------------------------------------
// Pretraining
// ---------------------------------------------------------------------------

enum class PretrainObjective { kCoarseAngle, kFineAngle, kCoordinate };

inline PretrainObjective parse_objective(const std::string& name) {
  if (name == "coarse") return PretrainObjective::kCoarseAngle;
  if (name == "fine") return PretrainObjective::kFineAngle;
  if (name == "coordinate") return PretrainObjective::kCoordinate;
  throw data_error("unknown objective '" + name + "' (expected coarse, fine or coordinate)");
}

inline const char* objective_name(PretrainObjective obj) {
  switch (obj) {
    case PretrainObjective::kCoarseAngle: return "coarse";
    case PretrainObjective::kFineAngle: return "fine";
    default: return "coordinate";
  }
}

struct PretrainConfig {
  std::size_t epochs = 1000;
  double lr = 1e-2;
  std::size_t batch_size = 16;
  std::size_t m = 6;
  std::uint64_t seed = 0;
  bool signed_angles = false;
  PretrainObjective objective = PretrainObjective::kCoarseAngle;
  EncoderConfig encoder = EncoderConfig::defaults();
  std::size_t decoder_width = 128;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;
  std::array<double, 3> head_accuracy{};  // coarse objective only
};

// Precomputed angle targets per (sample, essential joint).
class AngleTargetCache {
 public:
  AngleTargetCache(const std::vector<WindowedSample>* corpus, std::size_t m, bool signed_mode)
      : corpus_(corpus), m_(m), signed_mode_(signed_mode) {}

  const AngleTargetSet& get(std::size_t sample_idx, std::size_t joint) {
    auto key = std::make_pair(sample_idx, joint);
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      it = cache_.emplace(key, joint_angle_targets((*corpus_)[sample_idx], joint, m_, signed_mode_))
               .first;
    }
    return it->second;
  }

 private:
  const std::vector<WindowedSample>* corpus_;
  std::size_t m_;
  bool signed_mode_;
  std::map<std::pair<std::size_t, std::size_t>, AngleTargetSet> cache_;
};

class PretrainRun {
 public:
  PretrainRun(PretrainConfig config, const std::vector<WindowedSample>& corpus)
      : config_(std::move(config)),
        corpus_(&corpus),
        rng_(config_.seed),
        targets_(&corpus, config_.m, config_.signed_angles) {
    if (corpus.empty()) throw contract_error("pretrain: empty corpus");
    Rng init_rng(config_.seed ^ 0x5eed5eedULL);
    encoder_ = Encoder::init(config_.encoder, init_rng);
    const std::size_t k = config_.encoder.feature_size();
    if (config_.objective == PretrainObjective::kCoordinate) {
      coord_decoder_ = CoordDecoder::init(config_.encoder.v, k, config_.decoder_width, init_rng);
    } else {
      angle_decoder_ = AngleDecoder::init(k, config_.m, config_.decoder_width,
                                          config_.objective == PretrainObjective::kFineAngle,
                                          init_rng);
    }
    params_ = collect_all_params();
  }

  const PretrainConfig& config() const { return config_; }
  Encoder& encoder() { return encoder_; }
  AngleDecoder& angle_decoder() { return angle_decoder_; }
  std::size_t epoch() const { return epoch_; }

  // One epoch: shuffled batches, per-batch joint dropout, one essential joint
  // per batch, objective-specific loss, SGD step. Returns the epoch metrics.
  EpochMetrics run_epoch() {
    const double lambda = lambda_for_dropout_fraction(dropout_target_for_epoch(epoch_));
    std::vector<std::size_t> order(corpus_->size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng_.shuffle(order);
    EpochMetrics metrics;
    metrics.epoch = epoch_;
    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::array<std::size_t, 3> head_correct{};
    std::array<std::size_t, 3> head_total{};
    for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
      const std::size_t end = std::min(start + config_.batch_size, order.size());
      const std::size_t joint = sample_essential_joint(rng_);
      Tape tape;
      Tensor batch_loss = Tensor::zeros({1});
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t idx = order[i];
        const auto mask = joint_dropout(lambda, rng_);
        Tensor z = encoder_.encode((*corpus_)[idx], &mask);
        Tensor sample_loss = objective_loss(z, idx, joint, &head_correct, &head_total);
        batch_loss = add(batch_loss, sample_loss);
      }
      batch_loss = scale(batch_loss, 1.0 / static_cast<double>(end - start));
      loss_sum += batch_loss.item();
      if (std::isnan(batch_loss.item())) throw numeric_error("pretrain: NaN loss");
      backward(batch_loss);
      sgd_step(params_, config_.lr);
      ++batches;
    }
    metrics.loss = loss_sum / static_cast<double>(batches);
    for (std::size_t h = 0; h < 3; ++h)
      metrics.head_accuracy[h] = head_total[h] > 0
                                     ? static_cast<double>(head_correct[h]) /
                                           static_cast<double>(head_total[h])
                                     : 0.0;
    ++epoch_;
    return metrics;
  }

  // Coarse-angle classification accuracy on a held-out corpus, pooled over
  // the three heads and all essential joints, ignoring degenerate frames.
  double evaluate_accuracy(const std::vector<WindowedSample>& held_out) {
    if (config_.objective != PretrainObjective::kCoarseAngle)
      throw contract_error("evaluate_accuracy: coarse objective only");
    std::size_t correct = 0, total = 0;
    for (const WindowedSample& sample : held_out) {
      Tensor z = encoder_.encode(sample);
      for (std::size_t joint : topology().essential_joints()) {
        const AngleTargetSet targets =
            joint_angle_targets(sample, joint, config_.m, config_.signed_angles);
        const auto heads = angle_decoder_.decode(z, joint);
        for (std::size_t h = 0; h < 3; ++h) {
          const std::size_t classes = heads[h].shape()[1];
          for (std::size_t f = 0; f < WindowedSample::kFrames; ++f) {
            const long tgt = targets.class_at(h, f);
            if (tgt == kAngleIgnore) continue;
            const double* row = heads[h].values().data() + f * classes;
            std::size_t best = 0;
            for (std::size_t c = 1; c < classes; ++c)
              if (row[c] > row[best]) best = c;
            if (static_cast<long>(best) == tgt) ++correct;
            ++total;
          }
        }
      }
    }
    return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  }

  std::vector<CheckpointRecord> checkpoint_records() {
    std::vector<CheckpointRecord> records;
    for (auto& [name, t] : named_params()) records.push_back(record_of(name, t));
    const auto state = rng_.state();
    CheckpointRecord rng_rec;
    rng_rec.name = "meta/rng_state";
    rng_rec.dims = {4};
    rng_rec.values.resize(4);
    std::memcpy(rng_rec.values.data(), state.data(), 4 * sizeof(double));
    records.push_back(std::move(rng_rec));
    records.push_back(CheckpointRecord{"meta/epoch", {1}, {static_cast<double>(epoch_)}});
    records.push_back(CheckpointRecord{"meta/m", {1}, {static_cast<double>(config_.m)}});
    return records;
  }

  void restore(const std::vector<CheckpointRecord>& records) {
    for (auto& [name, t] : named_params()) load_into(records, name, t);
    const CheckpointRecord& rng_rec = find_record(records, "meta/rng_state");
    std::array<std::uint64_t, 4> state{};
    std::memcpy(state.data(), rng_rec.values.data(), 4 * sizeof(double));
    rng_.set_state(state);
    epoch_ = static_cast<std::size_t>(find_record(records, "meta/epoch").values[0]);
  }

  std::vector<std::pair<std::string, Tensor>> named_params() {
    auto out = encoder_.named_params();
    if (config_.objective == PretrainObjective::kCoordinate) {
      for (auto& p : coord_decoder_.named_params()) out.push_back(p);
    } else {
      for (auto& p : angle_decoder_.named_params()) out.push_back(p);
    }
    return out;
  }

 private:
  std::vector<Tensor> collect_all_params() {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
  }

  Tensor objective_loss(const Tensor& z, std::size_t sample_idx, std::size_t joint,
                        std::array<std::size_t, 3>* head_correct,
                        std::array<std::size_t, 3>* head_total) {
    switch (config_.objective) {
      case PretrainObjective::kCoarseAngle: {
        const AngleTargetSet& targets = targets_.get(sample_idx, joint);
        const auto heads = angle_decoder_.decode(z, joint);
        Tensor loss = Tensor::zeros({1});
        for (std::size_t h = 0; h < 3; ++h) {
          std::vector<long> tgt(WindowedSample::kFrames);
          for (std::size_t f = 0; f < tgt.size(); ++f) tgt[f] = targets.class_at(h, f);
          loss = add(loss, cross_entropy(heads[h], tgt, kAngleIgnore));
          const std::size_t classes = heads[h].shape()[1];
          for (std::size_t f = 0; f < tgt.size(); ++f) {
            if (tgt[f] == kAngleIgnore) continue;
            const double* row = heads[h].values().data() + f * classes;
            std::size_t best = 0;
            for (std::size_t c = 1; c < classes; ++c)
              if (row[c] > row[best]) best = c;
            if (static_cast<long>(best) == tgt[f]) ++(*head_correct)[h];
            ++(*head_total)[h];
          }
        }
        return loss;
      }
      case PretrainObjective::kFineAngle: {
        const AngleTargetSet& targets = targets_.get(sample_idx, joint);
        const auto heads = angle_decoder_.decode(z, joint);
        Tensor loss = Tensor::zeros({1});
        for (std::size_t h = 0; h < 3; ++h) {
          std::vector<double> tgt(WindowedSample::kFrames);
          std::vector<std::uint8_t> mask(WindowedSample::kFrames);
          for (std::size_t f = 0; f < tgt.size(); ++f) {
            tgt[f] = targets.angle_at(h, f);
            mask[f] = targets.class_at(h, f) == kAngleIgnore ? 0 : 1;
          }
          Tensor target({WindowedSample::kFrames, 1}, std::move(tgt), false);
          loss = add(loss, mse(heads[h], target, mask));
        }
        return loss;
      }
      default: {
        Tensor pred = coord_decoder_.decode(z);
        Tensor target = CoordDecoder::coordinate_target((*corpus_)[sample_idx], config_.encoder.v);
        return mse(pred, target);
      }
    }
  }

  PretrainConfig config_;
  const std::vector<WindowedSample>* corpus_;
  Rng rng_;
  AngleTargetCache targets_;
  Encoder encoder_;
  AngleDecoder angle_decoder_;
  CoordDecoder coord_decoder_;
  std::vector<Tensor> params_;
  std::size_t epoch_ = 0;
};

inline void append_metrics_csv(const std::filesystem::path& path, const EpochMetrics& m,
                               bool write_header) {
  std::ofstream out(path, write_header ? std::ios::trunc : std::ios::app);
  if (!out) throw data_error("cannot open metrics file: " + path.string());
  if (write_header) out << "epoch,loss,acc_x,acc_y,acc_z\n";
  out << m.epoch << "," << m.loss << "," << m.head_accuracy[0] << "," << m.head_accuracy[1]
      << "," << m.head_accuracy[2] << "\n";
}

}  // namespace skelar
