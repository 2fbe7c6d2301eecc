#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "skelar/harness.hpp"
#include "skelar/rng.hpp"
#include "testutil.hpp"

using namespace skelar;

namespace {

BackboneConfig small_backbone(BackboneFamily family, std::size_t channels, std::size_t d = 16) {
  BackboneConfig cfg;
  cfg.family = family;
  cfg.channels = channels;
  cfg.width = 8;
  cfg.d = d;
  return cfg;
}

// Linearly separable toy: class c has mean level (c ? -1 : +1) plus noise.
SensorDataset separable_dataset(std::size_t n_per_class, double noise, std::uint64_t seed) {
  SensorDataset ds;
  ds.t = 150;
  ds.channels = 4;
  ds.label_names = {"neg", "pos"};
  Rng rng(seed);
  for (std::size_t label = 0; label < 2; ++label)
    for (std::size_t i = 0; i < n_per_class; ++i) {
      SensorSample s;
      s.label = label;
      s.series.resize(ds.t * ds.channels);
      const double level = label == 0 ? 1.0 : -1.0;
      for (double& x : s.series) x = level + noise * rng.normal();
      ds.samples.push_back(std::move(s));
    }
  return ds;
}

WindowedSample static_sample_from_rest() {
  auto corpus = synth_skeleton_corpus(4, 1, 1, 7);
  for (const WindowedSample& s : corpus)
    if (s.activity_label == "still") return s;
  throw std::runtime_error("no still sample");
}

}  // namespace

TEST_CASE("synthetic corpus is deterministic per seed") {
  const auto a = synth_skeleton_corpus(4, 3, 2, 42);
  const auto b = synth_skeleton_corpus(4, 3, 2, 42);
  REQUIRE(a.size() == 4 * 3 * 2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].coords == b[i].coords);
    REQUIRE(a[i].activity_label == b[i].activity_label);
    REQUIRE(a[i].subject_id == b[i].subject_id);
  }
  const auto c = synth_skeleton_corpus(4, 3, 2, 43);
  REQUIRE(a[0].coords != c[0].coords);
  REQUIRE_THROWS_AS(synth_skeleton_corpus(1, 3, 2, 1), contract_error);
  REQUIRE_THROWS_AS(synth_skeleton_corpus(9, 3, 2, 1), contract_error);
}

TEST_CASE("subject scaling changes coordinates but not projected angles") {
  std::vector<double> small(21 * 3), large(21 * 3);
  for (const std::string& activity : synth_activity_names(4)) {
    for (int step = 0; step < 20; ++step) {
      const double time_s = step * 0.1;
      synth_frame(activity, time_s, 1.234, 0.9, small.data());
      synth_frame(activity, time_s, 1.234, 1.3, large.data());
      REQUIRE(small != large);
      for (std::size_t joint : topology().essential_joints()) {
        const auto nbrs = topology().neighbors(joint);
        BonePair ps{}, pl{};
        for (std::size_t a = 0; a < 3; ++a) {
          ps.e1[a] = small[nbrs[0] * 3 + a] - small[joint * 3 + a];
          ps.e2[a] = small[nbrs[1] * 3 + a] - small[joint * 3 + a];
          pl.e1[a] = large[nbrs[0] * 3 + a] - large[joint * 3 + a];
          pl.e2[a] = large[nbrs[1] * 3 + a] - large[joint * 3 + a];
        }
        const ProjectedAngles as = projected_angles(ps), al = projected_angles(pl);
        for (std::size_t axis = 0; axis < 3; ++axis) {
          REQUIRE(as.defined[axis] == al.defined[axis]);
          if (as.defined[axis]) REQUIRE(std::abs(as.theta[axis] - al.theta[axis]) < 1e-9);
        }
      }
    }
  }
}

TEST_CASE("distinct generators produce distinct angle-class histograms") {
  const auto corpus = synth_skeleton_corpus(4, 2, 1, 11);
  std::map<std::string, std::vector<double>> histograms;
  const std::size_t m = 6;
  for (const WindowedSample& s : corpus) {
    auto& hist = histograms[s.activity_label];
    hist.resize(2 * m, 0.0);
    for (std::size_t joint : topology().essential_joints()) {
      const AngleTargetSet targets = joint_angle_targets(s, joint, m);
      for (long c : targets.classes)
        if (c != kAngleIgnore) hist[static_cast<std::size_t>(std::min<long>(c, 2 * m - 1))] += 1.0;
    }
  }
  REQUIRE(histograms.size() == 4);
  // chi-squared homogeneity between every activity pair; critical value for
  // df=11 at alpha=0.01 is 24.72
  std::vector<std::string> names;
  for (auto& [name, h] : histograms) names.push_back(name);
  for (std::size_t i = 0; i < names.size(); ++i)
    for (std::size_t j = i + 1; j < names.size(); ++j) {
      const auto& a = histograms[names[i]];
      const auto& b = histograms[names[j]];
      double na = 0.0, nb = 0.0;
      for (std::size_t c = 0; c < a.size(); ++c) { na += a[c]; nb += b[c]; }
      double chi2 = 0.0;
      for (std::size_t c = 0; c < a.size(); ++c) {
        const double tot = a[c] + b[c];
        if (tot == 0.0) continue;
        const double ea = tot * na / (na + nb), eb = tot * nb / (na + nb);
        chi2 += (a[c] - ea) * (a[c] - ea) / ea + (b[c] - eb) * (b[c] - eb) / eb;
      }
      INFO(names[i] << " vs " << names[j]);
      REQUIRE(chi2 > 24.72);
    }
}

TEST_CASE("still pose reads as constant gravity on the accelerometer") {
  WindowedSample still = static_sample_from_rest();
  // freeze it completely so the only signal is gravity
  for (std::size_t j = 0; j < 21; ++j)
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t f = 1; f < WindowedSample::kFrames; ++f)
        still.coords[(j * 3 + a) * WindowedSample::kFrames + f] =
            still.coords[(j * 3 + a) * WindowedSample::kFrames];
  const auto series = synth_imu_from_skeleton(still, default_imu_mounts(), 0.0, 1);
  const std::size_t channels = 12;
  REQUIRE(series.size() == WindowedSample::kFrames * channels);
  for (std::size_t f = 0; f < WindowedSample::kFrames; ++f)
    for (std::size_t mnt = 0; mnt < 2; ++mnt) {
      double norm = 0.0;
      for (std::size_t a = 0; a < 3; ++a) {
        const double x = series[f * channels + mnt * 6 + a];
        norm += x * x;
        // constant across frames
        REQUIRE(x == Catch::Approx(series[mnt * 6 + a]).margin(1e-9));
        // gyro silent
        REQUIRE(series[f * channels + mnt * 6 + 3 + a] == Catch::Approx(0.0).margin(1e-9));
      }
      REQUIRE(std::sqrt(norm) == Catch::Approx(kGravity).margin(1e-9));
    }
}

TEST_CASE("noise-free linear motion adds nothing beyond gravity") {
  WindowedSample s = static_sample_from_rest();
  // freeze the residual sway, then add a constant-velocity translation
  for (std::size_t j = 0; j < 21; ++j)
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t f = 1; f < WindowedSample::kFrames; ++f)
        s.coords[(j * 3 + a) * WindowedSample::kFrames + f] =
            s.coords[(j * 3 + a) * WindowedSample::kFrames];
  for (std::size_t j = 0; j < 21; ++j)
    for (std::size_t f = 0; f < WindowedSample::kFrames; ++f)
      s.coords[(j * 3 + 0) * WindowedSample::kFrames + f] += 0.02 * static_cast<double>(f);
  const auto series = synth_imu_from_skeleton(s, default_imu_mounts(), 0.0, 1);
  const std::size_t channels = 12;
  // interior frames: second difference of linear motion vanishes
  for (std::size_t f = 1; f + 1 < WindowedSample::kFrames; ++f)
    for (std::size_t mnt = 0; mnt < 2; ++mnt) {
      double norm = 0.0;
      for (std::size_t a = 0; a < 3; ++a) {
        const double x = series[f * channels + mnt * 6 + a];
        norm += x * x;
      }
      REQUIRE(std::sqrt(norm) == Catch::Approx(kGravity).margin(1e-6));
    }
}

TEST_CASE("walking gyro peaks at the generator's driving frequency") {
  const auto corpus = synth_skeleton_corpus(2, 1, 1, 5);  // arm_raise, walk
  const WindowedSample* walk = nullptr;
  for (const WindowedSample& s : corpus)
    if (s.activity_label == "walk") walk = &s;
  REQUIRE(walk != nullptr);
  const auto series = synth_imu_from_skeleton(*walk, default_imu_mounts(), 0.0, 1);
  const std::size_t channels = 12;
  // left-wrist mount, gyro component along the bone-normal axis
  std::vector<double> gyro(WindowedSample::kFrames);
  for (std::size_t f = 0; f < gyro.size(); ++f) gyro[f] = series[f * channels + 5];
  double mean = 0.0;
  for (double x : gyro) mean += x;
  mean /= static_cast<double>(gyro.size());
  for (double& x : gyro) x -= mean;
  const auto mag = power_spectrum(gyro);
  std::size_t peak = 1;
  for (std::size_t k = 2; k < mag.size(); ++k)
    if (mag[k] > mag[peak]) peak = k;
  // driving frequency 1.2 Hz over 150 samples at 30 Hz -> bin 6
  REQUIRE(peak >= 5);
  REQUIRE(peak <= 7);
}

TEST_CASE("imu dataset from two subjects differs in series but not in labels") {
  const auto corpus = synth_skeleton_corpus(2, 2, 1, 21);
  SensorDataset ds = make_imu_dataset(corpus, 0.0, 9);
  REQUIRE(ds.channels == 12);
  REQUIRE(ds.t == 150);
  REQUIRE(ds.label_names == std::vector<std::string>{"arm_raise", "walk"});
  // find the two walk samples (different subjects)
  std::vector<std::size_t> walks;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    if (ds.label_names[ds.samples[i].label] == "walk") walks.push_back(i);
  REQUIRE(walks.size() == 2);
  REQUIRE(ds.samples[walks[0]].series != ds.samples[walks[1]].series);
  REQUIRE(ds.samples[walks[0]].label == ds.samples[walks[1]].label);
}

TEST_CASE("dataset splits are disjoint, complete, and seeded") {
  const DatasetSplit split = split_dataset(100, 17);
  REQUIRE(split.test.size() == 10);
  REQUIRE(split.val.size() == 9);
  REQUIRE(split.train.size() == 81);
  std::set<std::size_t> all;
  for (const auto* part : {&split.train, &split.val, &split.test})
    for (std::size_t i : *part) REQUIRE(all.insert(i).second);
  REQUIRE(all.size() == 100);
  const DatasetSplit again = split_dataset(100, 17);
  REQUIRE(again.hash == split.hash);
  REQUIRE(again.train == split.train);
  REQUIRE(split_dataset(100, 18).hash != split.hash);
}

TEST_CASE("both backbone families emit a single feature vector") {
  Rng rng(3);
  for (BackboneFamily family : {BackboneFamily::kResidualConv, BackboneFamily::kTemporalAttention}) {
    Backbone net = Backbone::init(small_backbone(family, 12), rng);
    Tensor x = testutil::random_tensor({150, 12}, rng, false);
    Tensor y = net.forward(x);
    REQUIRE(y.shape() == Shape{1, 16});
    for (double v : y.values()) REQUIRE(std::isfinite(v));
    REQUIRE_THROWS_AS(net.forward(testutil::random_tensor({150, 5}, rng, false)),
                      contract_error);
  }
  REQUIRE(parse_backbone("resnet") == BackboneFamily::kResidualConv);
  REQUIRE(parse_backbone("attention") == BackboneFamily::kTemporalAttention);
  REQUIRE_THROWS_AS(parse_backbone("mlp"), data_error);
}

TEST_CASE("backbone gradients reach the stem through the residual stages") {
  Rng rng(4);
  Backbone net = Backbone::init(small_backbone(BackboneFamily::kResidualConv, 3), rng);
  Tensor x = testutil::random_tensor({150, 3}, rng, false);
  auto params = net.named_params();
  testutil::check_gradients({params[0].second}, [&] {
    Tensor y = net.forward(x);
    return mean_axis(y, 1);
  });
}

TEST_CASE("a separable toy reaches full test accuracy within 30 epochs") {
  SensorDataset ds = separable_dataset(20, 0.05, 8);
  DatasetSplit split = split_dataset(ds.samples.size(), 8);
  DownstreamConfig cfg;
  cfg.backbone = small_backbone(BackboneFamily::kResidualConv, 4);
  cfg.epochs = 30;
  cfg.lr = 1e-2;
  cfg.batch_size = 8;
  cfg.seed = 8;
  Rng rng(1);
  DownstreamResult result =
      train_downstream(ds, split, cfg, Provider::one_hot(ds.label_names, 16, rng));
  REQUIRE(result.test_accuracy == 1.0);
  REQUIRE(result.metrics.size() == 30);
  REQUIRE(result.split_hash == split.hash);
}

TEST_CASE("downstream training is bit-deterministic per seed") {
  SensorDataset ds = separable_dataset(10, 0.3, 12);
  DatasetSplit split = split_dataset(ds.samples.size(), 12);
  DownstreamConfig cfg;
  cfg.backbone = small_backbone(BackboneFamily::kResidualConv, 4);
  cfg.epochs = 3;
  cfg.seed = 12;
  auto run = [&] {
    Rng rng(2);
    return train_downstream(ds, split, cfg, Provider::one_hot(ds.label_names, 16, rng));
  };
  DownstreamResult a = run(), b = run();
  REQUIRE(a.test_accuracy == b.test_accuracy);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    REQUIRE(a.metrics[i].train_loss == b.metrics[i].train_loss);
    REQUIRE(a.metrics[i].val_accuracy == b.metrics[i].val_accuracy);
  }
}

TEST_CASE("provider and dataset label sets must agree") {
  SensorDataset ds = separable_dataset(5, 0.1, 1);
  DatasetSplit split = split_dataset(ds.samples.size(), 1);
  DownstreamConfig cfg;
  cfg.backbone = small_backbone(BackboneFamily::kResidualConv, 4);
  cfg.epochs = 1;
  Rng rng(1);
  Provider wrong = Provider::one_hot({"a", "b", "c"}, 16, rng);
  REQUIRE_THROWS_AS(train_downstream(ds, split, cfg, std::move(wrong)), contract_error);
}

TEST_CASE("few-shot protocol reports five seeds above the chance floor") {
  SensorDataset ds = separable_dataset(25, 0.1, 99);
  DownstreamConfig cfg;
  cfg.backbone = small_backbone(BackboneFamily::kResidualConv, 4);
  cfg.epochs = 5;
  cfg.lr = 1e-2;
  cfg.batch_size = 8;
  cfg.seed = 99;
  FewShotResult result = few_shot_protocol(ds, 5, cfg, [&](std::uint64_t seed) {
    Rng rng(seed);
    return Provider::one_hot(ds.label_names, 16, rng);
  });
  REQUIRE(result.per_seed.size() == 5);
  for (double acc : result.per_seed) REQUIRE(acc >= 0.5 - 0.05);
  REQUIRE(result.std_accuracy >= 0.0);
  // degenerate request: more shots than data
  DownstreamConfig tiny = cfg;
  REQUIRE_THROWS_AS(few_shot_protocol(ds, 1000, tiny,
                                      [&](std::uint64_t seed) {
                                        Rng rng(seed);
                                        return Provider::one_hot(ds.label_names, 16, rng);
                                      }),
                    contract_error);
}

TEST_CASE("skeleton provider trains against a frozen bank") {
  // tiny skeleton bank over the separable labels
  Rng rng(5);
  EncoderConfig enc_cfg;
  enc_cfg.blocks = {{8, 5, 3, false}, {8, 5, 3, false}};
  enc_cfg.groups = 2;
  Encoder enc = Encoder::init(enc_cfg, rng);
  auto corpus = synth_skeleton_corpus(2, 1, 1, 3);
  std::vector<std::pair<std::string, std::vector<WindowedSample>>> by_label;
  for (const WindowedSample& s : corpus) by_label.push_back({s.activity_label, {s}});
  LabelBank bank = build_label_bank(by_label, enc);

  SensorDataset ds = make_imu_dataset(synth_skeleton_corpus(2, 6, 2, 31), 0.05, 31);
  DatasetSplit split = split_dataset(ds.samples.size(), 31);
  DownstreamConfig cfg;
  cfg.backbone = small_backbone(BackboneFamily::kResidualConv, 12, 8);
  cfg.epochs = 3;
  cfg.seed = 31;
  Provider provider = Provider::skeleton(bank, MatchMode::kAttention, 8, rng);
  // the provider normalizes its bank copy at construction; training must
  // not change it further
  const auto frozen = provider.bank().z;
  DownstreamResult result = train_downstream(ds, split, cfg, std::move(provider));
  REQUIRE(result.provider.bank().z == frozen);  // bank never trained
  REQUIRE(std::isfinite(result.test_accuracy));
}

TEST_CASE("report files have the documented shapes") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "skelar_harness_reports";
  fs::create_directories(dir);
  std::vector<DownstreamEpoch> metrics(4);
  for (std::size_t i = 0; i < metrics.size(); ++i) metrics[i].epoch = i;
  write_downstream_csv(dir / "metrics.csv", metrics);
  std::ifstream in(dir / "metrics.csv");
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "epoch,train_loss,val_accuracy");
  std::size_t rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  REQUIRE(rows == 4);

  write_summary_json(dir / "summary.json", "skeleton", "resnet", 0.9, 0.05, {0.9, 0.95}, 123);
  std::ifstream jin(dir / "summary.json");
  nlohmann::json doc;
  jin >> doc;
  REQUIRE(doc["provider"] == "skeleton");
  REQUIRE(doc["per_seed"].size() == 2);

  Rng rng(6);
  MatchHead head = MatchHead::init(MatchMode::kAttention, 4, 4, rng);
  LabelBank bank;
  bank.v = 21;
  bank.k = 4;
  bank.activities = {"a", "b"};
  for (int i = 0; i < 2; ++i) {
    std::vector<double> z(21 * 4);
    for (double& x : z) x = rng.uniform(-1.0, 1.0);
    bank.z.push_back(std::move(z));
  }
  write_attention_heatmap(dir / "heatmap.csv", bank, head);
  std::ifstream hin(dir / "heatmap.csv");
  std::getline(hin, line);
  REQUIRE(line == "activity,joint,attention_mass");
  rows = 0;
  while (std::getline(hin, line))
    if (!line.empty()) ++rows;
  REQUIRE(rows == 2 * 21);
  fs::remove_all(dir);
}
