#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "skelar/common.hpp"
#include "skelar/harness.hpp"
#include "skelar/matching.hpp"
#include "skelar/pretrain.hpp"
#include "skelar/skeleton.hpp"

namespace skelar {

// ---------------------------------------------------------------------------
// Plain-text key=value run configuration
// ---------------------------------------------------------------------------

class KeyValueConfig {
 public:
  static KeyValueConfig from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open config file: " + path.string());
    KeyValueConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const std::size_t eq = trimmed.find('=');
      if (eq == std::string::npos) throw parse_error("expected key=value", line_no);
      const std::string key = trim(trimmed.substr(0, eq));
      if (key.empty()) throw parse_error("empty key", line_no);
      cfg.values_[key] = trim(trimmed.substr(eq + 1));
    }
    return cfg;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  // A "key=value" command-line override.
  void apply_override(const std::string& kv) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw data_error("override must be key=value, got '" + kv + "'");
    values_[trim(kv.substr(0, eq))] = trim(kv.substr(eq + 1));
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      throw data_error("config key '" + key + "' is not a number: " + it->second);
    }
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    const double v = get_double(key, static_cast<double>(fallback));
    if (v < 0.0 || v != std::floor(v))
      throw data_error("config key '" + key + "' must be a non-negative integer");
    return static_cast<std::size_t>(v);
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      throw data_error("config key '" + key + "' is not an unsigned integer: " + it->second);
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw data_error("config key '" + key + "' must be true/false, got: " + it->second);
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

  std::map<std::string, std::string> values_;
};

// Every run writes the fully resolved configuration (sorted keys) next to
// its outputs so the run is reproducible from the snapshot alone.
inline void write_resolved_config(const std::filesystem::path& path, const KeyValueConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write resolved config: " + path.string());
  for (const auto& [key, value] : cfg.entries()) out << key << "=" << value << "\n";
}

// ---------------------------------------------------------------------------
// Prepared corpus on disk: binary sample files plus an index CSV
// ---------------------------------------------------------------------------

namespace pipeline_detail {

// Activity label for files that do not carry one: the A### action token of
// the dataset naming convention when present, otherwise the file stem.
inline std::string label_from_filename(const std::string& stem) {
  for (std::size_t i = 0; i < stem.size(); ++i) {
    if (stem[i] != 'A' || i + 1 >= stem.size() || !std::isdigit(static_cast<unsigned char>(stem[i + 1])))
      continue;
    std::size_t j = i + 1;
    while (j < stem.size() && std::isdigit(static_cast<unsigned char>(stem[j]))) ++j;
    return stem.substr(i, j - i);
  }
  return stem;
}

inline void check_csv_field(const std::string& value, const char* what) {
  if (value.find(',') != std::string::npos || value.find('\n') != std::string::npos)
    throw data_error(std::string(what) + " may not contain commas or newlines: " + value);
}

}  // namespace pipeline_detail

inline void save_window_file(const std::filesystem::path& path, const WindowedSample& sample) {
  save_checkpoint(path, {CheckpointRecord{"coords", {21, 3, WindowedSample::kFrames},
                                          sample.coords}});
}

inline WindowedSample load_window_file(const std::filesystem::path& path) {
  const auto records = load_checkpoint(path);
  const CheckpointRecord& rec = find_record(records, "coords");
  if (rec.dims != Shape{21, 3, WindowedSample::kFrames})
    throw data_error("sample file " + path.string() + " has shape " + shape_str(rec.dims));
  WindowedSample sample;
  sample.coords = rec.values;
  return sample;
}

struct PrepareResult {
  std::size_t files_ok = 0;
  std::size_t files_failed = 0;
  std::size_t windows = 0;
};

// parse -> remap to the canonical 21 joints -> resample to 30 Hz -> 150-frame
// windows -> binary sample files + index CSV. Per-file failures are logged;
// the run fails only when no file succeeds.
inline PrepareResult cmd_prepare(const std::filesystem::path& input_dir, const std::string& format,
                                 const std::filesystem::path& out_dir, std::uint64_t seed,
                                 std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  if (format != "ntu" && format != "json")
    throw data_error("unknown input format '" + format + "' (expected ntu or json)");
  if (!fs::is_directory(input_dir))
    throw data_error("input directory does not exist: " + input_dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(input_dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw data_error("no inputs in " + input_dir.string());

  const fs::path samples_dir = out_dir / "samples";
  fs::remove_all(samples_dir);
  fs::create_directories(samples_dir);

  PrepareResult result;
  struct IndexRow {
    std::string path, label, subject;
  };
  std::vector<IndexRow> rows;
  std::vector<WindowedSample> windows;
  for (const fs::path& file : files) {
    try {
      std::ifstream in(file, std::ios::binary);
      if (!in) throw data_error("cannot open " + file.string());
      SkeletonSequence seq = format == "ntu" ? parse_ntu_skeleton(in) : read_skeleton_json(in);
      if (seq.v == 25) seq = remap_ntu25_to_21(seq);
      else if (seq.v == 22) seq = remap_humanml22_to_21(seq);
      else if (seq.v != 21)
        throw data_error("unsupported joint count " + std::to_string(seq.v) + " in " +
                         file.string());
      seq = resample(seq, 30.0);
      if (seq.activity_label.empty())
        seq.activity_label = pipeline_detail::label_from_filename(file.stem().string());
      pipeline_detail::check_csv_field(seq.activity_label, "activity label");
      pipeline_detail::check_csv_field(seq.subject_id, "subject id");
      for (WindowedSample& w : window(seq, file.stem().string())) {
        IndexRow row;
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%06zu.bin", windows.size());
        row.path = std::string("samples/") + name;
        row.label = w.activity_label;
        row.subject = w.subject_id;
        save_window_file(out_dir / row.path, w);
        rows.push_back(std::move(row));
        windows.push_back(std::move(w));
      }
      ++result.files_ok;
    } catch (const data_error& e) {
      ++result.files_failed;
      if (log) *log << "skipping " << file.string() << ": " << e.what() << "\n";
    }
  }
  if (result.files_ok == 0)
    throw data_error("all " + std::to_string(result.files_failed) + " input files failed to parse");
  result.windows = windows.size();

  // informational split assignment, seeded like the downstream harness
  std::vector<std::string> split_of(windows.size(), "train");
  if (windows.size() >= 3) {
    const DatasetSplit split = split_dataset(windows.size(), seed);
    for (std::size_t i : split.val) split_of[i] = "val";
    for (std::size_t i : split.test) split_of[i] = "test";
  }
  std::ofstream index(out_dir / "index.csv");
  if (!index) throw data_error("cannot write index: " + (out_dir / "index.csv").string());
  index << "path,label,subject,split\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    index << rows[i].path << "," << rows[i].label << "," << rows[i].subject << ","
          << split_of[i] << "\n";
  return result;
}

inline std::vector<WindowedSample> load_prepared_corpus(const std::filesystem::path& dir) {
  const std::filesystem::path index_path = dir / "index.csv";
  std::ifstream index(index_path);
  if (!index) throw data_error("missing corpus index: " + index_path.string());
  std::string line;
  if (!std::getline(index, line) || line != "path,label,subject,split")
    throw data_error("bad corpus index header in " + index_path.string());
  std::vector<WindowedSample> corpus;
  std::size_t line_no = 1;
  while (std::getline(index, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream row(line);
    std::string field;
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() < 3) throw parse_error("corpus index row needs path,label,subject", line_no);
    WindowedSample sample = load_window_file(dir / fields[0]);
    sample.source = fields[0];
    sample.activity_label = fields[1];
    sample.subject_id = fields[2];
    corpus.push_back(std::move(sample));
  }
  if (corpus.empty()) throw data_error("corpus index lists no samples: " + index_path.string());
  return corpus;
}

// ---------------------------------------------------------------------------
// Config resolution for training commands
// ---------------------------------------------------------------------------

inline EncoderConfig encoder_config_from(const KeyValueConfig& cfg) {
  const std::string name = cfg.get("encoder", "small");
  if (name == "default") return EncoderConfig::defaults();
  if (name == "small") return EncoderConfig::small(cfg.get_size("k", 32));
  throw data_error("unknown encoder config '" + name + "' (expected small or default)");
}

inline PretrainConfig pretrain_config_from(const KeyValueConfig& cfg) {
  PretrainConfig out;
  out.epochs = cfg.get_size("epochs", out.epochs);
  out.lr = cfg.get_double("lr", out.lr);
  out.batch_size = cfg.get_size("batch", out.batch_size);
  out.m = cfg.get_size("m-bins", out.m);
  if (out.m == 0) throw data_error("m-bins must be positive");
  out.seed = cfg.get_u64("seed", out.seed);
  out.signed_angles = cfg.get_bool("signed-angles", out.signed_angles);
  out.objective = parse_objective(cfg.get("objective", "coarse"));
  out.encoder = encoder_config_from(cfg);
  out.decoder_width = cfg.get_size("decoder-width", 32);
  return out;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct PretrainOutcome {
  std::size_t start_epoch = 0;
  std::size_t epochs_run = 0;
  double final_loss = 0.0;
};

// Resumable: when the output checkpoint already exists, training continues
// from its recorded epoch and appends to the metrics CSV.
inline PretrainOutcome cmd_pretrain(const std::filesystem::path& corpus_dir,
                                    const std::filesystem::path& out_dir,
                                    const PretrainConfig& config) {
  namespace fs = std::filesystem;
  const std::vector<WindowedSample> corpus = load_prepared_corpus(corpus_dir);
  fs::create_directories(out_dir);
  PretrainRun run(config, corpus);
  const fs::path ckpt = out_dir / "encoder.ckpt";
  const fs::path metrics = out_dir / "pretrain_metrics.csv";
  if (fs::exists(ckpt)) run.restore(load_checkpoint(ckpt));
  PretrainOutcome outcome;
  outcome.start_epoch = run.epoch();
  while (run.epoch() < config.epochs) {
    const EpochMetrics m = run.run_epoch();
    append_metrics_csv(metrics, m, m.epoch == 0);
    save_checkpoint(ckpt, run.checkpoint_records());
    outcome.final_loss = m.loss;
    ++outcome.epochs_run;
  }
  if (!fs::exists(ckpt)) save_checkpoint(ckpt, run.checkpoint_records());
  return outcome;
}

// Builds the per-activity label bank from the first `shots` windows of each
// activity (corpus index order) through a frozen pretrained encoder.
inline LabelBank cmd_embed_labels(const std::filesystem::path& corpus_dir,
                                  const std::filesystem::path& encoder_ckpt,
                                  std::size_t shots, const EncoderConfig& encoder_config,
                                  const std::filesystem::path& bank_out) {
  if (shots == 0) throw contract_error("embed-labels: shots must be positive");
  const std::vector<WindowedSample> corpus = load_prepared_corpus(corpus_dir);
  std::map<std::string, std::vector<WindowedSample>> by_label;
  for (const WindowedSample& s : corpus) {
    if (s.activity_label.empty())
      throw data_error("embed-labels: corpus sample without activity label: " + s.source);
    auto& bucket = by_label[s.activity_label];
    if (bucket.size() < shots) bucket.push_back(s);
  }
  Rng rng(0);
  Encoder encoder = Encoder::init(encoder_config, rng);
  encoder.load(load_checkpoint(encoder_ckpt));
  std::vector<std::pair<std::string, std::vector<WindowedSample>>> samples(by_label.begin(),
                                                                           by_label.end());
  LabelBank bank = build_label_bank(samples, encoder);
  std::filesystem::create_directories(bank_out.parent_path().empty()
                                          ? std::filesystem::path(".")
                                          : bank_out.parent_path());
  save_label_bank(bank_out, bank);
  return bank;
}

struct TrainOptions {
  ProviderKind provider = ProviderKind::kSkeleton;
  BackboneFamily backbone = BackboneFamily::kResidualConv;
  MatchMode match_mode = MatchMode::kAttention;
  std::size_t d = 256;
  std::size_t width = 32;
  std::size_t patch = 10;
  std::size_t epochs = 100;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double noise_sigma = 0.05;
  std::filesystem::path bank_path;  // skeleton provider only
};

inline TrainOptions train_options_from(const KeyValueConfig& cfg) {
  TrainOptions out;
  out.provider = parse_provider(cfg.get("provider", "skeleton"));
  out.backbone = parse_backbone(cfg.get("backbone", "resnet"));
  const std::string match = cfg.get("match", "attention");
  if (match == "attention") out.match_mode = MatchMode::kAttention;
  else if (match == "simple") out.match_mode = MatchMode::kSimple;
  else throw data_error("unknown match mode '" + match + "' (expected attention or simple)");
  out.d = cfg.get_size("d", out.d);
  out.width = cfg.get_size("width", out.width);
  out.patch = cfg.get_size("patch", out.patch);
  out.epochs = cfg.get_size("epochs", out.epochs);
  out.lr = cfg.get_double("lr", out.lr);
  out.batch_size = cfg.get_size("batch", out.batch_size);
  out.seed = cfg.get_u64("seed", out.seed);
  out.noise_sigma = cfg.get_double("noise", out.noise_sigma);
  out.bank_path = cfg.get("bank", "");
  return out;
}

namespace pipeline_detail {

// Providers are constructed from a dedicated stream so that evaluation can
// rebuild the exact fixed tensors (random provider) from the recorded seed.
inline Provider make_provider(const TrainOptions& opt, const std::vector<std::string>& labels) {
  Rng rng(opt.seed ^ 0x9a0b1c2dULL);
  switch (opt.provider) {
    case ProviderKind::kSkeleton: {
      if (opt.bank_path.empty())
        throw data_error("skeleton provider requires a label bank (--bank)");
      LabelBank bank = load_label_bank(opt.bank_path);
      return Provider::skeleton(std::move(bank), opt.match_mode, opt.d, rng);
    }
    case ProviderKind::kOneHot:
      return Provider::one_hot(labels, opt.d, rng);
    default:
      return Provider::random(labels, opt.d, rng);
  }
}

inline BackboneConfig backbone_config(const TrainOptions& opt) {
  BackboneConfig bb;
  bb.family = opt.backbone;
  bb.d = opt.d;
  bb.width = opt.width;
  bb.patch = opt.patch;
  return bb;
}

}  // namespace pipeline_detail

// Trains a downstream classifier on the virtual-IMU dataset derived from the
// prepared corpus, then writes metrics CSV, summary JSON, the model
// checkpoint, and (attention skeleton matching only) the attention heatmap.
inline DownstreamResult cmd_train(const std::filesystem::path& corpus_dir,
                                  const std::filesystem::path& out_dir, const TrainOptions& opt) {
  namespace fs = std::filesystem;
  const std::vector<WindowedSample> corpus = load_prepared_corpus(corpus_dir);
  SensorDataset dataset = make_imu_dataset(corpus, opt.noise_sigma, opt.seed);
  const DatasetSplit split = split_dataset(dataset.samples.size(), opt.seed);
  Provider provider = pipeline_detail::make_provider(opt, dataset.label_names);
  DownstreamConfig config;
  config.backbone = pipeline_detail::backbone_config(opt);
  config.epochs = opt.epochs;
  config.lr = opt.lr;
  config.batch_size = opt.batch_size;
  config.seed = opt.seed;
  DownstreamResult result = train_downstream(dataset, split, config, std::move(provider));

  fs::create_directories(out_dir);
  write_downstream_csv(out_dir / "downstream_metrics.csv", result.metrics);
  write_summary_json(out_dir / "summary.json", provider_name(opt.provider),
                     backbone_name(opt.backbone), result.test_accuracy, 0.0,
                     {result.test_accuracy}, result.split_hash);
  if (opt.provider == ProviderKind::kSkeleton && opt.match_mode == MatchMode::kAttention)
    write_attention_heatmap(out_dir / "attention_heatmap.csv", result.provider.bank(),
                            result.provider.head());

  std::vector<CheckpointRecord> records;
  for (auto& [name, t] : result.backbone.named_params()) records.push_back(record_of(name, t));
  for (auto& [name, t] : result.provider.named_params()) records.push_back(record_of(name, t));
  if (opt.provider == ProviderKind::kSkeleton) {
    const LabelBank& bank = result.provider.bank();
    records.push_back(CheckpointRecord{
        "bank/meta", {2}, {static_cast<double>(bank.v), static_cast<double>(bank.k)}});
    for (std::size_t i = 0; i < bank.size(); ++i)
      records.push_back(
          CheckpointRecord{"bank/" + bank.activities[i] + "/Z", {bank.v, bank.k}, bank.z[i]});
  }
  records.push_back(CheckpointRecord{
      "meta/train",
      {8},
      {static_cast<double>(opt.provider == ProviderKind::kSkeleton   ? 0
                           : opt.provider == ProviderKind::kOneHot ? 1
                                                                   : 2),
       static_cast<double>(opt.backbone == BackboneFamily::kResidualConv ? 0 : 1),
       static_cast<double>(opt.match_mode == MatchMode::kAttention ? 0 : 1),
       static_cast<double>(opt.d), static_cast<double>(opt.width),
       static_cast<double>(opt.patch), static_cast<double>(opt.seed), opt.noise_sigma}});
  records.push_back(CheckpointRecord{"meta/test_accuracy", {1}, {result.test_accuracy}});
  save_checkpoint(out_dir / "model.ckpt", records);
  return result;
}

struct EvalResult {
  double test_accuracy = 0.0;
  double recorded_test_accuracy = 0.0;
  std::uint64_t split_hash = 0;
};

// Rebuilds the dataset, split, backbone and provider from the recorded run
// parameters and reproduces the training-time test accuracy.
inline EvalResult cmd_eval(const std::filesystem::path& corpus_dir,
                           const std::filesystem::path& model_path,
                           const std::filesystem::path& out_dir) {
  const auto records = load_checkpoint(model_path);
  const CheckpointRecord& meta = find_record(records, "meta/train");
  if (meta.values.size() != 8) throw data_error("model checkpoint has malformed run metadata");
  TrainOptions opt;
  opt.provider = meta.values[0] == 0 ? ProviderKind::kSkeleton
                 : meta.values[0] == 1 ? ProviderKind::kOneHot
                                       : ProviderKind::kRandom;
  opt.backbone =
      meta.values[1] == 0 ? BackboneFamily::kResidualConv : BackboneFamily::kTemporalAttention;
  opt.match_mode = meta.values[2] == 0 ? MatchMode::kAttention : MatchMode::kSimple;
  opt.d = static_cast<std::size_t>(meta.values[3]);
  opt.width = static_cast<std::size_t>(meta.values[4]);
  opt.patch = static_cast<std::size_t>(meta.values[5]);
  opt.seed = static_cast<std::uint64_t>(meta.values[6]);
  opt.noise_sigma = meta.values[7];

  const std::vector<WindowedSample> corpus = load_prepared_corpus(corpus_dir);
  SensorDataset dataset = make_imu_dataset(corpus, opt.noise_sigma, opt.seed);
  const DatasetSplit split = split_dataset(dataset.samples.size(), opt.seed);

  Rng provider_rng(opt.seed ^ 0x9a0b1c2dULL);
  Provider provider;
  if (opt.provider == ProviderKind::kSkeleton) {
    LabelBank bank = label_bank_from_records(records);
    provider = Provider::skeleton(std::move(bank), opt.match_mode, opt.d, provider_rng);
  } else if (opt.provider == ProviderKind::kOneHot) {
    provider = Provider::one_hot(dataset.label_names, opt.d, provider_rng);
  } else {
    provider = Provider::random(dataset.label_names, opt.d, provider_rng);
  }
  for (auto& [name, t] : provider.named_params()) load_into(records, name, t);

  BackboneConfig bb = pipeline_detail::backbone_config(opt);
  bb.channels = dataset.channels;
  Rng backbone_rng(opt.seed ^ 0xd05edULL);
  Backbone backbone = Backbone::init(bb, backbone_rng);
  backbone.load(records);

  EvalResult result;
  result.test_accuracy = harness_detail::accuracy_on(dataset, split.test, backbone, provider);
  result.recorded_test_accuracy = find_record(records, "meta/test_accuracy").values[0];
  result.split_hash = split.hash;

  std::filesystem::create_directories(out_dir);
  nlohmann::json doc;
  doc["test_accuracy"] = result.test_accuracy;
  doc["recorded_test_accuracy"] = result.recorded_test_accuracy;
  doc["split_hash"] = result.split_hash;
  std::ofstream out(out_dir / "eval.json");
  if (!out) throw data_error("cannot write eval summary");
  out << doc.dump(2) << "\n";
  return result;
}

// Raw embedding export: one CSV row per (sample, joint) with the k feature
// channels, for external visualization.
inline std::size_t cmd_export(const std::filesystem::path& corpus_dir,
                              const std::filesystem::path& encoder_ckpt,
                              const EncoderConfig& encoder_config,
                              const std::filesystem::path& out_csv) {
  const std::vector<WindowedSample> corpus = load_prepared_corpus(corpus_dir);
  Rng rng(0);
  Encoder encoder = Encoder::init(encoder_config, rng);
  encoder.load(load_checkpoint(encoder_ckpt));
  std::ofstream out(out_csv);
  if (!out) throw data_error("cannot write embedding export: " + out_csv.string());
  const std::size_t k = encoder_config.feature_size();
  out << "sample,label,subject,joint";
  for (std::size_t c = 0; c < k; ++c) out << ",c" << c;
  out << "\n";
  std::size_t rows = 0;
  char buf[32];
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Tensor z = encoder.encode(corpus[i]);  // [v, k]
    for (std::size_t j = 0; j < encoder_config.v; ++j) {
      out << i << "," << corpus[i].activity_label << "," << corpus[i].subject_id << ","
          << topology().joint_names()[j];
      for (std::size_t c = 0; c < k; ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", z.values()[j * k + c]);
        out << "," << buf;
      }
      out << "\n";
      ++rows;
    }
  }
  return rows;
}

}  // namespace skelar
