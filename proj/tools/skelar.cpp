// Command-line entry point for the skeleton-pretrained activity recognition
// pipeline: prepare, pretrain, embed-labels, train, eval, export.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "skelar/pipeline.hpp"

namespace {

using skelar::KeyValueConfig;

// Flag values are folded into the run configuration: defaults < config file
// < named flags < positional key=value overrides.
struct CommandArgs {
  std::string config_file;
  std::vector<std::string> overrides;
  std::map<std::string, std::string> flags;
};

CLI::Option* add_kv(CLI::App* cmd, CommandArgs& args, const std::string& flag,
                    const std::string& key, const std::string& help) {
  return cmd->add_option_function<std::string>(
      flag, [&args, key](const std::string& v) { args.flags[key] = v; }, help);
}

void add_common(CLI::App* cmd, CommandArgs& args) {
  cmd->add_option("--config", args.config_file, "key=value config file");
  add_kv(cmd, args, "--seed", "seed", "run seed (recorded in outputs)");
  add_kv(cmd, args, "--out", "out", "output directory");
  cmd->add_option("overrides", args.overrides, "extra key=value overrides");
}

KeyValueConfig resolve(const CommandArgs& args, const std::string& command) {
  KeyValueConfig cfg;
  if (!args.config_file.empty()) cfg = KeyValueConfig::from_file(args.config_file);
  for (const auto& [key, value] : args.flags) cfg.set(key, value);
  for (const std::string& kv : args.overrides) cfg.apply_override(kv);
  cfg.set("command", command);
  if (!cfg.has("seed")) cfg.set("seed", "0");
  return cfg;
}

std::filesystem::path out_dir(const KeyValueConfig& cfg, const std::string& fallback) {
  const std::filesystem::path dir = cfg.get("out", fallback);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skeleton-pretrained activity recognition pipeline"};
  app.require_subcommand(1);

  CommandArgs prepare_args, pretrain_args, embed_args, train_args, eval_args, export_args;

  CLI::App* prepare =
      app.add_subcommand("prepare", "parse, remap, resample and window skeleton files");
  add_kv(prepare, prepare_args, "--input", "input", "directory of skeleton files")->required();
  add_kv(prepare, prepare_args, "--format", "format", "input format: ntu or json");
  add_common(prepare, prepare_args);

  CLI::App* pretrain = app.add_subcommand("pretrain", "self-supervised encoder pretraining");
  add_kv(pretrain, pretrain_args, "--corpus", "corpus", "prepared corpus directory");
  add_kv(pretrain, pretrain_args, "--epochs", "epochs", "training epochs");
  add_kv(pretrain, pretrain_args, "--objective", "objective", "coarse, fine or coordinate");
  add_kv(pretrain, pretrain_args, "--m-bins", "m-bins", "angle bins per half-turn");
  add_kv(pretrain, pretrain_args, "--lr", "lr", "learning rate");
  add_kv(pretrain, pretrain_args, "--batch", "batch", "batch size");
  add_kv(pretrain, pretrain_args, "--encoder", "encoder", "encoder config: small or default");
  add_kv(pretrain, pretrain_args, "--k", "k", "feature size of the small encoder");
  pretrain->add_flag_function(
      "--signed-angles",
      [&pretrain_args](std::int64_t) { pretrain_args.flags["signed-angles"] = "true"; },
      "use signed angles in [0, 2*pi)");
  add_common(pretrain, pretrain_args);

  CLI::App* embed =
      app.add_subcommand("embed-labels", "build the per-activity label bank from few shots");
  add_kv(embed, embed_args, "--corpus", "corpus", "prepared labeled skeleton corpus");
  add_kv(embed, embed_args, "--encoder-ckpt", "encoder-ckpt", "pretrained encoder checkpoint")
      ->required();
  add_kv(embed, embed_args, "--shots", "shots", "skeleton samples per activity");
  add_kv(embed, embed_args, "--encoder", "encoder", "encoder config: small or default");
  add_kv(embed, embed_args, "--k", "k", "feature size of the small encoder");
  add_common(embed, embed_args);

  CLI::App* train = app.add_subcommand("train", "train a downstream sensor classifier");
  add_kv(train, train_args, "--corpus", "corpus", "prepared corpus directory");
  add_kv(train, train_args, "--provider", "provider", "skeleton, one-hot or random");
  add_kv(train, train_args, "--backbone", "backbone", "resnet or attention");
  add_kv(train, train_args, "--match", "match", "attention or simple matching");
  add_kv(train, train_args, "--bank", "bank", "label bank file (skeleton provider)");
  add_kv(train, train_args, "--epochs", "epochs", "training epochs");
  add_kv(train, train_args, "--lr", "lr", "learning rate");
  add_kv(train, train_args, "--batch", "batch", "batch size");
  add_kv(train, train_args, "--d", "d", "backbone feature size");
  add_kv(train, train_args, "--width", "width", "backbone hidden width");
  add_kv(train, train_args, "--noise", "noise", "virtual IMU noise sigma");
  add_common(train, train_args);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a saved downstream model");
  add_kv(eval, eval_args, "--corpus", "corpus", "prepared corpus directory");
  add_kv(eval, eval_args, "--model", "model", "model checkpoint from train")->required();
  add_common(eval, eval_args);

  CLI::App* exportc = app.add_subcommand("export", "export raw per-joint embeddings to CSV");
  add_kv(exportc, export_args, "--corpus", "corpus", "prepared corpus directory");
  add_kv(exportc, export_args, "--encoder-ckpt", "encoder-ckpt", "pretrained encoder checkpoint")
      ->required();
  add_kv(exportc, export_args, "--encoder", "encoder", "encoder config: small or default");
  add_kv(exportc, export_args, "--k", "k", "feature size of the small encoder");
  add_common(exportc, export_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (prepare->parsed()) {
      const KeyValueConfig cfg = resolve(prepare_args, "prepare");
      const std::filesystem::path out = out_dir(cfg, "out/corpus");
      const skelar::PrepareResult result =
          skelar::cmd_prepare(cfg.get("input", ""), cfg.get("format", "ntu"), out,
                              cfg.get_u64("seed", 0), &std::cerr);
      skelar::write_resolved_config(out / "config.resolved", cfg);
      std::cout << "prepared " << result.windows << " windows from " << result.files_ok
                << " files (" << result.files_failed << " failed)\n";
    } else if (pretrain->parsed()) {
      const KeyValueConfig cfg = resolve(pretrain_args, "pretrain");
      const std::filesystem::path out = out_dir(cfg, "out/pretrain");
      skelar::write_resolved_config(out / "config.resolved", cfg);
      const skelar::PretrainOutcome outcome =
          skelar::cmd_pretrain(cfg.get("corpus", "out/corpus"), out,
                               skelar::pretrain_config_from(cfg));
      std::cout << "pretrained epochs " << outcome.start_epoch << ".."
                << outcome.start_epoch + outcome.epochs_run << ", final loss "
                << outcome.final_loss << "\n";
    } else if (embed->parsed()) {
      const KeyValueConfig cfg = resolve(embed_args, "embed-labels");
      const std::filesystem::path out = out_dir(cfg, "out/bank");
      skelar::write_resolved_config(out / "config.resolved", cfg);
      const skelar::LabelBank bank = skelar::cmd_embed_labels(
          cfg.get("corpus", "out/corpus"), cfg.get("encoder-ckpt", ""),
          cfg.get_size("shots", 5), skelar::encoder_config_from(cfg), out / "bank.ckpt");
      std::cout << "embedded " << bank.size() << " activities into "
                << (out / "bank.ckpt").string() << "\n";
    } else if (train->parsed()) {
      const KeyValueConfig cfg = resolve(train_args, "train");
      const std::filesystem::path out = out_dir(cfg, "out/train");
      skelar::write_resolved_config(out / "config.resolved", cfg);
      const skelar::DownstreamResult result =
          skelar::cmd_train(cfg.get("corpus", "out/corpus"), out, skelar::train_options_from(cfg));
      std::cout << "test accuracy " << result.test_accuracy << " (best val "
                << result.best_val_accuracy << ")\n";
    } else if (eval->parsed()) {
      const KeyValueConfig cfg = resolve(eval_args, "eval");
      const std::filesystem::path out = out_dir(cfg, "out/eval");
      skelar::write_resolved_config(out / "config.resolved", cfg);
      const skelar::EvalResult result =
          skelar::cmd_eval(cfg.get("corpus", "out/corpus"), cfg.get("model", ""), out);
      std::cout << "test accuracy " << result.test_accuracy << " (recorded "
                << result.recorded_test_accuracy << ")\n";
    } else if (exportc->parsed()) {
      const KeyValueConfig cfg = resolve(export_args, "export");
      const std::filesystem::path out = out_dir(cfg, "out/export");
      skelar::write_resolved_config(out / "config.resolved", cfg);
      const std::size_t rows =
          skelar::cmd_export(cfg.get("corpus", "out/corpus"), cfg.get("encoder-ckpt", ""),
                             skelar::encoder_config_from(cfg), out / "embeddings.csv");
      std::cout << "exported " << rows << " rows to " << (out / "embeddings.csv").string()
                << "\n";
    }
    return 0;
  } catch (const skelar::numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const skelar::data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const skelar::contract_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
