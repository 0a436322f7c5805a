// Copyright 2026 The FRET Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: adapt, sweep, plot, validate, plus helpers to
// generate the synthetic dataset and train a source checkpoint.

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>
#include <random>

#include "fret/architectures.hpp"
#include "fret/harness.hpp"
#include "fret/training.hpp"

namespace {

using fret::ConfigOverrides;
using fret::ExperimentConfig;

void add_override_flags(CLI::App* cmd, std::string& config, std::string& method,
                        std::vector<std::uint64_t>& seeds, double& lr, double& lambda, long& k1, double& k2,
                        std::string& protocol, std::string& out) {
  cmd->add_option("--config", config, "experiment TOML file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--method", method, "method name, or a comma-separated list");
  cmd->add_option("--seed", seeds, "seed (repeatable)");
  cmd->add_option("--lr", lr, "learning rate for every method");
  cmd->add_option("--lambda", lambda, "weight of the prediction term");
  cmd->add_option("--k1", k1, "per-class entropy filter size");
  cmd->add_option("--k2", k2, "consistency filter fraction");
  cmd->add_option("--protocol", protocol, "adaptation protocol")
      ->check(CLI::IsMember({"continuous", "independent"}));
  cmd->add_option("--out", out, "output directory");
}

ExperimentConfig resolve_config(const std::string& path, const std::string& method,
                                const std::vector<std::uint64_t>& seeds, const CLI::App* cmd, double lr, double lambda,
                                long k1, double k2, const std::string& protocol, const std::string& out) {
  ExperimentConfig cfg = fret::load_config(path);
  ConfigOverrides o;
  if (!method.empty()) o.method = method;
  o.seeds = seeds;
  if (cmd->count("--lr")) o.lr = lr;
  if (cmd->count("--lambda")) o.lambda = lambda;
  if (cmd->count("--k1")) o.k1 = k1;
  if (cmd->count("--k2")) o.k2 = k2;
  if (!protocol.empty()) o.protocol = protocol;
  if (!out.empty()) o.out_dir = out;
  fret::apply_overrides(cfg, o);
  cfg.validate();
  return cfg;
}

void print_summary(const std::vector<fret::SummaryRow>& rows) {
  const auto groups = fret::accuracy_by_group(rows);
  std::cout << std::left << std::setw(12) << "method" << std::setw(12) << "protocol" << std::setw(22) << "segment"
            << "accuracy (mean +- std, n)\n";
  for (const auto& [key, ms] : groups) {
    const auto& [method, protocol, segment] = key;
    std::cout << std::setw(12) << method << std::setw(12) << protocol << std::setw(22) << segment << std::fixed
              << std::setprecision(4) << ms.mean << " +- " << ms.std << "  (" << ms.count << ")\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fret: feature-redundancy test-time adaptation experiments"};
  app.require_subcommand(1);

  std::string config, method, protocol, out;
  std::vector<std::uint64_t> seeds;
  double lr = 0.0, lambda = 0.0, k2 = 0.0;
  long k1 = 0;

  CLI::App* adapt = app.add_subcommand("adapt", "run adaptation for every (method, seed)");
  add_override_flags(adapt, config, method, seeds, lr, lambda, k1, k2, protocol, out);
  bool quiet = false;
  adapt->add_flag("--quiet", quiet, "suppress per-run progress");

  CLI::App* validate = app.add_subcommand("validate", "check a config without running it");
  add_override_flags(validate, config, method, seeds, lr, lambda, k1, k2, protocol, out);

  CLI::App* sweep = app.add_subcommand("sweep", "redundancy of the frozen model per corruption severity");
  sweep->add_option("--config", config, "experiment TOML file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--seed", seeds, "corruption seed");
  sweep->add_option("--out", out, "output directory");

  std::string run_dir;
  CLI::App* plot = app.add_subcommand("plot", "render plots from stored step logs");
  plot->add_option("--out", run_dir, "run directory holding steps.*.jsonl")->required()->check(CLI::ExistingDirectory);

  std::string data_out;
  std::size_t per_class = 100, size = 16;
  std::uint64_t data_seed = 1234;
  CLI::App* make_dataset = app.add_subcommand("make-dataset", "write the synthetic shapes dataset to disk");
  make_dataset->add_option("--out", data_out, "output directory")->required();
  make_dataset->add_option("--per-class", per_class, "images per class");
  make_dataset->add_option("--seed", data_seed, "generator seed");
  make_dataset->add_option("--size", size, "image side in pixels");

  std::string ckpt_out;
  std::size_t epochs = 15, width = 8;
  std::uint64_t train_seed = 0;
  CLI::App* train = app.add_subcommand("train-source", "train the source CNN on clean synthetic data");
  train->add_option("--out", ckpt_out, "checkpoint path")->required();
  train->add_option("--per-class", per_class, "training images per class");
  train->add_option("--data-seed", data_seed, "dataset seed");
  train->add_option("--size", size, "image side in pixels");
  train->add_option("--epochs", epochs, "training epochs");
  train->add_option("--width", width, "base channel width");
  train->add_option("--seed", train_seed, "initialization and shuffling seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (adapt->parsed()) {
      const ExperimentConfig cfg = resolve_config(config, method, seeds, adapt, lr, lambda, k1, k2, protocol, out);
      const auto result = fret::run_experiment(cfg, {true, quiet ? nullptr : &std::cerr});
      print_summary(result.rows);
      std::cout << "wrote " << (cfg.out_dir / "summary.csv").string() << '\n';
    } else if (validate->parsed()) {
      const ExperimentConfig cfg = resolve_config(config, method, seeds, validate, lr, lambda, k1, k2, protocol, out);
      std::cout << "ok: " << cfg.methods.size() << " method(s) x " << cfg.seeds.size() << " seed(s), "
                << cfg.corruptions.size() << " segment(s)\n";
    } else if (sweep->parsed()) {
      ExperimentConfig cfg = fret::load_config(config);
      ConfigOverrides o;
      o.seeds = seeds;
      if (!out.empty()) o.out_dir = out;
      fret::apply_overrides(cfg, o);
      const auto rows = fret::run_sweep(cfg);
      std::cout << "kind,severity,mean_redundancy\n";
      for (const auto& r : rows) std::cout << r.kind << ',' << r.severity << ',' << r.mean_redundancy << '\n';
      std::cout << "wrote " << (cfg.out_dir / "sweep.csv").string() << '\n';
    } else if (plot->parsed()) {
      for (const auto& f : fret::plot_traces(fret::read_step_logs(run_dir), std::filesystem::path(run_dir) / "plots")) {
        std::cout << "wrote " << f.string() << '\n';
      }
    } else if (make_dataset->parsed()) {
      fret::save_dataset(fret::make_shapes10(per_class, data_seed, size), data_out);
      std::cout << "wrote " << data_out << '\n';
    } else if (train->parsed()) {
      const fret::Dataset data = fret::make_shapes10(per_class, data_seed, size);
      const fret::Dataset held_out = fret::make_shapes10(std::max<std::size_t>(20, per_class / 5), data_seed + 1, size);
      std::mt19937_64 rng(train_seed);
      const auto side = static_cast<fret::Index>(size);
      fret::nn::Sequential net = fret::arch::small_cnn(side, side, 3, 10, rng, static_cast<fret::Index>(width));
      fret::TrainOptions opts;
      opts.epochs = epochs;
      opts.seed = train_seed;
      fret::train_classifier(net, data, opts, [](const fret::EpochStats& s) {
        std::cerr << "epoch " << s.epoch << " loss " << s.mean_loss << " train acc " << s.train_accuracy << '\n';
      });
      std::cout << "held-out clean accuracy " << fret::evaluate_accuracy(net, held_out) << '\n';
      net.save(ckpt_out);
      std::cout << "wrote " << ckpt_out << '\n';
    }
  } catch (const fret::Error& e) {
    std::cerr << "error (" << fret::to_string(e.kind()) << "): " << e.what() << '\n';
    return e.kind() == fret::ErrorKind::kConfigError ? 2 : 1;
  }
  return 0;
}
