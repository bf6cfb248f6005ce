// Command-line driver. Every verb reads one JSON experiment config; the
// flags below override or supply the matching config fields, so small jobs
// need no config file at all.

#include <mdnmf/commands.hpp>

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

int main(int argc, char** argv) {
  CLI::App app{"mdnmf: source separation with adversarially trained NMF"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> threads;
  app.add_option("--config", config_path, "JSON experiment config")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out_dir, "override the output directory");
  app.add_option("--threads", threads, "override the worker thread count");

  auto* synth = app.add_subcommand(
      "synth-mix", "build a mixture with ground-truth components");
  std::vector<std::string> synth_sources;
  std::vector<double> synth_weights;
  std::string speech, noise;
  std::optional<double> snr_db;
  synth->add_option("--source", synth_sources, "source dataset (repeatable)");
  synth->add_option("--weight", synth_weights, "mixing weight per source");
  synth->add_option("--speech", speech, "speech WAV for SNR mixing");
  synth->add_option("--noise", noise, "noise WAV for SNR mixing");
  synth->add_option("--snr-db", snr_db, "target speech-to-noise ratio in dB");

  auto* train = app.add_subcommand("train", "train bases per the config mode");

  auto* separate =
      app.add_subcommand("separate", "separate a mixture with trained bases");
  std::vector<std::string> sep_bases, sep_refs;
  std::string sep_input;
  separate->add_option("--basis", sep_bases, "basis MatrixFile (repeatable)");
  separate->add_option("--input", sep_input, "mixture (.nmf/.wav/images)");
  separate->add_option("--reference", sep_refs,
                       "ground-truth component per source (repeatable)");

  auto* tune = app.add_subcommand(
      "tune", "random-search hyperparameters with k-fold scoring");

  auto* eval = app.add_subcommand("eval", "score estimates against references");
  std::vector<std::string> eval_est, eval_ref, eval_base;
  std::vector<double> eval_weights;
  std::string eval_metric;
  eval->add_option("--estimate", eval_est, "estimate file (repeatable)");
  eval->add_option("--reference", eval_ref, "reference file (repeatable)");
  eval->add_option("--baseline", eval_base, "baseline estimate (repeatable)");
  eval->add_option("--weight", eval_weights, "weight per item");
  eval->add_option("--metric", eval_metric, "psnr or si_sdr");

  auto* report =
      app.add_subcommand("convergence-report", "summarize training traces");
  std::vector<std::string> trace_files;
  report->add_option("--trace", trace_files, "trace CSV (repeatable)");

  for (auto* sub : {synth, train, separate, tune, eval, report})
    sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    mdnmf::Json root = mdnmf::Json::object();
    if (!config_path.empty()) {
      try {
        root = mdnmf::Json::parse(mdnmf::read_file(config_path));
      } catch (const mdnmf::Json::exception& e) {
        throw mdnmf::ConfigError("config: cannot parse " + config_path + ": " +
                                 e.what());
      }
    }
    if (seed) root["seed"] = *seed;
    if (out_dir) root["out"] = *out_dir;
    if (threads) root["threads"] = *threads;

    if (synth->parsed()) {
      if (!synth_sources.empty()) root["synth"]["sources"] = synth_sources;
      if (!synth_weights.empty()) root["synth"]["weights"] = synth_weights;
      if (!speech.empty()) root["synth"]["speech"] = speech;
      if (!noise.empty()) root["synth"]["noise"] = noise;
      if (snr_db) root["synth"]["snr_db"] = *snr_db;
    } else if (separate->parsed()) {
      if (!sep_bases.empty()) root["separate"]["bases"] = sep_bases;
      if (!sep_input.empty()) root["separate"]["input"] = sep_input;
      if (!sep_refs.empty()) root["separate"]["references"] = sep_refs;
    } else if (eval->parsed()) {
      if (!eval_est.empty()) root["eval"]["estimates"] = eval_est;
      if (!eval_ref.empty()) root["eval"]["references"] = eval_ref;
      if (!eval_base.empty()) root["eval"]["baseline"] = eval_base;
      if (!eval_weights.empty()) root["eval"]["weights"] = eval_weights;
      if (!eval_metric.empty()) root["eval"]["metric"] = eval_metric;
    } else if (report->parsed()) {
      if (!trace_files.empty()) root["traces"] = trace_files;
    }

    const mdnmf::ExperimentConfig cfg = mdnmf::parse_experiment_config(root);
    if (synth->parsed()) {
      std::cout << mdnmf::cmd_synth_mix(cfg).mixed << '\n';
    } else if (train->parsed()) {
      for (const std::string& p : mdnmf::cmd_train(cfg).bases)
        std::cout << p << '\n';
    } else if (separate->parsed()) {
      for (const std::string& p : mdnmf::cmd_separate(cfg).components)
        std::cout << p << '\n';
    } else if (tune->parsed()) {
      std::cout << mdnmf::cmd_tune(cfg).best_config << '\n';
    } else if (eval->parsed()) {
      std::cout << mdnmf::cmd_eval(cfg).report << '\n';
    } else if (report->parsed()) {
      std::cout << mdnmf::cmd_convergence_report(cfg).report << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "mdnmf: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
