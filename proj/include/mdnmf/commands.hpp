#pragma once

// Experiment configuration and the command layer behind the CLI verbs:
// mixture synthesis, training, separation, tuning, evaluation, and
// convergence reporting. Configuration is one JSON document; flags override
// fields. Every command writes its artifacts atomically plus a
// manifest.json sufficient to re-run it.

#include <mdnmf/adversarial.hpp>
#include <mdnmf/core.hpp>
#include <mdnmf/io.hpp>
#include <mdnmf/metrics.hpp>
#include <mdnmf/rng.hpp>
#include <mdnmf/search.hpp>
#include <mdnmf/separator.hpp>
#include <mdnmf/stft.hpp>
#include <mdnmf/trainer.hpp>
#include <mdnmf/wav.hpp>

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mdnmf {

using Json = nlohmann::json;

/// Verbosity from the MDNMF_LOG environment variable: "quiet"/"0" silences,
/// "debug"/"2" adds detail, anything else (or unset) is the info default.
inline int log_level() {
  const char* env = std::getenv("MDNMF_LOG");
  if (env == nullptr) return 1;
  const std::string v(env);
  if (v == "quiet" || v == "0") return 0;
  if (v == "debug" || v == "2") return 2;
  return 1;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "mdnmf: " << msg << '\n';
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= 2) std::cerr << "mdnmf[debug]: " << msg << '\n';
}

enum class Mode { kNmf, kEnmf, kMdnmf, kDnmf, kDMdnmf, kSemi };

inline Mode parse_mode(const std::string& name) {
  if (name == "nmf") return Mode::kNmf;
  if (name == "enmf") return Mode::kEnmf;
  if (name == "mdnmf") return Mode::kMdnmf;
  if (name == "dnmf") return Mode::kDnmf;
  if (name == "d+mdnmf") return Mode::kDMdnmf;
  if (name == "semi") return Mode::kSemi;
  throw ConfigError("config: unknown mode '" + name + "'");
}

inline std::string mode_name(Mode m) {
  switch (m) {
    case Mode::kNmf: return "nmf";
    case Mode::kEnmf: return "enmf";
    case Mode::kMdnmf: return "mdnmf";
    case Mode::kDnmf: return "dnmf";
    case Mode::kDMdnmf: return "d+mdnmf";
    case Mode::kSemi: return "semi";
  }
  return "nmf";
}

inline BatchStrategy parse_strategy(const std::string& s) {
  if (s == "proportional") return BatchStrategy::kProportional;
  if (s == "undersample") return BatchStrategy::kUndersample;
  if (s == "oversample") return BatchStrategy::kOversample;
  if (s == "iterative") return BatchStrategy::kIterative;
  throw ConfigError("config: unknown batch strategy '" + s + "'");
}

inline std::string strategy_name(BatchStrategy s) {
  switch (s) {
    case BatchStrategy::kProportional: return "proportional";
    case BatchStrategy::kUndersample: return "undersample";
    case BatchStrategy::kOversample: return "oversample";
    case BatchStrategy::kIterative: return "iterative";
  }
  return "undersample";
}

inline InitKind parse_init(const std::string& s) {
  if (s == "exemplar") return InitKind::kExemplar;
  if (s == "random") return InitKind::kRandom;
  throw ConfigError("config: unknown init '" + s + "'");
}

inline std::string init_name(InitKind k) {
  return k == InitKind::kExemplar ? "exemplar" : "random";
}

inline ParamKind parse_param_kind(const std::string& s) {
  if (s == "log_uniform") return ParamKind::kLogUniform;
  if (s == "uniform") return ParamKind::kUniform;
  if (s == "int") return ParamKind::kUniformInt;
  if (s == "categorical") return ParamKind::kCategorical;
  throw ConfigError("config: unknown search parameter kind '" + s + "'");
}

inline std::string param_kind_name(ParamKind k) {
  switch (k) {
    case ParamKind::kLogUniform: return "log_uniform";
    case ParamKind::kUniform: return "uniform";
    case ParamKind::kUniformInt: return "int";
    case ParamKind::kCategorical: return "categorical";
  }
  return "uniform";
}

namespace detail {

inline void check_keys(const Json& j,
                       std::initializer_list<const char*> allowed,
                       const std::string& where) {
  check_config(j.is_object(), "config: " + where + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    check_config(known, "config: unknown key '" + item.key() + "' in " + where);
  }
}

inline std::vector<std::string> string_list(const Json& j,
                                            const std::string& where) {
  check_config(j.is_array(), "config: " + where + " must be an array");
  std::vector<std::string> out;
  for (const auto& e : j) {
    check_config(e.is_string(), "config: " + where + " entries must be strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

inline std::vector<double> double_list(const Json& j, const std::string& where) {
  check_config(j.is_array(), "config: " + where + " must be an array");
  std::vector<double> out;
  for (const auto& e : j) {
    check_config(e.is_number(), "config: " + where + " entries must be numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

inline void require_exists(const std::string& path, const std::string& where) {
  check_config(std::filesystem::exists(path),
               "config: " + where + " path does not exist: " + path);
}

inline std::string lower_extension(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace detail

/// Dataset paths for one source. `adversarial_scale` optionally pairs a
/// per-column sparsity multiplier vector with the adversarial matrix.
struct SourceData {
  std::string weak;
  std::string adversarial;
  std::string adversarial_scale;
  std::string strong;
};

struct SynthFiles {
  std::vector<std::string> sources;
  std::vector<double> weights;
  std::string speech;
  std::string noise;
  std::optional<double> snr_db;
};

struct SeparateFiles {
  std::vector<std::string> bases;
  std::string input;
  std::vector<std::string> references;
};

struct EvalFiles {
  std::vector<std::string> estimates;
  std::vector<std::string> references;
  std::vector<std::string> baseline;
  std::optional<std::vector<double>> weights;
  std::string metric;  // empty picks by file type
};

struct ExperimentConfig {
  Mode mode = Mode::kNmf;
  std::string out = "out";
  std::vector<SourceData> sources;
  std::string mixed;
  std::string strong_mixed;
  std::vector<std::string> known_bases;
  std::optional<Vector> adversarial_weights;
  bool adversarial_use_beta = false;
  TrainConfig train;
  SeparationConfig separation;
  bool separation_sparsity_explicit = false;
  StftConfig stft;
  SearchSpace search;
  std::string metric = "psnr";
  std::optional<std::vector<double>> metric_weights;
  SynthFiles synth;
  SeparateFiles separate;
  EvalFiles eval;
  std::vector<std::string> traces;
  Json resolved;  // full config after defaults and presets, re-runnable
};

/// Applies the per-mode term-weight pattern and rejects overrides that
/// leave it: nmf is fixed at (1, 0, 0); mdnmf requires (1, tau_a > 0, 0);
/// dnmf is fixed at (0, 0, 1); d+mdnmf requires all three positive. enmf
/// additionally trains zero epochs; semi ignores the term weights at run
/// time and keeps the nmf pattern.
inline void apply_mode_preset(Mode mode, const Json& jt, TrainConfig& cfg) {
  double tw = 1.0, ta = 0.0, ts = 0.0;
  switch (mode) {
    case Mode::kMdnmf:
      ta = 0.2;
      break;
    case Mode::kDnmf:
      tw = 0.0;
      ts = 1.0;
      break;
    case Mode::kDMdnmf:
      ta = 0.2;
      ts = 0.5;
      break;
    default:
      break;
  }
  if (jt.contains("tau_weak")) tw = jt.at("tau_weak").get<double>();
  if (jt.contains("tau_adversarial")) ta = jt.at("tau_adversarial").get<double>();
  if (jt.contains("tau_strong")) ts = jt.at("tau_strong").get<double>();
  const std::string name = mode_name(mode);
  switch (mode) {
    case Mode::kNmf:
    case Mode::kEnmf:
    case Mode::kSemi:
      check_config(tw == 1.0 && ta == 0.0 && ts == 0.0,
                   "config: mode '" + name + "' fixes term weights at (1, 0, 0)");
      break;
    case Mode::kMdnmf:
      check_config(tw == 1.0 && ta > 0.0 && ts == 0.0,
                   "config: mode 'mdnmf' requires term weights (1, >0, 0)");
      break;
    case Mode::kDnmf:
      check_config(tw == 0.0 && ta == 0.0 && ts == 1.0,
                   "config: mode 'dnmf' fixes term weights at (0, 0, 1)");
      break;
    case Mode::kDMdnmf:
      check_config(tw > 0.0 && ta > 0.0 && ts > 0.0,
                   "config: mode 'd+mdnmf' requires all term weights > 0");
      break;
  }
  cfg.tau_w = tw;
  cfg.tau_a = ta;
  cfg.tau_s = ts;
  if (mode == Mode::kEnmf) {
    check_config(!jt.contains("epochs") || jt.at("epochs").get<int>() == 0,
                 "config: mode 'enmf' does not train; epochs must be 0");
    cfg.epochs = 0;
  }
}

inline Json config_to_json(const ExperimentConfig& cfg) {
  Json root;
  root["mode"] = mode_name(cfg.mode);
  root["out"] = cfg.out;
  root["seed"] = cfg.train.seed;
  root["threads"] = cfg.train.threads;

  Json jt;
  if (!cfg.train.atoms.empty()) {
    std::vector<long long> atoms(cfg.train.atoms.begin(), cfg.train.atoms.end());
    jt["atoms"] = atoms;
  }
  jt["lambda"] = cfg.train.lambda;
  jt["gamma"] = cfg.train.gamma;
  jt["tau_weak"] = cfg.train.tau_w;
  jt["tau_adversarial"] = cfg.train.tau_a;
  jt["tau_strong"] = cfg.train.tau_s;
  jt["epochs"] = cfg.train.epochs;
  jt["batch_weak"] = static_cast<long long>(cfg.train.batch_weak);
  jt["batch_adversarial"] = static_cast<long long>(cfg.train.batch_adversarial);
  jt["batch_strong"] = static_cast<long long>(cfg.train.batch_strong);
  jt["strategy"] = strategy_name(cfg.train.strategy);
  jt["designated"] = cfg.train.designated;
  jt["init"] = init_name(cfg.train.init);
  if (cfg.train.entry_floor) jt["entry_floor"] = *cfg.train.entry_floor;
  if (cfg.train.scale_adversarial_sparsity)
    jt["scale_adversarial_sparsity"] = *cfg.train.scale_adversarial_sparsity;
  root["train"] = jt;

  Json js;
  js["sparsity"] = cfg.separation.sparsity;
  if (cfg.separation.per_source_sparsity)
    js["per_source_sparsity"] = *cfg.separation.per_source_sparsity;
  js["epsilon"] = cfg.separation.epsilon;
  js["max_iters"] = cfg.separation.max_iters;
  js["rel_tol"] = cfg.separation.rel_tol;
  root["separation"] = js;

  root["stft"] = Json{{"window", static_cast<long long>(cfg.stft.window_len)},
                      {"fft", static_cast<long long>(cfg.stft.fft_size)},
                      {"hop", static_cast<long long>(cfg.stft.hop)},
                      {"sample_rate", cfg.stft.sample_rate}};

  Json jq;
  jq["trials"] = cfg.search.trials;
  jq["folds"] = cfg.search.folds;
  Json params = Json::array();
  for (const ParamSpec& p : cfg.search.params) {
    Json e;
    e["name"] = p.name;
    e["kind"] = param_kind_name(p.kind);
    if (p.kind == ParamKind::kCategorical) {
      e["choices"] = p.choices;
    } else {
      e["lo"] = p.lo;
      e["hi"] = p.hi;
    }
    params.push_back(e);
  }
  jq["params"] = params;
  root["search"] = jq;

  root["metric"] = cfg.metric;
  if (cfg.metric_weights) root["metric_weights"] = *cfg.metric_weights;

  if (!cfg.sources.empty() || !cfg.mixed.empty() || !cfg.strong_mixed.empty() ||
      !cfg.known_bases.empty() || cfg.adversarial_weights) {
    Json jd;
    if (!cfg.sources.empty()) {
      Json list = Json::array();
      for (const SourceData& s : cfg.sources) {
        Json e;
        if (!s.weak.empty()) e["weak"] = s.weak;
        if (!s.adversarial.empty()) e["adversarial"] = s.adversarial;
        if (!s.adversarial_scale.empty())
          e["adversarial_scale"] = s.adversarial_scale;
        if (!s.strong.empty()) e["strong"] = s.strong;
        list.push_back(e);
      }
      jd["sources"] = list;
    }
    if (!cfg.mixed.empty()) jd["mixed"] = cfg.mixed;
    if (!cfg.strong_mixed.empty()) jd["strong_mixed"] = cfg.strong_mixed;
    if (!cfg.known_bases.empty()) jd["known_bases"] = cfg.known_bases;
    if (cfg.adversarial_weights) {
      std::vector<double> w(cfg.adversarial_weights->data(),
                            cfg.adversarial_weights->data() +
                                cfg.adversarial_weights->size());
      jd["adversarial_weights"] = w;
    }
    if (cfg.adversarial_use_beta) jd["adversarial_use_beta"] = true;
    root["data"] = jd;
  }

  if (!cfg.synth.sources.empty() || !cfg.synth.speech.empty()) {
    Json jm;
    if (!cfg.synth.sources.empty()) {
      jm["sources"] = cfg.synth.sources;
      jm["weights"] = cfg.synth.weights;
    }
    if (!cfg.synth.speech.empty()) jm["speech"] = cfg.synth.speech;
    if (!cfg.synth.noise.empty()) jm["noise"] = cfg.synth.noise;
    if (cfg.synth.snr_db) jm["snr_db"] = *cfg.synth.snr_db;
    root["synth"] = jm;
  }
  if (!cfg.separate.bases.empty() || !cfg.separate.input.empty()) {
    Json jp;
    if (!cfg.separate.bases.empty()) jp["bases"] = cfg.separate.bases;
    if (!cfg.separate.input.empty()) jp["input"] = cfg.separate.input;
    if (!cfg.separate.references.empty())
      jp["references"] = cfg.separate.references;
    root["separate"] = jp;
  }
  if (!cfg.eval.estimates.empty()) {
    Json je;
    je["estimates"] = cfg.eval.estimates;
    je["references"] = cfg.eval.references;
    if (!cfg.eval.baseline.empty()) je["baseline"] = cfg.eval.baseline;
    if (cfg.eval.weights) je["weights"] = *cfg.eval.weights;
    if (!cfg.eval.metric.empty()) je["metric"] = cfg.eval.metric;
    root["eval"] = je;
  }
  if (!cfg.traces.empty()) root["traces"] = cfg.traces;
  return root;
}

/// Parses and validates a full experiment configuration: applies the mode's
/// term-weight preset, materializes defaults (separation sparsity follows
/// the training lambda unless set), and checks every referenced path.
inline ExperimentConfig parse_experiment_config(const Json& root) {
  ExperimentConfig cfg;
  try {
    detail::check_keys(root,
                       {"mode", "out", "seed", "threads", "data", "train",
                        "separation", "stft", "search", "metric",
                        "metric_weights", "synth", "separate", "eval", "traces"},
                       "top level");
    cfg.mode = parse_mode(root.value("mode", std::string("nmf")));
    cfg.out = root.value("out", std::string("out"));

    const Json jt = root.value("train", Json::object());
    detail::check_keys(jt,
                       {"atoms", "lambda", "gamma", "tau_weak",
                        "tau_adversarial", "tau_strong", "epochs", "batch",
                        "batch_weak", "batch_adversarial", "batch_strong",
                        "strategy", "designated", "init", "entry_floor",
                        "scale_adversarial_sparsity"},
                       "train");
    if (jt.contains("atoms")) {
      check_config(jt.at("atoms").is_array(),
                   "config: train.atoms must be an array");
      for (const auto& e : jt.at("atoms"))
        cfg.train.atoms.push_back(e.get<Index>());
    }
    cfg.train.lambda = jt.value("lambda", cfg.train.lambda);
    cfg.train.gamma = jt.value("gamma", cfg.train.gamma);
    cfg.train.epochs = jt.value("epochs", cfg.train.epochs);
    if (jt.contains("batch")) {
      const Index b = jt.at("batch").get<Index>();
      cfg.train.batch_weak = b;
      cfg.train.batch_adversarial = b;
      cfg.train.batch_strong = b;
    }
    cfg.train.batch_weak = jt.value("batch_weak", cfg.train.batch_weak);
    cfg.train.batch_adversarial =
        jt.value("batch_adversarial", cfg.train.batch_adversarial);
    cfg.train.batch_strong = jt.value("batch_strong", cfg.train.batch_strong);
    cfg.train.strategy =
        parse_strategy(jt.value("strategy", strategy_name(cfg.train.strategy)));
    cfg.train.designated = jt.value("designated", cfg.train.designated);
    cfg.train.init = parse_init(jt.value("init", init_name(cfg.train.init)));
    if (jt.contains("entry_floor"))
      cfg.train.entry_floor = jt.at("entry_floor").get<double>();
    if (jt.contains("scale_adversarial_sparsity"))
      cfg.train.scale_adversarial_sparsity =
          jt.at("scale_adversarial_sparsity").get<bool>();
    apply_mode_preset(cfg.mode, jt, cfg.train);
    cfg.train.seed = root.value("seed", cfg.train.seed);
    cfg.train.threads = root.value("threads", cfg.train.threads);

    const Json js = root.value("separation", Json::object());
    detail::check_keys(
        js, {"sparsity", "per_source_sparsity", "epsilon", "max_iters", "rel_tol"},
        "separation");
    cfg.separation_sparsity_explicit = js.contains("sparsity");
    cfg.separation.sparsity = js.value("sparsity", cfg.train.lambda);
    if (js.contains("per_source_sparsity"))
      cfg.separation.per_source_sparsity = detail::double_list(
          js.at("per_source_sparsity"), "separation.per_source_sparsity");
    cfg.separation.epsilon = js.value("epsilon", cfg.separation.epsilon);
    cfg.separation.max_iters = js.value("max_iters", cfg.separation.max_iters);
    cfg.separation.rel_tol = js.value("rel_tol", cfg.separation.rel_tol);

    const Json jf = root.value("stft", Json::object());
    detail::check_keys(jf, {"window", "fft", "hop", "sample_rate"}, "stft");
    cfg.stft.window_len = jf.value("window", cfg.stft.window_len);
    cfg.stft.fft_size = jf.value("fft", cfg.stft.window_len);
    cfg.stft.hop = jf.value("hop", cfg.stft.window_len / 2);
    cfg.stft.sample_rate = jf.value("sample_rate", cfg.stft.sample_rate);
    check_stft_config(cfg.stft);

    if (root.contains("search")) {
      const Json jq = root.at("search");
      detail::check_keys(jq, {"trials", "folds", "params"}, "search");
      cfg.search.trials = jq.value("trials", cfg.search.trials);
      cfg.search.folds = jq.value("folds", cfg.search.folds);
      if (jq.contains("params")) {
        check_config(jq.at("params").is_array(),
                     "config: search.params must be an array");
        for (const auto& e : jq.at("params")) {
          detail::check_keys(e, {"name", "kind", "lo", "hi", "choices"},
                             "search.params");
          ParamSpec p;
          p.name = e.at("name").get<std::string>();
          p.kind = parse_param_kind(e.at("kind").get<std::string>());
          p.lo = e.value("lo", 0.0);
          p.hi = e.value("hi", 0.0);
          if (e.contains("choices"))
            p.choices = detail::double_list(e.at("choices"),
                                            "search.params.choices");
          cfg.search.params.push_back(p);
        }
      }
    } else {
      cfg.search = default_search_space();
      if (cfg.mode != Mode::kMdnmf && cfg.mode != Mode::kDMdnmf) {
        std::erase_if(cfg.search.params, [](const ParamSpec& p) {
          return p.name == "tau_adversarial";
        });
      }
    }

    cfg.metric = root.value("metric", cfg.metric);
    check_config(cfg.metric == "psnr" || cfg.metric == "si_sdr",
                 "config: metric must be 'psnr' or 'si_sdr'");
    if (root.contains("metric_weights"))
      cfg.metric_weights =
          detail::double_list(root.at("metric_weights"), "metric_weights");

    if (root.contains("data")) {
      const Json jd = root.at("data");
      detail::check_keys(jd,
                         {"sources", "mixed", "strong_mixed", "known_bases",
                          "adversarial_weights", "adversarial_use_beta"},
                         "data");
      if (jd.contains("sources")) {
        check_config(jd.at("sources").is_array(),
                     "config: data.sources must be an array");
        for (const auto& e : jd.at("sources")) {
          detail::check_keys(
              e, {"weak", "adversarial", "adversarial_scale", "strong"},
              "data.sources");
          SourceData s;
          s.weak = e.value("weak", std::string());
          s.adversarial = e.value("adversarial", std::string());
          s.adversarial_scale = e.value("adversarial_scale", std::string());
          s.strong = e.value("strong", std::string());
          cfg.sources.push_back(std::move(s));
        }
      }
      cfg.mixed = jd.value("mixed", std::string());
      cfg.strong_mixed = jd.value("strong_mixed", std::string());
      if (jd.contains("known_bases"))
        cfg.known_bases =
            detail::string_list(jd.at("known_bases"), "data.known_bases");
      if (jd.contains("adversarial_weights")) {
        const std::vector<double> w = detail::double_list(
            jd.at("adversarial_weights"), "data.adversarial_weights");
        cfg.adversarial_weights = Eigen::Map<const Vector>(
            w.data(), static_cast<Index>(w.size()));
      }
      cfg.adversarial_use_beta = jd.value("adversarial_use_beta", false);
    }

    if (root.contains("synth")) {
      const Json jm = root.at("synth");
      detail::check_keys(jm, {"sources", "weights", "speech", "noise", "snr_db"},
                         "synth");
      if (jm.contains("sources"))
        cfg.synth.sources = detail::string_list(jm.at("sources"), "synth.sources");
      if (jm.contains("weights"))
        cfg.synth.weights = detail::double_list(jm.at("weights"), "synth.weights");
      cfg.synth.speech = jm.value("speech", std::string());
      cfg.synth.noise = jm.value("noise", std::string());
      if (jm.contains("snr_db")) cfg.synth.snr_db = jm.at("snr_db").get<double>();
    }

    if (root.contains("separate")) {
      const Json jp = root.at("separate");
      detail::check_keys(jp, {"bases", "input", "references"}, "separate");
      if (jp.contains("bases"))
        cfg.separate.bases = detail::string_list(jp.at("bases"), "separate.bases");
      cfg.separate.input = jp.value("input", std::string());
      if (jp.contains("references"))
        cfg.separate.references =
            detail::string_list(jp.at("references"), "separate.references");
    }

    if (root.contains("eval")) {
      const Json je = root.at("eval");
      detail::check_keys(
          je, {"estimates", "references", "baseline", "weights", "metric"},
          "eval");
      if (je.contains("estimates"))
        cfg.eval.estimates =
            detail::string_list(je.at("estimates"), "eval.estimates");
      if (je.contains("references"))
        cfg.eval.references =
            detail::string_list(je.at("references"), "eval.references");
      if (je.contains("baseline"))
        cfg.eval.baseline = detail::string_list(je.at("baseline"), "eval.baseline");
      if (je.contains("weights"))
        cfg.eval.weights = detail::double_list(je.at("weights"), "eval.weights");
      cfg.eval.metric = je.value("metric", std::string());
      if (!cfg.eval.metric.empty())
        check_config(cfg.eval.metric == "psnr" || cfg.eval.metric == "si_sdr",
                     "config: eval.metric must be 'psnr' or 'si_sdr'");
    }

    if (root.contains("traces"))
      cfg.traces = detail::string_list(root.at("traces"), "traces");
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  auto need = [](const std::string& p, const std::string& where) {
    if (!p.empty()) detail::require_exists(p, where);
  };
  for (size_t i = 0; i < cfg.sources.size(); ++i) {
    const std::string tag = "data.sources[" + std::to_string(i) + "]";
    need(cfg.sources[i].weak, tag + ".weak");
    need(cfg.sources[i].adversarial, tag + ".adversarial");
    need(cfg.sources[i].adversarial_scale, tag + ".adversarial_scale");
    need(cfg.sources[i].strong, tag + ".strong");
  }
  need(cfg.mixed, "data.mixed");
  need(cfg.strong_mixed, "data.strong_mixed");
  for (const std::string& p : cfg.known_bases) need(p, "data.known_bases");
  for (const std::string& p : cfg.synth.sources) need(p, "synth.sources");
  need(cfg.synth.speech, "synth.speech");
  need(cfg.synth.noise, "synth.noise");
  for (const std::string& p : cfg.separate.bases) need(p, "separate.bases");
  need(cfg.separate.input, "separate.input");
  for (const std::string& p : cfg.separate.references)
    need(p, "separate.references");
  for (const std::string& p : cfg.eval.estimates) need(p, "eval.estimates");
  for (const std::string& p : cfg.eval.references) need(p, "eval.references");
  for (const std::string& p : cfg.eval.baseline) need(p, "eval.baseline");
  for (const std::string& p : cfg.traces) need(p, "traces");

  cfg.resolved = config_to_json(cfg);
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  Json root;
  try {
    root = Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw ConfigError("config: cannot parse " + path + ": " + e.what());
  }
  return parse_experiment_config(root);
}

/// Loads one dataset as non-negative columns: a MatrixFile (.nmf), IDX
/// images (.idx/.ubyte), a directory of PGM images, a single PGM, or a WAV
/// clip rendered to STFT magnitudes at the configured framing.
inline Matrix load_data_matrix(const std::string& path,
                               const StftConfig& stft_cfg) {
  const std::filesystem::path p(path);
  if (std::filesystem::is_directory(p)) return read_pgm_directory(p);
  const std::string ext = detail::lower_extension(path);
  if (ext == ".nmf") {
    Matrix m = read_matrix(p);
    check_data(m, "data file " + path);
    return m;
  }
  if (ext == ".idx" || ext == ".ubyte") return read_idx_images(p);
  if (ext == ".pgm") {
    const Matrix img = read_pgm(p);
    Matrix out(img.size(), 1);
    for (Index i = 0; i < img.rows(); ++i)
      for (Index j = 0; j < img.cols(); ++j) out(i * img.cols() + j, 0) = img(i, j);
    return out;
  }
  if (ext == ".wav") {
    const WavData w = read_wav(p);
    StftConfig c = stft_cfg;
    c.sample_rate = w.sample_rate;
    return stft(w.samples, c).magnitudes;
  }
  throw ConfigError("unsupported data format: " + path);
}

inline Basis load_basis(const std::string& path) {
  Basis b;
  b.mat = read_matrix(path);
  check_data(b.mat, "basis file " + path);
  return b;
}

inline Vector matrix_to_vector(const Matrix& m, const std::string& what) {
  check_dims(m.rows() == 1 || m.cols() == 1,
             what + ": expected a vector-shaped matrix");
  if (m.cols() == 1) return m.col(0);
  return m.row(0).transpose();
}

inline std::string write_manifest(const ExperimentConfig& cfg,
                                  const std::string& command, Json outputs,
                                  Json extra = Json::object()) {
  Json m;
  m["command"] = command;
  m["config"] = cfg.resolved;
  m["outputs"] = std::move(outputs);
  for (auto& item : extra.items()) m[item.key()] = item.value();
  const std::filesystem::path path =
      std::filesystem::path(cfg.out) / "manifest.json";
  atomic_write(path, m.dump(2) + "\n");
  return path.string();
}

struct SynthMixOutputs {
  std::string mixed;
  std::vector<std::string> components;
  std::optional<double> noise_scale;
  std::string manifest;
};

/// Builds paired supervision data: either a weighted image/matrix mixture
/// with its ground-truth components, or a speech+noise mixture at a target
/// SNR. The manifest records the weights (or SNR and fitted noise scale).
inline SynthMixOutputs cmd_synth_mix(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out);
  const std::filesystem::path dir(cfg.out);
  SynthMixOutputs out;
  Json jout;
  if (cfg.synth.snr_db) {
    check_config(!cfg.synth.speech.empty() && !cfg.synth.noise.empty(),
                 "synth-mix: snr mode needs speech and noise files");
    const WavData speech = read_wav(cfg.synth.speech);
    const WavData noise = read_wav(cfg.synth.noise);
    check_dims(speech.sample_rate == noise.sample_rate,
               "synth-mix: speech and noise sample rates differ");
    const SnrMix mix = mix_at_snr(speech.samples, noise.samples, *cfg.synth.snr_db);
    out.mixed = (dir / "mixture.wav").string();
    write_wav(out.mixed, mix.mixture, speech.sample_rate, WavFormat::kFloat32);
    out.components = {(dir / "component_0.wav").string(),
                      (dir / "component_1.wav").string()};
    write_wav(out.components[0], speech.samples, speech.sample_rate,
              WavFormat::kFloat32);
    write_wav(out.components[1], mix.scaled_noise, speech.sample_rate,
              WavFormat::kFloat32);
    out.noise_scale = mix.noise_scale;
    jout = Json{{"mixture", out.mixed},
                {"components", out.components},
                {"snr_db", *cfg.synth.snr_db},
                {"noise_scale", mix.noise_scale}};
    log_info("synth-mix: wrote " + out.mixed);
  } else {
    check_config(!cfg.synth.sources.empty(), "synth-mix: no source datasets");
    check_config(cfg.synth.weights.size() == cfg.synth.sources.size(),
                 "synth-mix: need one weight per source");
    std::vector<Matrix> data;
    for (const std::string& p : cfg.synth.sources)
      data.push_back(load_data_matrix(p, cfg.stft));
    const Vector a = Eigen::Map<const Vector>(
        cfg.synth.weights.data(), static_cast<Index>(cfg.synth.weights.size()));
    const Matrix mixed = mix_signals(data, a);
    out.mixed = (dir / "mixed.nmf").string();
    write_matrix(out.mixed, mixed);
    for (size_t i = 0; i < data.size(); ++i) {
      const std::string p =
          (dir / ("component_" + std::to_string(i) + ".nmf")).string();
      write_matrix(p, (a[static_cast<Index>(i)] * data[i]).eval());
      out.components.push_back(p);
    }
    jout = Json{{"mixed", out.mixed},
                {"components", out.components},
                {"weights", cfg.synth.weights},
                {"seed", cfg.train.seed}};
    log_info("synth-mix: wrote " + out.mixed);
  }
  out.manifest = write_manifest(cfg, "synth-mix", jout);
  return out;
}

struct TrainCmdOutputs {
  std::vector<std::string> bases;
  std::vector<std::string> traces;
  std::vector<double> final_losses;
  std::string manifest;
};

/// Trains per the configured mode and writes one basis MatrixFile and one
/// convergence-trace CSV per source (enmf writes exemplar bases and empty
/// traces; semi writes the single free basis).
inline TrainCmdOutputs cmd_train(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out);
  const std::filesystem::path dir(cfg.out);
  TrainCmdOutputs out;
  auto emit = [&](const std::string& tag, const Basis& b,
                  const ConvergenceTrace& tr) {
    const std::string bp = (dir / ("basis_" + tag + ".nmf")).string();
    const std::string tp = (dir / ("trace_" + tag + ".csv")).string();
    write_matrix(bp, b.mat);
    atomic_write(tp, trace_to_csv(tr));
    out.bases.push_back(bp);
    out.traces.push_back(tp);
    out.final_losses.push_back(tr.records.empty()
                                   ? std::numeric_limits<double>::quiet_NaN()
                                   : tr.records.back().loss);
  };

  if (cfg.mode == Mode::kSemi) {
    check_config(!cfg.known_bases.empty(), "train: mode 'semi' needs data.known_bases");
    check_config(!cfg.mixed.empty(), "train: mode 'semi' needs data.mixed");
    std::vector<Basis> known;
    for (const std::string& p : cfg.known_bases) known.push_back(load_basis(p));
    const Matrix v = load_data_matrix(cfg.mixed, cfg.stft);
    const SemiSupervisedResult res = train_semi_supervised(known, v, cfg.train);
    emit("free", res.basis, res.trace);
  } else if (cfg.mode == Mode::kEnmf) {
    check_config(!cfg.sources.empty(), "train: data.sources is empty");
    check_config(cfg.train.atoms.size() == cfg.sources.size(),
                 "train: need one atoms entry per data source");
    for (size_t i = 0; i < cfg.sources.size(); ++i) {
      check_config(!cfg.sources[i].weak.empty(),
                   "train: source " + std::to_string(i) + " needs weak data");
      const Matrix u = load_data_matrix(cfg.sources[i].weak, cfg.stft);
      Basis b = init_exemplar(u, cfg.train.atoms[i],
                              mix_seed(cfg.train.seed, static_cast<Index>(i)));
      normalize_columns(b);
      emit(std::to_string(i), b, ConvergenceTrace{});
    }
  } else {
    check_config(!cfg.sources.empty(), "train: data.sources is empty");
    const size_t S = cfg.sources.size();
    std::vector<Matrix> weaks(S);
    for (size_t i = 0; i < S; ++i) {
      check_config(!cfg.sources[i].weak.empty(),
                   "train: source " + std::to_string(i) + " needs weak data");
      weaks[i] = load_data_matrix(cfg.sources[i].weak, cfg.stft);
    }
    std::vector<SourceBundle> bundles(S);
    for (size_t i = 0; i < S; ++i) bundles[i].weak = weaks[i];

    if (cfg.train.tau_a > 0.0) {
      bool any_explicit = false;
      for (const SourceData& s : cfg.sources)
        if (!s.adversarial.empty()) any_explicit = true;
      if (any_explicit) {
        for (size_t i = 0; i < S; ++i) {
          check_config(!cfg.sources[i].adversarial.empty(),
                       "train: every source needs an adversarial dataset");
          ScaledDataset ds;
          ds.data = load_data_matrix(cfg.sources[i].adversarial, cfg.stft);
          if (!cfg.sources[i].adversarial_scale.empty()) {
            ds.lambda_scale =
                matrix_to_vector(read_matrix(cfg.sources[i].adversarial_scale),
                                 "adversarial scale " + cfg.sources[i].adversarial_scale);
          } else {
            ds.lambda_scale = Vector::Ones(ds.data.cols());
          }
          bundles[i].adversarial = std::move(ds);
        }
      } else {
        check_config(cfg.adversarial_weights && !cfg.mixed.empty(),
                     "train: the adversarial term needs per-source adversarial "
                     "data or data.mixed with data.adversarial_weights");
        check_dims(cfg.adversarial_weights->size() == static_cast<Index>(S),
                   "train: one adversarial weight per source required");
        const Matrix pool = load_data_matrix(cfg.mixed, cfg.stft);
        std::vector<Index> counts;
        for (const Matrix& w : weaks) counts.push_back(w.cols());
        const MixingSpec mix{*cfg.adversarial_weights, std::nullopt};
        for (size_t i = 0; i < S; ++i) {
          const Vector omega =
              default_omega(counts, pool.cols(), static_cast<Index>(i));
          bundles[i].adversarial =
              assemble_adversarial(static_cast<Index>(i), weaks, pool, omega,
                                   mix, cfg.adversarial_use_beta);
        }
      }
    }
    if (cfg.train.tau_s > 0.0) {
      check_config(!cfg.strong_mixed.empty(),
                   "train: the strong term needs data.strong_mixed");
      const Matrix vm = load_data_matrix(cfg.strong_mixed, cfg.stft);
      for (size_t i = 0; i < S; ++i) {
        check_config(!cfg.sources[i].strong.empty(),
                     "train: source " + std::to_string(i) + " needs strong data");
        bundles[i].strong_sources = load_data_matrix(cfg.sources[i].strong, cfg.stft);
        bundles[i].strong_mixed = vm;
      }
    }
    const TrainResult res = train(bundles, cfg.train);
    for (size_t i = 0; i < S; ++i)
      emit(std::to_string(i), res.bases[i], res.traces[i]);
  }

  out.manifest = write_manifest(cfg, "train",
                                Json{{"bases", out.bases}, {"traces", out.traces}});
  log_info("train: mode " + mode_name(cfg.mode) + ", " +
           std::to_string(out.bases.size()) + " bases -> " + cfg.out);
  return out;
}

struct SeparateCmdOutputs {
  std::vector<std::string> components;
  std::string metrics;  // empty when no references were given
  std::string manifest;
  SeparationResult result;  // magnitude-domain result for audio inputs
};

/// Separates a matrix or WAV input with the given bases. Audio inputs run
/// through the STFT; each separated magnitude component is recombined with
/// the mixture phases and synthesized back to a WAV. With references given,
/// writes a metrics CSV (per-column PSNR for matrices, per-clip SI-SDR for
/// audio) including mean/median/stderr summary rows per source.
inline SeparateCmdOutputs cmd_separate(const ExperimentConfig& cfg) {
  check_config(!cfg.separate.bases.empty(), "separate: no basis files given");
  check_config(!cfg.separate.input.empty(), "separate: no input given");
  std::filesystem::create_directories(cfg.out);
  const std::filesystem::path dir(cfg.out);
  std::vector<Basis> bases;
  for (const std::string& p : cfg.separate.bases) bases.push_back(load_basis(p));
  const bool audio = detail::lower_extension(cfg.separate.input) == ".wav";
  const bool with_refs = !cfg.separate.references.empty();
  if (with_refs)
    check_dims(cfg.separate.references.size() == bases.size(),
               "separate: one reference per source required");

  SeparateCmdOutputs out;
  std::string rows = "source,item,metric,value\n";
  auto append_metric_rows = [&rows](size_t source, const std::string& metric,
                                    const std::vector<double>& values) {
    for (size_t k = 0; k < values.size(); ++k)
      rows += csv_line({std::to_string(source), std::to_string(k), metric,
                        format_double(values[k])});
    const MetricReport rep = aggregate(values);
    rows += csv_line({std::to_string(source), "mean", metric,
                      format_double(rep.mean)});
    rows += csv_line({std::to_string(source), "median", metric,
                      format_double(rep.median)});
    rows += csv_line({std::to_string(source), "stderr", metric,
                      format_double(rep.stderr_mean)});
  };

  if (audio) {
    const WavData wav = read_wav(cfg.separate.input);
    StftConfig sc = cfg.stft;
    sc.sample_rate = wav.sample_rate;
    const Spectrogram spec = stft(wav.samples, sc);
    out.result = separate(bases, spec.magnitudes, cfg.separation);
    for (size_t i = 0; i < bases.size(); ++i) {
      const Spectrogram comp = phase_transfer(out.result.components[i], spec);
      const Vector sig = istft(comp);
      const std::string p =
          (dir / ("component_" + std::to_string(i) + ".wav")).string();
      write_wav(p, sig, wav.sample_rate, WavFormat::kFloat32);
      out.components.push_back(p);
      if (with_refs) {
        const WavData ref = read_wav(cfg.separate.references[i]);
        append_metric_rows(i, "si_sdr", {si_sdr(ref.samples, sig)});
      }
    }
  } else {
    const Matrix v = load_data_matrix(cfg.separate.input, cfg.stft);
    out.result = separate(bases, v, cfg.separation);
    for (size_t i = 0; i < bases.size(); ++i) {
      const std::string p =
          (dir / ("component_" + std::to_string(i) + ".nmf")).string();
      write_matrix(p, out.result.components[i]);
      out.components.push_back(p);
      if (with_refs) {
        const Matrix ref = load_data_matrix(cfg.separate.references[i], cfg.stft);
        check_dims(ref.rows() == v.rows() && ref.cols() == v.cols(),
                   "separate: reference shape must match the input");
        std::vector<double> values;
        for (Index j = 0; j < v.cols(); ++j)
          values.push_back(
              psnr(ref.col(j), out.result.components[i].col(j)));
        append_metric_rows(i, "psnr", values);
      }
    }
  }
  if (with_refs) {
    out.metrics = (dir / "metrics.csv").string();
    atomic_write(out.metrics, rows);
  }
  Json jout{{"components", out.components}};
  if (!out.metrics.empty()) jout["metrics"] = out.metrics;
  if (out.result.zero_reconstruction) jout["zero_reconstruction"] = true;
  out.manifest = write_manifest(cfg, "separate", jout);
  log_info("separate: " + std::to_string(out.components.size()) +
           " components -> " + cfg.out);
  return out;
}

inline void apply_tuned_param(TrainConfig& tc, Mode mode,
                              const std::string& name, double value) {
  if (name == "lambda") {
    tc.lambda = value;
    return;
  }
  if (name == "gamma") {
    tc.gamma = value;
    return;
  }
  if (name == "epochs") {
    tc.epochs = static_cast<int>(std::llround(value));
    check_config(tc.epochs >= 0, "tune: epochs must be >= 0");
    return;
  }
  if (name == "batch") {
    const Index b = static_cast<Index>(std::llround(value));
    check_config(b >= 0, "tune: batch must be >= 0");
    tc.batch_weak = b;
    tc.batch_adversarial = b;
    tc.batch_strong = b;
    return;
  }
  if (name == "tau_adversarial") {
    check_config(mode == Mode::kMdnmf || mode == Mode::kDMdnmf,
                 "tune: tau_adversarial is fixed by mode '" + mode_name(mode) + "'");
    check_config(value > 0.0, "tune: tau_adversarial must stay > 0");
    tc.tau_a = value;
    return;
  }
  if (name == "tau_weak") {
    check_config(mode == Mode::kDMdnmf,
                 "tune: tau_weak is fixed by mode '" + mode_name(mode) + "'");
    check_config(value > 0.0, "tune: tau_weak must stay > 0");
    tc.tau_w = value;
    return;
  }
  if (name == "tau_strong") {
    check_config(mode == Mode::kDMdnmf,
                 "tune: tau_strong is fixed by mode '" + mode_name(mode) + "'");
    check_config(value > 0.0, "tune: tau_strong must stay > 0");
    tc.tau_s = value;
    return;
  }
  throw ConfigError("tune: unknown parameter '" + name + "'");
}

struct TuneCmdOutputs {
  std::string trials_csv;
  std::string best_config;
  std::string manifest;
  SearchResult result;
};

/// Random-search tuning scored by k-fold separation quality on paired
/// strong-supervision data: folds partition the pairs round-robin, the
/// model trains per fold (strong-supervised modes train on the other
/// folds), and the fold score is the metric's weighted mean over sources
/// and held-out pairs. Persists every trial and the winning config.
inline TuneCmdOutputs cmd_tune(const ExperimentConfig& cfg) {
  check_config(cfg.mode == Mode::kNmf || cfg.mode == Mode::kMdnmf ||
                   cfg.mode == Mode::kDnmf || cfg.mode == Mode::kDMdnmf,
               "tune: mode must be one of nmf, mdnmf, dnmf, d+mdnmf");
  check_search_space(cfg.search);
  {
    // Fail fast if a searched parameter is not tunable in this mode.
    TrainConfig probe = cfg.train;
    for (const ParamSpec& p : cfg.search.params) {
      const double sample =
          p.kind == ParamKind::kCategorical ? p.choices.front() : p.hi;
      apply_tuned_param(probe, cfg.mode, p.name, sample);
    }
  }
  check_config(!cfg.sources.empty(), "tune: data.sources is empty");
  const size_t S = cfg.sources.size();
  check_config(!cfg.strong_mixed.empty(),
               "tune: scoring needs data.strong_mixed");
  std::vector<Matrix> weaks(S);
  std::vector<Matrix> strongs(S);
  for (size_t i = 0; i < S; ++i) {
    check_config(!cfg.sources[i].weak.empty(),
                 "tune: source " + std::to_string(i) + " needs weak data");
    check_config(!cfg.sources[i].strong.empty(),
                 "tune: source " + std::to_string(i) + " needs strong data for scoring");
    weaks[i] = load_data_matrix(cfg.sources[i].weak, cfg.stft);
    strongs[i] = load_data_matrix(cfg.sources[i].strong, cfg.stft);
  }
  const Matrix vm = load_data_matrix(cfg.strong_mixed, cfg.stft);
  const Index n_pairs = vm.cols();
  for (size_t i = 0; i < S; ++i)
    check_dims(strongs[i].cols() == n_pairs,
               "tune: strong data must pair with strong_mixed columns");
  const int folds = cfg.search.folds;
  check_config(folds <= n_pairs, "tune: more folds than strong pairs");
  if (cfg.train.tau_s > 0.0)
    check_config(folds >= 2,
                 "tune: strong-supervised modes need folds >= 2 so training "
                 "keeps held-out pairs");
  if (cfg.metric_weights)
    check_dims(cfg.metric_weights->size() == S,
               "tune: one metric weight per source required");

  std::vector<std::optional<ScaledDataset>> pools(S);
  if (cfg.train.tau_a > 0.0) {
    bool any_explicit = false;
    for (const SourceData& s : cfg.sources)
      if (!s.adversarial.empty()) any_explicit = true;
    if (any_explicit) {
      for (size_t i = 0; i < S; ++i) {
        check_config(!cfg.sources[i].adversarial.empty(),
                     "tune: every source needs an adversarial dataset");
        ScaledDataset ds;
        ds.data = load_data_matrix(cfg.sources[i].adversarial, cfg.stft);
        ds.lambda_scale =
            cfg.sources[i].adversarial_scale.empty()
                ? Vector::Ones(ds.data.cols())
                : matrix_to_vector(read_matrix(cfg.sources[i].adversarial_scale),
                                   "adversarial scale");
        pools[i] = std::move(ds);
      }
    } else {
      check_config(cfg.adversarial_weights && !cfg.mixed.empty(),
                   "tune: the adversarial term needs per-source adversarial "
                   "data or data.mixed with data.adversarial_weights");
      check_dims(cfg.adversarial_weights->size() == static_cast<Index>(S),
                 "tune: one adversarial weight per source required");
      const Matrix pool = load_data_matrix(cfg.mixed, cfg.stft);
      std::vector<Index> counts;
      for (const Matrix& w : weaks) counts.push_back(w.cols());
      const MixingSpec mix{*cfg.adversarial_weights, std::nullopt};
      for (size_t i = 0; i < S; ++i) {
        const Vector omega =
            default_omega(counts, pool.cols(), static_cast<Index>(i));
        pools[i] = assemble_adversarial(static_cast<Index>(i), weaks, pool,
                                        omega, mix, cfg.adversarial_use_beta);
      }
    }
  }

  auto slice = [](const Matrix& m, const std::vector<Index>& idx) {
    Matrix out(m.rows(), static_cast<Index>(idx.size()));
    for (size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Index>(k)) = m.col(idx[k]);
    return out;
  };

  TrialObjective objective = [&](const ParamMap& params, int fold) -> double {
    TrainConfig tc = cfg.train;
    for (const auto& [name, value] : params)
      apply_tuned_param(tc, cfg.mode, name, value);
    tc.seed = mix_seed(cfg.train.seed, 1000 + static_cast<std::uint64_t>(fold));
    tc.threads = 1;

    std::vector<Index> eval_idx, train_idx;
    for (Index j = 0; j < n_pairs; ++j) {
      if (j % folds == fold)
        eval_idx.push_back(j);
      else
        train_idx.push_back(j);
    }

    std::vector<SourceBundle> bundles(S);
    for (size_t i = 0; i < S; ++i) {
      bundles[i].weak = weaks[i];
      if (tc.tau_a > 0.0) bundles[i].adversarial = pools[i];
      if (tc.tau_s > 0.0) {
        bundles[i].strong_sources = slice(strongs[i], train_idx);
        bundles[i].strong_mixed = slice(vm, train_idx);
      }
    }
    const TrainResult trained = train(bundles, tc);

    SeparationConfig scfg = cfg.separation;
    if (!cfg.separation_sparsity_explicit) scfg.sparsity = tc.lambda;
    const Matrix mixed_eval = slice(vm, eval_idx);
    const SeparationResult sep = separate(trained.bases, mixed_eval, scfg);

    std::vector<double> values;
    std::vector<double> wts;
    for (size_t i = 0; i < S; ++i) {
      const Matrix ref = slice(strongs[i], eval_idx);
      const double wi = cfg.metric_weights ? (*cfg.metric_weights)[i] : 1.0;
      for (Index j = 0; j < ref.cols(); ++j) {
        const double v = cfg.metric == "psnr"
                             ? psnr(ref.col(j), sep.components[i].col(j))
                             : si_sdr(ref.col(j), sep.components[i].col(j));
        values.push_back(v);
        wts.push_back(wi);
      }
    }
    const MetricReport rep = aggregate(values, wts);
    // All held-out pairs exactly reconstructed: maximal finite score.
    return rep.finite_count == 0 ? 1e99 : rep.mean;
  };

  const SearchResult result =
      random_search(cfg.search, objective, cfg.train.seed, cfg.train.threads);

  std::filesystem::create_directories(cfg.out);
  const std::filesystem::path dir(cfg.out);
  std::string rows = "trial,params,fold_scores,mean_score,status\n";
  for (const TrialRecord& r : result.trials) {
    std::string scores;
    for (size_t k = 0; k < r.fold_scores.size(); ++k) {
      if (k > 0) scores += ';';
      scores += format_double(r.fold_scores[k]);
    }
    rows += csv_line({std::to_string(r.trial), Json(r.params).dump(), scores,
                      format_double(r.mean_score), r.status});
  }
  TuneCmdOutputs out;
  out.result = result;
  out.trials_csv = (dir / "trials.csv").string();
  atomic_write(out.trials_csv, rows);

  ExperimentConfig best = cfg;
  for (const auto& [name, value] : result.best_params)
    apply_tuned_param(best.train, best.mode, name, value);
  if (!best.separation_sparsity_explicit)
    best.separation.sparsity = best.train.lambda;
  best.resolved = config_to_json(best);
  out.best_config = (dir / "best_config.json").string();
  atomic_write(out.best_config, best.resolved.dump(2) + "\n");

  out.manifest = write_manifest(
      cfg, "tune",
      Json{{"trials", out.trials_csv}, {"best_config", out.best_config}},
      Json{{"best", Json{{"trial", result.best_trial},
                         {"score", result.best_score},
                         {"params", Json(result.best_params)}}}});
  log_info("tune: best trial " + std::to_string(result.best_trial) +
           " score " + format_double(result.best_score));
  return out;
}

struct EvalCmdOutputs {
  std::string report;
  std::string manifest;
  MetricReport summary;
  std::optional<double> delta_median;
};

/// Scores estimate files against reference files (PSNR for matrices,
/// SI-SDR for WAVs by default) and writes per-item rows plus weighted
/// aggregate rows. Zero-weight items are dropped. An optional baseline
/// list adds per-item deltas and the difference of medians.
inline EvalCmdOutputs cmd_eval(const ExperimentConfig& cfg) {
  const EvalFiles& ev = cfg.eval;
  check_config(!ev.estimates.empty(), "eval: no estimate files given");
  check_dims(ev.estimates.size() == ev.references.size(),
             "eval: estimate/reference counts differ");
  const bool with_baseline = !ev.baseline.empty();
  if (with_baseline)
    check_dims(ev.baseline.size() == ev.estimates.size(),
               "eval: baseline/estimate counts differ");
  if (ev.weights)
    check_dims(ev.weights->size() == ev.estimates.size(),
               "eval: one weight per item required");
  std::filesystem::create_directories(cfg.out);

  std::string metric = ev.metric;
  if (metric.empty())
    metric = detail::lower_extension(ev.estimates[0]) == ".wav" ? "si_sdr"
                                                                : "psnr";
  auto score = [&](const std::string& est, const std::string& ref) {
    if (detail::lower_extension(est) == ".wav") {
      const Vector e = read_wav(est).samples;
      const Vector r = read_wav(ref).samples;
      return metric == "si_sdr" ? si_sdr(r, e) : psnr(r, e);
    }
    const Matrix e = read_matrix(est);
    const Matrix r = read_matrix(ref);
    if (metric == "psnr") return psnr(r, e);
    const Vector ev_ = Eigen::Map<const Vector>(e.data(), e.size());
    const Vector rv = Eigen::Map<const Vector>(r.data(), r.size());
    return si_sdr(rv, ev_);
  };

  const std::string tail = with_baseline ? ",baseline,delta" : "";
  std::string rows = "item,estimate,reference,weight,value" + tail + "\n";
  std::vector<double> values, bvalues, wts;
  for (size_t k = 0; k < ev.estimates.size(); ++k) {
    const double w = ev.weights ? (*ev.weights)[k] : 1.0;
    if (w == 0.0) continue;
    const double v = score(ev.estimates[k], ev.references[k]);
    values.push_back(v);
    wts.push_back(w);
    std::vector<std::string> fields = {std::to_string(k), ev.estimates[k],
                                       ev.references[k], format_double(w),
                                       format_double(v)};
    if (with_baseline) {
      const double b = score(ev.baseline[k], ev.references[k]);
      bvalues.push_back(b);
      fields.push_back(format_double(b));
      fields.push_back(format_double(v - b));
    }
    rows += csv_line(fields);
  }
  check_config(!values.empty(), "eval: every item has zero weight");

  EvalCmdOutputs out;
  out.summary = aggregate(values, wts);
  auto summary_row = [&](const std::string& label, double value) {
    std::vector<std::string> fields = {label, "", "", "", format_double(value)};
    if (with_baseline) {
      fields.push_back("");
      fields.push_back("");
    }
    rows += csv_line(fields);
  };
  summary_row("mean", out.summary.mean);
  summary_row("median", out.summary.median);
  summary_row("stderr", out.summary.stderr_mean);
  summary_row("exact_count", static_cast<double>(out.summary.exact_count));
  if (with_baseline) {
    const MetricReport base = aggregate(bvalues, wts);
    out.delta_median = out.summary.median - base.median;
    summary_row("delta_median", *out.delta_median);
  }

  out.report = (std::filesystem::path(cfg.out) / "eval.csv").string();
  atomic_write(out.report, rows);
  out.manifest = write_manifest(cfg, "eval", Json{{"report", out.report}});
  log_info("eval: " + std::to_string(values.size()) + " items, median " +
           format_double(out.summary.median));
  return out;
}

inline ConvergenceTrace read_trace_csv(const std::string& path) {
  const std::string text = read_file(path);
  ConvergenceTrace trace;
  size_t pos = 0;
  auto next_line = [&]() -> std::optional<std::string> {
    if (pos >= text.size()) return std::nullopt;
    const size_t end = text.find('\n', pos);
    std::string line = end == std::string::npos
                           ? text.substr(pos)
                           : text.substr(pos, end - pos);
    pos = end == std::string::npos ? text.size() : end + 1;
    return line;
  };
  const auto header = next_line();
  check_io(header && *header == "epoch,loss,seconds",
           path + ": not a convergence-trace CSV");
  auto parse_double = [&](const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    check_io(res.ec == std::errc{} && res.ptr == s.data() + s.size(),
             path + ": malformed trace value '" + s + "'");
    return v;
  };
  while (auto line = next_line()) {
    if (line->empty()) continue;
    const size_t c1 = line->find(',');
    const size_t c2 = c1 == std::string::npos ? c1 : line->find(',', c1 + 1);
    check_io(c2 != std::string::npos && line->find(',', c2 + 1) == std::string::npos,
             path + ": malformed trace row '" + *line + "'");
    TraceRecord rec;
    rec.epoch = static_cast<int>(parse_double(line->substr(0, c1)));
    rec.loss = parse_double(line->substr(c1 + 1, c2 - c1 - 1));
    rec.seconds = parse_double(line->substr(c2 + 1));
    trace.records.push_back(rec);
  }
  return trace;
}

struct ConvergenceCmdOutputs {
  std::string report;
  std::string manifest;
};

/// Summarizes convergence-trace CSVs: loss endpoints, the worst relative
/// per-epoch increase (0 when the loss never increases), whether the trace
/// is non-increasing within 1e-10 relative slack, and total wall time.
inline ConvergenceCmdOutputs cmd_convergence_report(const ExperimentConfig& cfg) {
  check_config(!cfg.traces.empty(), "convergence-report: no trace files given");
  std::filesystem::create_directories(cfg.out);
  std::string rows =
      "trace,epochs,first_loss,final_loss,max_relative_increase,monotone,seconds\n";
  for (const std::string& p : cfg.traces) {
    const ConvergenceTrace tr = read_trace_csv(p);
    const size_t n = tr.records.size();
    if (n == 0) {
      rows += csv_line({p, "0", "", "", "", "yes", ""});
      continue;
    }
    double max_inc = 0.0;
    for (size_t e = 1; e < n; ++e) {
      const double prev = tr.records[e - 1].loss;
      const double inc = (tr.records[e].loss - prev) /
                         std::max(std::abs(prev), std::numeric_limits<double>::min());
      max_inc = std::max(max_inc, inc);
    }
    rows += csv_line({p, std::to_string(n),
                      format_double(tr.records.front().loss),
                      format_double(tr.records.back().loss),
                      format_double(max_inc),
                      max_inc <= 1e-10 ? "yes" : "no",
                      format_double(tr.records.back().seconds)});
  }
  ConvergenceCmdOutputs out;
  out.report =
      (std::filesystem::path(cfg.out) / "convergence_report.csv").string();
  atomic_write(out.report, rows);
  out.manifest =
      write_manifest(cfg, "convergence-report", Json{{"report", out.report}});
  log_info("convergence-report: " + std::to_string(cfg.traces.size()) +
           " traces -> " + out.report);
  return out;
}

}  // namespace mdnmf
