#pragma once

// Random-search hyperparameter tuning with k-fold cross validation.
// Each trial draws one parameter assignment from the search space and
// reports the mean fold score; the best mean wins. Trials are seeded
// individually so results do not depend on evaluation order or on how
// many worker threads run them.

#include "mdnmf/core.hpp"
#include "mdnmf/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <thread>
#include <vector>

namespace mdnmf {

enum class ParamKind { kLogUniform, kUniform, kUniformInt, kCategorical };

struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::kUniform;
  double lo = 0.0;  // inclusive lower bound (ignored for categorical)
  double hi = 1.0;  // upper bound; inclusive for kUniformInt
  std::vector<double> choices;  // kCategorical only
};

struct SearchSpace {
  std::vector<ParamSpec> params;
  int trials = 30;
  int folds = 5;
};

/// One parameter assignment, keyed by parameter name.
using ParamMap = std::map<std::string, double>;

/// Scores one assignment on one fold. Higher is better. Throwing marks the
/// trial failed without aborting the search.
using TrialObjective = std::function<double(const ParamMap&, int fold)>;

struct TrialRecord {
  int trial = 0;
  ParamMap params;
  std::vector<double> fold_scores;
  double mean_score = 0.0;
  std::string status;  // "ok" or "failed: <reason>"
};

struct SearchResult {
  std::vector<TrialRecord> trials;
  int best_trial = -1;
  ParamMap best_params;
  double best_score = 0.0;
};

inline void check_search_space(const SearchSpace& space) {
  check_config(space.trials > 0, "search needs at least one trial");
  check_config(space.folds > 0, "search needs at least one fold");
  check_config(!space.params.empty(), "search space has no parameters");
  for (const auto& p : space.params) {
    check_config(!p.name.empty(), "search parameter without a name");
    switch (p.kind) {
      case ParamKind::kLogUniform:
        check_config(p.lo > 0.0 && p.hi >= p.lo,
                     "log-uniform bounds must satisfy 0 < lo <= hi: " + p.name);
        break;
      case ParamKind::kUniform:
        check_config(p.hi >= p.lo, "uniform bounds must satisfy lo <= hi: " + p.name);
        break;
      case ParamKind::kUniformInt:
        check_config(p.hi >= p.lo &&
                         std::floor(p.lo) == p.lo && std::floor(p.hi) == p.hi,
                     "integer bounds must be whole with lo <= hi: " + p.name);
        break;
      case ParamKind::kCategorical:
        check_config(!p.choices.empty(), "categorical needs choices: " + p.name);
        break;
    }
  }
}

/// Draws one assignment from the space.
inline ParamMap sample_params(const SearchSpace& space, std::mt19937_64& g) {
  ParamMap out;
  for (const auto& p : space.params) {
    const double u = uniform_unit(g);
    double v = 0.0;
    switch (p.kind) {
      case ParamKind::kLogUniform:
        v = std::exp(std::log(p.lo) + u * (std::log(p.hi) - std::log(p.lo)));
        break;
      case ParamKind::kUniform:
        v = p.lo + u * (p.hi - p.lo);
        break;
      case ParamKind::kUniformInt: {
        const double span = p.hi - p.lo + 1.0;
        v = p.lo + std::floor(u * span);
        v = std::min(v, p.hi);
        break;
      }
      case ParamKind::kCategorical: {
        auto idx = static_cast<size_t>(u * static_cast<double>(p.choices.size()));
        idx = std::min(idx, p.choices.size() - 1);
        v = p.choices[idx];
        break;
      }
    }
    out[p.name] = v;
  }
  return out;
}

/// Runs the search. Every trial seeds its own generator from (seed, trial),
/// so the set of sampled assignments and all scores are reproducible for a
/// given seed regardless of `threads`.
inline SearchResult random_search(const SearchSpace& space,
                                  const TrialObjective& objective,
                                  std::uint64_t seed, int threads = 1) {
  check_search_space(space);
  check_config(static_cast<bool>(objective), "search needs an objective");
  check_config(threads >= 1, "threads must be positive");

  SearchResult result;
  result.trials.resize(static_cast<size_t>(space.trials));

  auto run_trial = [&](int t) {
    TrialRecord& rec = result.trials[static_cast<size_t>(t)];
    rec.trial = t;
    std::mt19937_64 g(mix_seed(seed, static_cast<std::uint64_t>(t)));
    rec.params = sample_params(space, g);
    rec.status = "ok";
    try {
      for (int fold = 0; fold < space.folds; ++fold) {
        const double score = objective(rec.params, fold);
        check_value(std::isfinite(score), "objective returned a non-finite score");
        rec.fold_scores.push_back(score);
      }
      double sum = 0.0;
      for (double s : rec.fold_scores) sum += s;
      rec.mean_score = sum / static_cast<double>(space.folds);
    } catch (const std::exception& e) {
      rec.status = std::string("failed: ") + e.what();
      rec.mean_score = -std::numeric_limits<double>::infinity();
    }
  };

  const int workers = std::min(threads, space.trials);
  if (workers <= 1) {
    for (int t = 0; t < space.trials; ++t) run_trial(t);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int t = next.fetch_add(1); t < space.trials; t = next.fetch_add(1)) {
          run_trial(t);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  for (const auto& rec : result.trials) {
    if (rec.status != "ok") continue;
    if (result.best_trial < 0 || rec.mean_score > result.best_score) {
      result.best_trial = rec.trial;
      result.best_score = rec.mean_score;
      result.best_params = rec.params;
    }
  }
  check_config(result.best_trial >= 0, "every search trial failed");
  return result;
}

/// Space used by the tuning command when the config does not override it.
inline SearchSpace default_search_space() {
  SearchSpace space;
  space.params = {
      {"lambda", ParamKind::kLogUniform, 1e-6, 1.0, {}},
      {"gamma", ParamKind::kLogUniform, 1e-10, 1e-2, {}},
      {"tau_adversarial", ParamKind::kLogUniform, 1e-3, 5.0, {}},
      {"epochs", ParamKind::kUniformInt, 10, 60, {}},
      {"batch", ParamKind::kCategorical, 0, 0, {16, 32, 64, 128}},
  };
  return space;
}

}  // namespace mdnmf
