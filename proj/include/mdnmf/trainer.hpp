#pragma once

// Stochastic multiplicative-update training for every model variant.
// One epoch shuffles the datasets, takes a single multiplicative sweep
// over each latent, walks the batch schedule updating the bases, then
// renormalizes basis columns (rescaling latents to preserve products)
// and records the loss. Setting the term weights reproduces the presets:
// tau = (1,0,0) plain factorization, (1,>0,0) adversarial, (0,0,1)
// discriminative, all positive for the combined model.

#include "mdnmf/adversarial.hpp"
#include "mdnmf/batching.hpp"
#include "mdnmf/core.hpp"
#include "mdnmf/io.hpp"
#include "mdnmf/rng.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace mdnmf {

enum class InitKind { kExemplar, kRandom };

struct TrainConfig {
  std::vector<Index> atoms;  // basis size per source
  double lambda = 0.0;       // l1 weight on latents, >= 0
  double gamma = 1e-10;      // l1 weight on bases and safe division, > 0
  double tau_w = 1.0;        // weak-supervision term
  double tau_a = 0.0;        // adversarial (subtracted) term
  double tau_s = 0.0;        // strong-supervision term
  int epochs = 50;
  Index batch_weak = 0;  // 0 = full batch
  Index batch_adversarial = 0;
  Index batch_strong = 0;
  BatchStrategy strategy = BatchStrategy::kUndersample;
  int designated = -1;  // 0 weak / 1 adversarial / 2 strong; -1 = first active
  InitKind init = InitKind::kExemplar;
  std::uint64_t seed = 0;
  std::optional<double> entry_floor;  // re-open zeroed basis entries
  std::optional<bool> scale_adversarial_sparsity;  // default: lambda > 1e-6
  int threads = 1;  // per-source parallelism, used only when tau_s = 0
};

/// Everything the trainer may consume for one source. `weak` is always
/// required (it seeds the initialization); the other members only when the
/// matching term weight is positive.
struct SourceBundle {
  Matrix weak;
  std::optional<ScaledDataset> adversarial;
  std::optional<Matrix> strong_sources;
  std::optional<Matrix> strong_mixed;
};

struct TraceRecord {
  int epoch = 0;
  double loss = 0.0;
  double seconds = 0.0;
};

struct ConvergenceTrace {
  std::vector<TraceRecord> records;
};

inline std::string trace_to_csv(const ConvergenceTrace& trace) {
  std::string out = "epoch,loss,seconds\n";
  for (const TraceRecord& r : trace.records) {
    out += csv_line({std::to_string(r.epoch), format_double(r.loss),
                     format_double(r.seconds)});
  }
  return out;
}

struct TrainResult {
  std::vector<Basis> bases;
  std::vector<ConvergenceTrace> traces;
};

inline void check_train_config(const TrainConfig& cfg, size_t sources) {
  check_config(cfg.atoms.size() == sources, "trainer: need one atom count per source");
  for (Index d : cfg.atoms) check_config(d >= 1, "trainer: atom counts must be positive");
  check_config(std::isfinite(cfg.lambda) && cfg.lambda >= 0.0,
               "trainer: lambda must be finite and >= 0");
  check_config(std::isfinite(cfg.gamma) && cfg.gamma > 0.0,
               "trainer: gamma must be finite and > 0");
  check_config(std::isfinite(cfg.tau_w) && cfg.tau_w >= 0.0 &&
                   std::isfinite(cfg.tau_a) && cfg.tau_a >= 0.0 &&
                   std::isfinite(cfg.tau_s) && cfg.tau_s >= 0.0,
               "trainer: term weights must be finite and >= 0");
  check_config(cfg.tau_w + cfg.tau_a + cfg.tau_s > 0.0,
               "trainer: at least one term weight must be positive");
  check_config(cfg.epochs >= 0, "trainer: epochs must be >= 0");
  check_config(cfg.batch_weak >= 0 && cfg.batch_adversarial >= 0 && cfg.batch_strong >= 0,
               "trainer: batch sizes must be >= 0");
  check_config(cfg.designated >= -1 && cfg.designated <= 2,
               "trainer: designated dataset must be -1, 0, 1 or 2");
  check_config(cfg.threads >= 1, "trainer: threads must be >= 1");
  if (cfg.entry_floor) {
    check_config(std::isfinite(*cfg.entry_floor) && *cfg.entry_floor > 0.0,
                 "trainer: entry_floor must be finite and > 0");
  }
}

/// One batch worth of data columns with their latent columns.
struct BatchTerm {
  const Matrix* data = nullptr;    // features x n
  const Matrix* latent = nullptr;  // atoms x n
};

namespace detail {

inline void check_batch_term(const Basis& w, const BatchTerm& t, const char* name) {
  check_config(t.data != nullptr && t.latent != nullptr,
               std::string("w_update_step: ") + name + " term has positive weight but no data");
  check_dims(t.data->rows() == w.features() && t.latent->rows() == w.atoms() &&
                 t.data->cols() == t.latent->cols() && t.data->cols() >= 1,
             std::string("w_update_step: ") + name + " term shape mismatch");
}

}  // namespace detail

/// Multiplicative basis update. The weak and strong terms pull W toward
/// reconstructing their data; the adversarial term appears with numerator
/// and denominator swapped, pushing W away from reconstructing it:
///   W <- W * [tw UH'/N + ta W(HH')/Nh + ts UH'/Ns]
///          / [tw W(HH')/N + ta UH'/Nh + ts W(HH')/Ns + gamma]
/// Terms with zero weight may be null. Counts are the batch widths.
inline Basis w_update_step(const Basis& w, const BatchTerm* weak, const BatchTerm* adv,
                           const BatchTerm* strong, double tau_w, double tau_a,
                           double tau_s, double gamma) {
  check_config(std::isfinite(gamma) && gamma > 0.0, "w_update_step: gamma must be > 0");
  check_config(tau_w >= 0.0 && tau_a >= 0.0 && tau_s >= 0.0,
               "w_update_step: term weights must be >= 0");
  check_config(tau_w + tau_a + tau_s > 0.0,
               "w_update_step: at least one term weight must be positive");

  Matrix num = Matrix::Zero(w.features(), w.atoms());
  Matrix den = Matrix::Constant(w.features(), w.atoms(), gamma);
  // accumulates (tau/n) data*latent' into `straight` and (tau/n) w*(latent latent')
  // into `gram`; the adversarial call swaps the two targets
  auto accumulate = [&w](const BatchTerm& t, double tau, Matrix& straight, Matrix& gram) {
    const double s = tau / static_cast<double>(t.data->cols());
    straight.noalias() += s * (*t.data) * t.latent->transpose();
    gram.noalias() += s * w.mat * ((*t.latent) * t.latent->transpose());
  };
  if (tau_w > 0.0) {
    detail::check_batch_term(w, weak == nullptr ? BatchTerm{} : *weak, "weak");
    accumulate(*weak, tau_w, num, den);
  }
  if (tau_a > 0.0) {
    detail::check_batch_term(w, adv == nullptr ? BatchTerm{} : *adv, "adversarial");
    accumulate(*adv, tau_a, den, num);
  }
  if (tau_s > 0.0) {
    detail::check_batch_term(w, strong == nullptr ? BatchTerm{} : *strong, "strong");
    accumulate(*strong, tau_s, num, den);
  }
  Basis out = w;
  out.mat.array() *= num.array() / den.array();
  return out;
}

/// The majorized objective the basis update descends (per-step monotone):
///   0.5*[tw |U-WH|^2/N - ta |U-WH|^2/Nh + ts |U-WH|^2/Ns] + gamma |W|_1.
inline double basis_update_objective(const Basis& w, const BatchTerm* weak,
                                     const BatchTerm* adv, const BatchTerm* strong,
                                     double tau_w, double tau_a, double tau_s,
                                     double gamma) {
  check_config(std::isfinite(gamma) && gamma > 0.0, "objective: gamma must be > 0");
  auto term = [&w](const BatchTerm& t) {
    return 0.5 * (*t.data - w.mat * *t.latent).squaredNorm() /
           static_cast<double>(t.data->cols());
  };
  double total = gamma * w.mat.sum();
  if (tau_w > 0.0) {
    detail::check_batch_term(w, weak == nullptr ? BatchTerm{} : *weak, "weak");
    total += tau_w * term(*weak);
  }
  if (tau_a > 0.0) {
    detail::check_batch_term(w, adv == nullptr ? BatchTerm{} : *adv, "adversarial");
    total -= tau_a * term(*adv);
  }
  if (tau_s > 0.0) {
    detail::check_batch_term(w, strong == nullptr ? BatchTerm{} : *strong, "strong");
    total += tau_s * term(*strong);
  }
  return total;
}

namespace detail {

inline Basis exemplar_basis(const Matrix& u, Index d, std::mt19937_64& g) {
  Basis w;
  w.mat.resize(u.rows(), d);
  const std::vector<Index> picks = sample_indices(u.cols(), d, g);
  for (Index k = 0; k < d; ++k) w.mat.col(k) = u.col(picks[static_cast<size_t>(k)]);
  normalize_columns(w);
  return w;
}

inline Basis random_basis(Index features, Index d, std::mt19937_64& g) {
  Basis w;
  w.mat.resize(features, d);
  for (Index k = 0; k < d; ++k)
    for (Index i = 0; i < features; ++i) w.mat(i, k) = uniform_unit(g);
  normalize_columns(w);
  return w;
}

inline void permute_columns(Matrix& m, const std::vector<Index>& perm) {
  Matrix tmp(m.rows(), m.cols());
  for (Index j = 0; j < m.cols(); ++j) tmp.col(j) = m.col(perm[static_cast<size_t>(j)]);
  m.swap(tmp);
}

inline void permute_entries(Vector& v, const std::vector<Index>& perm) {
  Vector tmp(v.size());
  for (Index j = 0; j < v.size(); ++j) tmp(j) = v(perm[static_cast<size_t>(j)]);
  v.swap(tmp);
}

}  // namespace detail

/// Draws `d` columns of `u` (distinct while d <= N, uniformly with
/// replacement beyond that) and unit-normalizes them. Used directly as the
/// untrained exemplar model and as the default initializer.
inline Basis init_exemplar(const Matrix& u, Index d, std::uint64_t seed) {
  check_value(u.cols() >= 1, "init_exemplar: data must have at least one column");
  check_data(u, "init data");
  check_config(d >= 1, "init_exemplar: atom count must be positive");
  std::mt19937_64 g(seed);
  return detail::exemplar_basis(u, d, g);
}

namespace detail {

// Per-source working set. Latents live next to shuffled copies of their
// data so column permutations stay aligned.
struct SourceState {
  Basis w;
  Matrix weak;
  Latent weak_h;  // tau_w > 0 only
  Matrix adv;
  Vector adv_scale;
  Latent adv_h;  // tau_a > 0 only
  Matrix strong_u;
  Matrix strong_v;
  Matrix strong_h;  // joint latent over all sources' atoms, tau_s > 0 only
  std::mt19937_64 rng;
  PlanState plan_state;
  std::vector<DatasetExtent> extents;
  std::array<Index, 3> slot_pos{-1, -1, -1};  // weak/adversarial/strong -> extent index
  Index designated = 0;
  ConvergenceTrace trace;
};

constexpr Index kSlotWeak = 0;
constexpr Index kSlotAdversarial = 1;
constexpr Index kSlotStrong = 2;

inline void shuffle_slot(SourceState& s, Index slot) {
  switch (slot) {
    case kSlotWeak: {
      const auto perm = random_permutation(s.weak.cols(), s.rng);
      permute_columns(s.weak, perm);
      permute_columns(s.weak_h.mat, perm);
      break;
    }
    case kSlotAdversarial: {
      const auto perm = random_permutation(s.adv.cols(), s.rng);
      permute_columns(s.adv, perm);
      permute_entries(s.adv_scale, perm);
      permute_columns(s.adv_h.mat, perm);
      break;
    }
    default: {
      const auto perm = random_permutation(s.strong_u.cols(), s.rng);
      permute_columns(s.strong_u, perm);
      permute_columns(s.strong_v, perm);
      permute_columns(s.strong_h, perm);
      break;
    }
  }
}

// Copies the spans of one batch into contiguous matrices, reshuffling first
// where the plan marks a fresh pass. `latent` may be a row block view.
template <typename LatentView>
inline void gather_batch(SourceState& s, Index slot, const std::vector<ColumnSpan>& spans,
                         const Matrix& data, const LatentView& latent, Matrix& data_out,
                         Matrix& latent_out) {
  Index total = 0;
  for (const ColumnSpan& span : spans) total += span.count;
  data_out.resize(data.rows(), total);
  latent_out.resize(latent.rows(), total);
  Index at = 0;
  for (const ColumnSpan& span : spans) {
    if (span.fresh_shuffle) shuffle_slot(s, slot);
    data_out.middleCols(at, span.count) = data.middleCols(span.begin, span.count);
    latent_out.middleCols(at, span.count) = latent.middleCols(span.begin, span.count);
    at += span.count;
  }
}

}  // namespace detail

/// Fits one basis per source. See the file comment for the epoch shape.
/// With tau_s = 0 sources are independent and may train on separate
/// threads; with tau_s > 0 they advance together epoch by epoch, coupled
/// through the joint strong-supervision latent.
inline TrainResult train(const std::vector<SourceBundle>& bundles, const TrainConfig& cfg) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  const auto S = static_cast<Index>(bundles.size());
  check_config(S >= 1, "trainer: need at least one source");
  check_train_config(cfg, bundles.size());

  const Index m = bundles[0].weak.rows();
  const bool scale_sparsity = cfg.scale_adversarial_sparsity.value_or(cfg.lambda > 1e-6);
  std::vector<detail::SourceState> st(static_cast<size_t>(S));
  Index total_atoms = 0;
  std::vector<Index> atom_offset(static_cast<size_t>(S));
  for (Index i = 0; i < S; ++i) {
    atom_offset[static_cast<size_t>(i)] = total_atoms;
    total_atoms += cfg.atoms[static_cast<size_t>(i)];
  }

  for (Index i = 0; i < S; ++i) {
    const SourceBundle& b = bundles[static_cast<size_t>(i)];
    detail::SourceState& s = st[static_cast<size_t>(i)];
    check_data(b.weak, "weak data");
    check_dims(b.weak.rows() == m && b.weak.cols() >= 1,
               "trainer: weak datasets must share the feature dimension");
    s.rng.seed(mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    s.weak = b.weak;

    if (cfg.tau_a > 0.0) {
      check_config(b.adversarial.has_value(),
                   "trainer: tau_a > 0 requires adversarial data for every source");
      check_data(b.adversarial->data, "adversarial data");
      check_dims(b.adversarial->data.rows() == m && b.adversarial->cols() >= 1,
                 "trainer: adversarial data feature dimension mismatch");
      check_dims(b.adversarial->lambda_scale.size() == b.adversarial->cols(),
                 "trainer: adversarial scale length mismatch");
      s.adv = b.adversarial->data;
      s.adv_scale = b.adversarial->lambda_scale;
    }
    if (cfg.tau_s > 0.0) {
      check_config(b.strong_sources.has_value() && b.strong_mixed.has_value(),
                   "trainer: tau_s > 0 requires strong source and mixed data");
      check_data(*b.strong_sources, "strong sources");
      check_data(*b.strong_mixed, "strong mixed");
      check_dims(b.strong_sources->rows() == m && b.strong_mixed->rows() == m,
                 "trainer: strong data feature dimension mismatch");
      check_dims(b.strong_sources->cols() == b.strong_mixed->cols() &&
                     b.strong_sources->cols() >= 1,
                 "trainer: strong sources and mixed data need equal column counts");
      s.strong_u = *b.strong_sources;
      s.strong_v = *b.strong_mixed;
    }

    const Index d = cfg.atoms[static_cast<size_t>(i)];
    s.w = cfg.init == InitKind::kExemplar ? detail::exemplar_basis(s.weak, d, s.rng)
                                          : detail::random_basis(m, d, s.rng);

    if (cfg.tau_w > 0.0) {
      s.slot_pos[detail::kSlotWeak] = static_cast<Index>(s.extents.size());
      s.extents.push_back({s.weak.cols(), cfg.batch_weak});
    }
    if (cfg.tau_a > 0.0) {
      s.slot_pos[detail::kSlotAdversarial] = static_cast<Index>(s.extents.size());
      s.extents.push_back({s.adv.cols(), cfg.batch_adversarial});
    }
    if (cfg.tau_s > 0.0) {
      s.slot_pos[detail::kSlotStrong] = static_cast<Index>(s.extents.size());
      s.extents.push_back({s.strong_u.cols(), cfg.batch_strong});
    }
    if (cfg.designated >= 0) {
      check_config(s.slot_pos[static_cast<size_t>(cfg.designated)] >= 0,
                   "trainer: designated dataset is not used by the chosen term weights");
      s.designated = s.slot_pos[static_cast<size_t>(cfg.designated)];
    }
  }

  // latents need every initial basis, so this runs after the init loop
  Matrix wcat(m, total_atoms);
  auto assemble_wcat = [&] {
    for (Index i = 0; i < S; ++i)
      wcat.middleCols(atom_offset[static_cast<size_t>(i)], cfg.atoms[static_cast<size_t>(i)]) =
          st[static_cast<size_t>(i)].w.mat;
  };
  assemble_wcat();
  for (Index i = 0; i < S; ++i) {
    detail::SourceState& s = st[static_cast<size_t>(i)];
    if (cfg.tau_w > 0.0) s.weak_h.mat = detail::initial_latent(s.w.mat, s.weak);
    if (cfg.tau_a > 0.0) s.adv_h.mat = detail::initial_latent(s.w.mat, s.adv);
    if (cfg.tau_s > 0.0) s.strong_h = detail::initial_latent(wcat, s.strong_v);
  }

  const Vector lambda_all = Vector::Constant(total_atoms, cfg.lambda);

  auto record_loss = [&](Index i, int epoch) {
    detail::SourceState& s = st[static_cast<size_t>(i)];
    const Index d = cfg.atoms[static_cast<size_t>(i)];
    Latent strong_block;
    if (cfg.tau_s > 0.0)
      strong_block.mat = s.strong_h.middleRows(atom_offset[static_cast<size_t>(i)], d);
    const double loss =
        full_loss(s.w, s.weak, s.weak_h, cfg.tau_a > 0.0 ? &s.adv : nullptr,
                  cfg.tau_a > 0.0 ? &s.adv_h : nullptr,
                  cfg.tau_s > 0.0 ? &s.strong_u : nullptr,
                  cfg.tau_s > 0.0 ? &strong_block : nullptr, cfg.tau_w, cfg.tau_a,
                  cfg.tau_s);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    s.trace.records.push_back({epoch, loss, secs});
  };

  // One source, one epoch: latent sweeps, then the batch walk over W.
  auto epoch_for_source = [&](Index i, int epoch) {
    detail::SourceState& s = st[static_cast<size_t>(i)];
    const Index d = cfg.atoms[static_cast<size_t>(i)];
    const Vector lambda_row = Vector::Constant(d, cfg.lambda);

    if (cfg.strategy != BatchStrategy::kIterative) {
      for (Index slot = 0; slot < 3; ++slot)
        if (s.slot_pos[static_cast<size_t>(slot)] >= 0) detail::shuffle_slot(s, slot);
    } else if (epoch == 1) {
      for (Index slot = 0; slot < 3; ++slot)
        if (s.slot_pos[static_cast<size_t>(slot)] >= 0) detail::shuffle_slot(s, slot);
    } else {
      detail::shuffle_slot(s, [&] {
        for (Index slot = 0; slot < 3; ++slot)
          if (s.slot_pos[static_cast<size_t>(slot)] == s.designated) return slot;
        return Index{0};
      }());
    }

    if (cfg.tau_s > 0.0) {
      const Matrix wtw = wcat.transpose() * wcat;
      const Matrix wtv = wcat.transpose() * s.strong_v;
      detail::h_step(s.strong_h, wtw, wtv, lambda_all, nullptr);
    }
    if (cfg.tau_w > 0.0) {
      const Matrix wtw = s.w.mat.transpose() * s.w.mat;
      const Matrix wtu = s.w.mat.transpose() * s.weak;
      detail::h_step(s.weak_h.mat, wtw, wtu, lambda_row, nullptr);
    }
    if (cfg.tau_a > 0.0) {
      const Matrix wtw = s.w.mat.transpose() * s.w.mat;
      const Matrix wtu = s.w.mat.transpose() * s.adv;
      detail::h_step(s.adv_h.mat, wtw, wtu, lambda_row,
                     scale_sparsity ? &s.adv_scale : nullptr);
    }

    const EpochPlan plan =
        batch_plan(s.extents, cfg.strategy, s.designated,
                   cfg.strategy == BatchStrategy::kIterative ? &s.plan_state : nullptr);
    Matrix bu, bh, au, ah, su, sh;
    for (Index b = 0; b < plan.batches; ++b) {
      const auto& per_dataset = plan.slices[static_cast<size_t>(b)];
      BatchTerm weak_t, adv_t, strong_t;
      if (cfg.tau_w > 0.0) {
        detail::gather_batch(s, detail::kSlotWeak,
                             per_dataset[static_cast<size_t>(s.slot_pos[0])], s.weak,
                             s.weak_h.mat, bu, bh);
        weak_t = {&bu, &bh};
      }
      if (cfg.tau_a > 0.0) {
        detail::gather_batch(s, detail::kSlotAdversarial,
                             per_dataset[static_cast<size_t>(s.slot_pos[1])], s.adv,
                             s.adv_h.mat, au, ah);
        adv_t = {&au, &ah};
      }
      if (cfg.tau_s > 0.0) {
        detail::gather_batch(s, detail::kSlotStrong,
                             per_dataset[static_cast<size_t>(s.slot_pos[2])], s.strong_u,
                             s.strong_h.middleRows(atom_offset[static_cast<size_t>(i)], d),
                             su, sh);
        strong_t = {&su, &sh};
      }
      s.w = w_update_step(s.w, cfg.tau_w > 0.0 ? &weak_t : nullptr,
                          cfg.tau_a > 0.0 ? &adv_t : nullptr,
                          cfg.tau_s > 0.0 ? &strong_t : nullptr, cfg.tau_w, cfg.tau_a,
                          cfg.tau_s, cfg.gamma);
      if (cfg.entry_floor) s.w.mat = s.w.mat.cwiseMax(*cfg.entry_floor);
    }
  };

  auto normalize_source = [&](Index i) {
    detail::SourceState& s = st[static_cast<size_t>(i)];
    std::vector<Latent*> latents;
    if (cfg.tau_w > 0.0) latents.push_back(&s.weak_h);
    if (cfg.tau_a > 0.0) latents.push_back(&s.adv_h);
    return normalize_columns(s.w, latents);
  };

  if (cfg.tau_s == 0.0) {
    // independent sources: each one may run all its epochs on its own thread
    auto run_source = [&](Index i) {
      for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        epoch_for_source(i, epoch);
        normalize_source(i);
        record_loss(i, epoch);
      }
    };
    const int workers = std::min<int>(cfg.threads, static_cast<int>(S));
    if (workers <= 1 || cfg.epochs == 0) {
      for (Index i = 0; i < S; ++i) run_source(i);
    } else {
      std::atomic<Index> next{0};
      std::vector<std::thread> pool;
      for (int wk = 0; wk < workers; ++wk) {
        pool.emplace_back([&] {
          for (Index i = next.fetch_add(1); i < S; i = next.fetch_add(1)) run_source(i);
        });
      }
      for (auto& th : pool) th.join();
    }
  } else {
    // coupled sources: everyone advances one epoch before anyone takes the next
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      for (Index i = 0; i < S; ++i) epoch_for_source(i, epoch);
      for (Index i = 0; i < S; ++i) {
        const Vector norms = normalize_source(i);
        const Index off = atom_offset[static_cast<size_t>(i)];
        for (Index j = 0; j < S; ++j) {
          detail::SourceState& other = st[static_cast<size_t>(j)];
          for (Index k = 0; k < norms.size(); ++k)
            if (norms(k) != 0.0) other.strong_h.row(off + k) *= norms(k);
        }
      }
      assemble_wcat();
      for (Index i = 0; i < S; ++i) record_loss(i, epoch);
    }
  }

  TrainResult result;
  for (Index i = 0; i < S; ++i) {
    result.bases.push_back(std::move(st[static_cast<size_t>(i)].w));
    result.traces.push_back(std::move(st[static_cast<size_t>(i)].trace));
  }
  return result;
}

struct SemiSupervisedResult {
  Basis basis;
  Matrix latent;  // final joint activations over [known..., basis]
  ConvergenceTrace trace;
};

/// Fits a basis for one unrepresented source directly on mixtures, holding
/// the pre-trained bases fixed. Alternates a joint latent sweep over the
/// concatenated basis with a multiplicative step on the free basis, full
/// batch. `cfg.atoms` must hold exactly the free basis size.
inline SemiSupervisedResult train_semi_supervised(const std::vector<Basis>& known,
                                                  const Matrix& mixed,
                                                  const TrainConfig& cfg) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  check_config(!known.empty(), "semi-supervised: need at least one known basis");
  check_config(cfg.atoms.size() == 1,
               "semi-supervised: cfg.atoms must hold exactly the free basis size");
  check_train_config(cfg, 1);
  check_data(mixed, "mixed data");
  check_dims(mixed.cols() >= 1, "semi-supervised: mixed data must have columns");

  const Index m = mixed.rows();
  Index known_atoms = 0;
  for (const Basis& w : known) {
    check_dims(w.features() == m, "semi-supervised: basis feature dimension mismatch");
    check_data(w.mat, "known basis");
    for (Index k = 0; k < w.atoms(); ++k) {
      const double n = w.mat.col(k).norm();
      check_value(n == 0.0 || std::abs(n - 1.0) <= 1e-6,
                  "semi-supervised: known bases must be column-normalized");
    }
    known_atoms += w.atoms();
  }

  const Index d = cfg.atoms[0];
  std::mt19937_64 g(mix_seed(cfg.seed, 0));
  Basis ws = cfg.init == InitKind::kExemplar ? detail::exemplar_basis(mixed, d, g)
                                             : detail::random_basis(m, d, g);

  const Index total = known_atoms + d;
  Matrix wcat(m, total);
  Index at = 0;
  for (const Basis& w : known) {
    wcat.middleCols(at, w.atoms()) = w.mat;
    at += w.atoms();
  }
  auto refresh_free_block = [&] { wcat.middleCols(known_atoms, d) = ws.mat; };
  refresh_free_block();

  Matrix h = detail::initial_latent(wcat, mixed);
  const Vector lambda_row = Vector::Constant(total, cfg.lambda);
  const double n_cols = static_cast<double>(mixed.cols());

  SemiSupervisedResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const Matrix wtw = wcat.transpose() * wcat;
    const Matrix wtv = wcat.transpose() * mixed;
    detail::h_step(h, wtw, wtv, lambda_row, nullptr);

    const auto hs = h.middleRows(known_atoms, d);
    const Matrix num = mixed * hs.transpose() / n_cols;
    const Matrix den =
        (wcat * h) * hs.transpose() / n_cols + Matrix::Constant(m, d, cfg.gamma);
    ws.mat.array() *= num.array() / den.array();
    if (cfg.entry_floor) ws.mat = ws.mat.cwiseMax(*cfg.entry_floor);

    const Vector norms = normalize_columns(ws);
    for (Index k = 0; k < d; ++k)
      if (norms(k) != 0.0) h.row(known_atoms + k) *= norms(k);
    refresh_free_block();

    const double loss = (mixed - wcat * h).squaredNorm() / n_cols;
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    result.trace.records.push_back({epoch, loss, secs});
  }
  result.basis = std::move(ws);
  result.latent = std::move(h);
  return result;
}

}  // namespace mdnmf
