#pragma once

// Construction of adversarial datasets for discriminative basis training.
// A source's adversarial pool mixes the other sources' data with mixture
// signals, weighted by omega; mixture columns either get naively inverted
// back toward the source or, under the beta approximation, kept raw and
// rescaled by the second moment of the inversion gain.

#include <mdnmf/core.hpp>

#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

namespace mdnmf {

/// Mixture weights a (summing to 1) used to build mixed signals, plus an
/// optional list of sampled weight vectors when mixing was randomized.
struct MixingSpec {
  Vector weights;
  std::optional<std::vector<Vector>> sampled_weights;
};

/// Adversarial pool description: omega(i, j) weighs source j's data inside
/// source i's pool, with omega(i, i) the weight of the mixed-data block.
/// `use_beta` switches the mixed block from naive inversion to raw mixtures
/// scaled by sqrt(omega_ii * beta_i). `scale_sparsity` toggles per-column
/// sparsity rescaling by sqrt(omega); unset means "on when lambda > 1e-6".
struct AdversarialSpec {
  Matrix omega;
  bool use_beta = false;
  std::optional<bool> scale_sparsity;
};

/// Adversarial data plus the per-column sparsity multipliers (in (0, 1])
/// that keep the scaled columns' encodings equivariant.
struct ScaledDataset {
  Matrix data;
  Vector lambda_scale;

  Index cols() const { return data.cols(); }
};

inline void check_mixing_weights(const Vector& a) {
  check_value(a.size() >= 1 && a.allFinite() && (a.array() >= 0.0).all(),
              "mixing weights must be non-negative and finite");
  check_value(a.squaredNorm() > 0.0, "mixing weights must not be all zero");
}

/// Exact mixture V = sum_i a_i * U_i over column-paired source datasets.
inline Matrix mix_signals(const std::vector<Matrix>& sources, const Vector& a) {
  check_dims(static_cast<Index>(sources.size()) == a.size(),
             "mix_signals: one weight per source required");
  check_value(sources.size() >= 1, "mix_signals: need at least one source");
  check_mixing_weights(a);
  check_value(std::abs(a.sum() - 1.0) <= 1e-9,
              "mix_signals: weights must sum to 1");
  const Index rows = sources[0].rows();
  const Index cols = sources[0].cols();
  Matrix v = Matrix::Zero(rows, cols);
  for (size_t i = 0; i < sources.size(); ++i) {
    check_dims(sources[i].rows() == rows && sources[i].cols() == cols,
               "mix_signals: sources must share shape");
    check_data(sources[i], "mix_signals: source");
    v.noalias() += a[static_cast<Index>(i)] * sources[i];
  }
  return v;
}

/// Naive inversion of a mixture toward source i:
///   f_i(a; v) = (a_i / sum_j a_j^2) * v.
inline Matrix naive_invert(const Vector& a, const Matrix& v, Index i) {
  check_mixing_weights(a);
  check_dims(i >= 0 && i < a.size(), "naive_invert: source index out of range");
  return (a[i] / a.squaredNorm()) * v;
}

/// Second moment of the naive inversion gain,
///   beta_i = E_a[(a_i / sum_j a_j^2)^2],
/// evaluated at the point weights or averaged over the sampled list.
inline double beta(const MixingSpec& mix, Index i) {
  auto gain_sq = [i](const Vector& a) {
    check_mixing_weights(a);
    check_dims(i >= 0 && i < a.size(), "beta: source index out of range");
    const double g = a[i] / a.squaredNorm();
    return g * g;
  };
  if (mix.sampled_weights && !mix.sampled_weights->empty()) {
    double total = 0.0;
    for (const Vector& a : *mix.sampled_weights) total += gain_sq(a);
    return total / static_cast<double>(mix.sampled_weights->size());
  }
  return gain_sq(mix.weights);
}

/// Default adversarial weights for source i over S sources:
///   omega_ij = N_j / Nhat_i for j != i, omega_ii = 1 - sum of the rest,
/// with Nhat_i = N_mixed + sum_{j != i} N_j. Position i carries the
/// mixed-data weight, so the row sums to 1 exactly by construction.
inline Vector default_omega(const std::vector<Index>& weak_counts,
                            Index mixed_count, Index i) {
  const Index s = static_cast<Index>(weak_counts.size());
  check_dims(i >= 0 && i < s, "default_omega: source index out of range");
  Index pool = mixed_count;
  for (Index j = 0; j < s; ++j) {
    check_value(weak_counts[static_cast<size_t>(j)] >= 0 && mixed_count >= 0,
                "default_omega: counts must be >= 0");
    if (j != i) pool += weak_counts[static_cast<size_t>(j)];
  }
  check_config(pool > 0, "default_omega: adversarial pool is empty");
  Vector omega = Vector::Zero(s);
  double rest = 0.0;
  for (Index j = 0; j < s; ++j) {
    if (j == i) continue;
    omega[j] = static_cast<double>(weak_counts[static_cast<size_t>(j)]) /
               static_cast<double>(pool);
    rest += omega[j];
  }
  omega[i] = 1.0 - rest;
  return omega;
}

/// Assembles source i's adversarial pool: the other sources' columns scaled
/// by sqrt(omega_ij), ascending by source index, then the mixed block. The
/// mixed block holds naively inverted mixtures scaled by sqrt(omega_ii), or
/// with `use_beta` the raw mixtures scaled by sqrt(omega_ii * beta_i). The
/// sparsity multiplier of every column is sqrt of its omega. Zero-weight or
/// empty contributions are dropped.
inline ScaledDataset assemble_adversarial(Index i,
                                          const std::vector<Matrix>& weak,
                                          const Matrix& mixed,
                                          const Vector& omega,
                                          const MixingSpec& mix,
                                          bool use_beta = false) {
  const Index s = static_cast<Index>(weak.size());
  check_dims(omega.size() == s, "assemble_adversarial: omega length mismatch");
  check_dims(i >= 0 && i < s, "assemble_adversarial: source index out of range");
  check_value(omega.allFinite() && (omega.array() >= 0.0).all(),
              "assemble_adversarial: omega must be non-negative");
  check_value(std::abs(omega.sum() - 1.0) <= 1e-9,
              "assemble_adversarial: omega must sum to 1");

  Index rows = -1;
  auto note_rows = [&rows](const Matrix& m, const char* what) {
    if (m.cols() == 0) return;
    if (rows < 0) rows = m.rows();
    check_dims(m.rows() == rows, std::string(what) +
                                     ": adversarial blocks must share rows");
  };

  Index total = 0;
  for (Index j = 0; j < s; ++j) {
    if (j == i || omega[j] == 0.0) continue;
    note_rows(weak[static_cast<size_t>(j)], "assemble_adversarial");
    total += weak[static_cast<size_t>(j)].cols();
  }
  const bool want_mixed = omega[i] > 0.0;
  if (want_mixed) {
    note_rows(mixed, "assemble_adversarial");
    total += mixed.cols();
  }
  check_config(total > 0, "assemble_adversarial: adversarial pool is empty");

  ScaledDataset out;
  out.data.resize(rows, total);
  out.lambda_scale.resize(total);
  Index at = 0;
  for (Index j = 0; j < s; ++j) {
    if (j == i || omega[j] == 0.0) continue;
    const Matrix& uj = weak[static_cast<size_t>(j)];
    if (uj.cols() == 0) continue;
    check_data(uj, "assemble_adversarial: source data");
    const double root = std::sqrt(omega[j]);
    out.data.middleCols(at, uj.cols()) = root * uj;
    out.lambda_scale.segment(at, uj.cols()).setConstant(root);
    at += uj.cols();
  }
  if (want_mixed && mixed.cols() > 0) {
    check_data(mixed, "assemble_adversarial: mixed data");
    const double root = std::sqrt(omega[i]);
    if (use_beta) {
      out.data.middleCols(at, mixed.cols()) =
          std::sqrt(omega[i] * beta(mix, i)) * mixed;
    } else if (mix.sampled_weights &&
               static_cast<Index>(mix.sampled_weights->size()) == mixed.cols()) {
      // Per-column exact inversion when every mixture's own weights are known.
      for (Index c = 0; c < mixed.cols(); ++c) {
        out.data.col(at + c) =
            root *
            naive_invert((*mix.sampled_weights)[static_cast<size_t>(c)],
                         mixed.col(c), i);
      }
    } else {
      out.data.middleCols(at, mixed.cols()) =
          root * naive_invert(mix.weights, mixed, i);
    }
    out.lambda_scale.segment(at, mixed.cols()).setConstant(root);
    at += mixed.cols();
  }
  out.data.conservativeResize(rows, at);
  out.lambda_scale.conservativeResize(at);
  check_config(at > 0, "assemble_adversarial: adversarial pool is empty");
  return out;
}

}  // namespace mdnmf
