#pragma once

// Core types and operations for sparse non-negative matrix factorization:
// the multiplicative latent update, iterative encoding, reconstruction and
// loss evaluation, and basis column normalization. Data matrices hold one
// sample per column; a basis is features x atoms, a latent matrix is
// atoms x samples.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace mdnmf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Shape mismatch between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Data violates a domain requirement (negative or non-finite entries, ...).
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent or out-of-range configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void check_dims(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

inline void check_value(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

inline void check_config(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

/// Requires every entry of `a` to be finite and >= 0.
inline void check_data(const Matrix& a, const std::string& name) {
  check_value(a.allFinite(), name + ": entries must be finite");
  check_value((a.array() >= 0.0).all(), name + ": entries must be non-negative");
}

/// Dictionary of non-negative atoms, one per column (features x atoms).
/// Training keeps every non-zero column at unit Euclidean norm.
struct Basis {
  Matrix mat;

  Index features() const { return mat.rows(); }
  Index atoms() const { return mat.cols(); }
};

/// Non-negative activations, one sample per column (atoms x samples).
struct Latent {
  Matrix mat;

  Index atoms() const { return mat.rows(); }
  Index cols() const { return mat.cols(); }
};

/// Controls the iterative encoder. `sparsity` is the l1 weight on the
/// latents and doubles as the safe-division constant of the multiplicative
/// update. `per_column_sparsity` optionally rescales it per data column.
struct EncodeConfig {
  double sparsity = 0.0;
  int max_iters = 200;
  double rel_tol = 1e-6;
  std::optional<Vector> per_column_sparsity;
};

inline void check_encode_config(const EncodeConfig& cfg, Index data_cols) {
  check_config(std::isfinite(cfg.sparsity) && cfg.sparsity >= 0.0,
               "encode: sparsity must be finite and >= 0");
  check_config(cfg.max_iters >= 0, "encode: max_iters must be >= 0");
  check_config(std::isfinite(cfg.rel_tol) && cfg.rel_tol >= 0.0,
               "encode: rel_tol must be finite and >= 0");
  if (cfg.per_column_sparsity) {
    check_dims(cfg.per_column_sparsity->size() == data_cols,
               "encode: per_column_sparsity length must equal data columns");
    check_value((cfg.per_column_sparsity->array() > 0.0).all() &&
                    cfg.per_column_sparsity->allFinite(),
                "encode: per_column_sparsity entries must be finite and > 0");
  }
}

namespace detail {

// Guard added to denominators so that vanishing penalties map 0/0 to 0.
constexpr double kDivisionGuard = 1e-30;

// Effective l1 weight for entry (k, j) is lambda_row(k) * col_scale(j)
// (col_scale == nullptr means all ones).

// One multiplicative update of h in place for the objective
//   0.5 * ||u - w h||_F^2 + sum_{k,j} lambda(k,j) * h(k,j).
// wtw = w^T w and wtu = w^T u are precomputed. Zero entries stay zero.
inline void h_step(Matrix& h, const Matrix& wtw, const Matrix& wtu,
                   const Vector& lambda_row, const Vector* col_scale) {
  Matrix denom = wtw * h;
  if (col_scale == nullptr) {
    denom.colwise() += lambda_row;
  } else {
    denom.noalias() += lambda_row * col_scale->transpose();
  }
  const double guard = lambda_row.minCoeff() > 0.0 ? 0.0 : kDivisionGuard;
  h.array() *= wtu.array() / (denom.array() + guard);
}

inline double l1_penalty(const Matrix& h, const Vector& lambda_row,
                         const Vector* col_scale) {
  if (col_scale == nullptr) {
    return lambda_row.dot(h.rowwise().sum());
  }
  return lambda_row.dot(h * *col_scale);
}

inline double objective_impl(const Matrix& w, const Matrix& u, const Matrix& h,
                             const Vector& lambda_row, const Vector* col_scale) {
  return 0.5 * (u - w * h).squaredNorm() + l1_penalty(h, lambda_row, col_scale);
}

// Runs multiplicative updates until the relative objective change drops
// below rel_tol or max_iters steps have been taken.
inline Matrix encode_impl(const Matrix& w, const Matrix& u,
                          const Vector& lambda_row, const Vector* col_scale,
                          int max_iters, double rel_tol, Matrix h) {
  if (u.cols() == 0 || max_iters == 0) return h;
  const Matrix wtw = w.transpose() * w;
  const Matrix wtu = w.transpose() * u;
  double prev = objective_impl(w, u, h, lambda_row, col_scale);
  for (int it = 0; it < max_iters; ++it) {
    h_step(h, wtw, wtu, lambda_row, col_scale);
    const double cur = objective_impl(w, u, h, lambda_row, col_scale);
    if (std::abs(prev - cur) <=
        rel_tol * std::max(std::abs(prev), std::numeric_limits<double>::min())) {
      break;
    }
    prev = cur;
  }
  return h;
}

// Default latent start: w^T u with every entry clamped below at 1e-3.
inline Matrix initial_latent(const Matrix& w, const Matrix& u) {
  return (w.transpose() * u).cwiseMax(1e-3);
}

}  // namespace detail

/// One multiplicative update of every latent column:
///   h <- h .* (w^T u) ./ (w^T w h + lambda).
/// With per-column sparsity enabled, column j uses
/// lambda * per_column_sparsity(j).
inline Latent h_update_step(const Latent& h, const Basis& w, const Matrix& u,
                            const EncodeConfig& cfg) {
  check_dims(w.features() == u.rows(), "h_update_step: basis/data row mismatch");
  check_dims(h.atoms() == w.atoms(), "h_update_step: latent/basis atom mismatch");
  check_dims(h.cols() == u.cols(), "h_update_step: latent/data column mismatch");
  check_data(w.mat, "h_update_step: basis");
  check_data(u, "h_update_step: data");
  check_data(h.mat, "h_update_step: latent");
  check_encode_config(cfg, u.cols());

  Latent out{h.mat};
  const Matrix wtw = w.mat.transpose() * w.mat;
  const Matrix wtu = w.mat.transpose() * u;
  const Vector lambda_row = Vector::Constant(w.atoms(), cfg.sparsity);
  const Vector* cs =
      cfg.per_column_sparsity ? &*cfg.per_column_sparsity : nullptr;
  detail::h_step(out.mat, wtw, wtu, lambda_row, cs);
  return out;
}

/// Encoding objective 0.5 * ||u - w h||_F^2 + sum_j lambda_j * |h_j|_1.
inline double encode_objective(const Basis& w, const Matrix& u, const Latent& h,
                               const EncodeConfig& cfg) {
  check_dims(w.features() == u.rows() && h.atoms() == w.atoms() &&
                 h.cols() == u.cols(),
             "encode_objective: operand shape mismatch");
  check_encode_config(cfg, u.cols());
  const Vector lambda_row = Vector::Constant(w.atoms(), cfg.sparsity);
  const Vector* cs =
      cfg.per_column_sparsity ? &*cfg.per_column_sparsity : nullptr;
  return detail::objective_impl(w.mat, u, h.mat, lambda_row, cs);
}

/// Encodes `u` against `w` by iterating h_update_step from `init`
/// (default: w^T u clamped below at 1e-3) until the relative objective
/// change falls under cfg.rel_tol or cfg.max_iters steps have run.
inline Latent encode(const Basis& w, const Matrix& u, const EncodeConfig& cfg,
                     const std::optional<Latent>& init = std::nullopt) {
  check_dims(w.features() == u.rows(), "encode: basis/data row mismatch");
  check_data(w.mat, "encode: basis");
  check_data(u, "encode: data");
  check_encode_config(cfg, u.cols());

  Matrix h0;
  if (init) {
    check_dims(init->atoms() == w.atoms() && init->cols() == u.cols(),
               "encode: init latent shape mismatch");
    check_data(init->mat, "encode: init latent");
    h0 = init->mat;
  } else {
    h0 = detail::initial_latent(w.mat, u);
  }
  const Vector lambda_row = Vector::Constant(w.atoms(), cfg.sparsity);
  const Vector* cs =
      cfg.per_column_sparsity ? &*cfg.per_column_sparsity : nullptr;
  return Latent{detail::encode_impl(w.mat, u, lambda_row, cs, cfg.max_iters,
                                    cfg.rel_tol, std::move(h0))};
}

/// Reconstruction w * encode(w, u).
inline Matrix project(const Basis& w, const Matrix& u, const EncodeConfig& cfg) {
  return w.mat * encode(w, u, cfg).mat;
}

/// Mean squared reconstruction error ||u - w h||_F^2 / n over n samples.
inline double weak_loss(const Matrix& u, const Basis& w, const Latent& h) {
  check_dims(u.cols() >= 1, "weak_loss: need at least one sample");
  check_dims(w.features() == u.rows() && h.atoms() == w.atoms() &&
                 h.cols() == u.cols(),
             "weak_loss: operand shape mismatch");
  return (u - w.mat * h.mat).squaredNorm() / static_cast<double>(u.cols());
}

/// Training loss tau_w * weak - tau_a * adversarial + tau_s * strong, each
/// term the sample-averaged squared reconstruction error of its dataset.
/// Terms with zero weight may pass nullptr data.
inline double full_loss(const Basis& w, const Matrix& weak_u,
                        const Latent& weak_h, const Matrix* adv_u,
                        const Latent* adv_h, const Matrix* strong_u,
                        const Latent* strong_h, double tau_w, double tau_a,
                        double tau_s) {
  check_config(tau_w >= 0 && tau_a >= 0 && tau_s >= 0,
               "full_loss: term weights must be >= 0");
  double total = 0.0;
  if (tau_w != 0.0) total += tau_w * weak_loss(weak_u, w, weak_h);
  if (tau_a != 0.0) {
    check_config(adv_u != nullptr && adv_h != nullptr,
                 "full_loss: tau_a > 0 requires adversarial data");
    total -= tau_a * weak_loss(*adv_u, w, *adv_h);
  }
  if (tau_s != 0.0) {
    check_config(strong_u != nullptr && strong_h != nullptr,
                 "full_loss: tau_s > 0 requires strong data");
    total += tau_s * weak_loss(*strong_u, w, *strong_h);
  }
  return total;
}

/// Scales every non-zero column of `w` to unit Euclidean norm and rescales
/// the matching rows of each attached latent so all products w * h are
/// preserved. Zero columns are left untouched. Returns the former norms.
inline Vector normalize_columns(Basis& w, std::vector<Latent*> latents = {}) {
  for (Latent* h : latents) {
    check_dims(h != nullptr && h->atoms() == w.atoms(),
               "normalize_columns: latent/basis atom mismatch");
  }
  Vector norms(w.atoms());
  for (Index k = 0; k < w.atoms(); ++k) {
    const double n = w.mat.col(k).norm();
    norms[k] = n;
    if (n == 0.0) continue;
    w.mat.col(k) /= n;
    for (Latent* h : latents) h->mat.row(k) *= n;
  }
  return norms;
}

}  // namespace mdnmf
