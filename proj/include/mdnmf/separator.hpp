#pragma once

// Joint sparse separation: encode a mixture against the concatenated
// dictionaries of all sources, split the joint latent into per-source
// blocks, and distribute the mixture over the per-source reconstructions
// with an entrywise Wiener mask.

#include <mdnmf/core.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mdnmf {

/// Controls separation-time encoding and masking. `sparsity` applies to
/// every atom unless `per_source_sparsity` overrides it with one weight per
/// basis. `epsilon` keeps the Wiener division safe where the reconstruction
/// vanishes. Mixing weights are not estimated here; the encoding cone is
/// scale invariant, so any source scaling is absorbed by the latents.
struct SeparationConfig {
  double sparsity = 0.0;
  std::optional<std::vector<double>> per_source_sparsity;
  double epsilon = 1e-12;
  int max_iters = 200;
  double rel_tol = 1e-6;
};

struct SeparationResult {
  std::vector<Matrix> components;    // per-source Wiener outputs u_i
  std::vector<Latent> latents;       // per-source blocks of the joint latent
  double residual_norm = 0.0;        // ||v - sum_i w_i h_i||_F
  bool zero_reconstruction = false;  // every reconstruction entry was zero
};

inline void check_separation_config(const SeparationConfig& cfg,
                                    size_t n_sources) {
  check_config(std::isfinite(cfg.sparsity) && cfg.sparsity >= 0.0,
               "separate: sparsity must be finite and >= 0");
  check_config(std::isfinite(cfg.epsilon) && cfg.epsilon > 0.0,
               "separate: epsilon must be finite and > 0");
  check_config(cfg.max_iters >= 0, "separate: max_iters must be >= 0");
  check_config(std::isfinite(cfg.rel_tol) && cfg.rel_tol >= 0.0,
               "separate: rel_tol must be finite and >= 0");
  if (cfg.per_source_sparsity) {
    check_dims(cfg.per_source_sparsity->size() == n_sources,
               "separate: per_source_sparsity needs one weight per basis");
    for (double s : *cfg.per_source_sparsity)
      check_config(std::isfinite(s) && s >= 0.0,
                   "separate: per-source sparsity must be finite and >= 0");
  }
}

/// Entrywise v .* part_i ./ (sum_j part_j + eps) for each part. An exact
/// zero denominator (possible only at eps = 0, where every part is zero
/// too) yields zero. The outputs sum to v .* R ./ (R + eps), so they never
/// overshoot the mixture.
inline std::vector<Matrix> wiener_filter(const Matrix& v,
                                         const std::vector<Matrix>& parts,
                                         double eps) {
  check_value(std::isfinite(eps) && eps >= 0.0,
              "wiener_filter: eps must be finite and >= 0");
  Matrix denom = Matrix::Constant(v.rows(), v.cols(), eps);
  for (const Matrix& p : parts) {
    check_dims(p.rows() == v.rows() && p.cols() == v.cols(),
               "wiener_filter: part shape must match the mixture");
    check_data(p, "wiener_filter: part");
    denom += p;
  }
  std::vector<Matrix> out;
  out.reserve(parts.size());
  for (const Matrix& p : parts) {
    Matrix u = (denom.array() > 0.0)
                   .select(v.array() * p.array() / denom.array(), 0.0);
    out.push_back(std::move(u));
  }
  return out;
}

/// Separates the mixture `v` into one component per basis: concatenates the
/// bases, encodes v to convergence under the configured sparsity, splits
/// the latent, and Wiener-masks v with the per-source reconstructions. If
/// the total reconstruction is identically zero the components are zero and
/// `zero_reconstruction` is set.
inline SeparationResult separate(const std::vector<Basis>& bases,
                                 const Matrix& v,
                                 const SeparationConfig& cfg) {
  check_config(!bases.empty(), "separate: need at least one basis");
  check_separation_config(cfg, bases.size());
  check_data(v, "separate: mixture");

  Index total_atoms = 0;
  for (const Basis& w : bases) {
    check_dims(w.features() == v.rows(),
               "separate: basis/mixture feature mismatch");
    check_data(w.mat, "separate: basis");
    total_atoms += w.atoms();
  }

  Matrix wcat(v.rows(), total_atoms);
  Vector lambda_row(total_atoms);
  Index off = 0;
  for (size_t i = 0; i < bases.size(); ++i) {
    const Index d = bases[i].atoms();
    wcat.middleCols(off, d) = bases[i].mat;
    const double lam =
        cfg.per_source_sparsity ? (*cfg.per_source_sparsity)[i] : cfg.sparsity;
    lambda_row.segment(off, d).setConstant(lam);
    off += d;
  }

  const Matrix h = detail::encode_impl(wcat, v, lambda_row, nullptr,
                                       cfg.max_iters, cfg.rel_tol,
                                       detail::initial_latent(wcat, v));
  const Matrix recon = wcat * h;

  SeparationResult result;
  result.residual_norm = (v - recon).norm();
  result.zero_reconstruction = recon.size() != 0 && recon.maxCoeff() <= 0.0;

  std::vector<Matrix> parts;
  parts.reserve(bases.size());
  off = 0;
  for (const Basis& w : bases) {
    const Index d = w.atoms();
    result.latents.push_back(Latent{h.middleRows(off, d)});
    parts.push_back(w.mat * result.latents.back().mat);
    off += d;
  }
  result.components = wiener_filter(v, parts, cfg.epsilon);
  return result;
}

}  // namespace mdnmf
