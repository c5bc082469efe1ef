#pragma once

// Anchored OOD regression mixup penalty and the benchmarked baselines.
//
// The anchored penalty treats the second sample of each pair as a reference
// point: a contrast-sensitive kernel w = exp(-|y_i - y_j| / beta^2) gates a
// proportional hidden-state distance
//     d_i = (lambda / n) * sum_m (y_i z_jm - y_j z_im) / (y_j z_jm),
// and the scalar w_i * |d_i| is added to the empirical risk of batch i.
// The kernel weight depends only on targets and is treated as a constant;
// gradients flow through d_i alone.

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "amx/error.hpp"
#include "amx/random.hpp"
#include "amx/tensor.hpp"

namespace amx {

enum class MixupMethod { none, input_mixup, manifold_mixup, anchored };

enum class GuardMode {
  per_pair,  // skip only pairs whose denominator row contains a zero
  batch      // strict-listing compatibility: one bad pair skips the whole batch
};

enum class PenaltyReduction {
  per_pair,  // d_i per pair (mean over features), then mean of w_i * |d_i|
  listing    // global mean over pairs x features, then mean(w) * |d|
};

struct MixupConfig {
  MixupMethod method = MixupMethod::none;
  double beta = 1.1;     // kernel width limit; > 0
  double lambda = 1e-4;  // fixed regularization rate; >= 0, never sampled
  double alpha = 1.0;    // Beta(alpha, alpha) parameter for the baselines; > 0
  GuardMode guard = GuardMode::per_pair;
  PenaltyReduction reduction = PenaltyReduction::per_pair;

  void validate() const {
    if (!(beta > 0.0)) throw ValueError("beta must be > 0, got " + std::to_string(beta));
    if (!(lambda >= 0.0))
      throw ValueError("lambda must be >= 0, got " + std::to_string(lambda));
    if (!(alpha > 0.0)) throw ValueError("alpha must be > 0, got " + std::to_string(alpha));
  }
};

MixupMethod parse_mixup_method(const std::string& s);
std::string to_string(MixupMethod m);

template <typename T>
struct PenaltyResultT {
  TensorT<T> penalty;  // scalar, differentiable through the hidden states
  int64_t applied = 0;
  int64_t skipped = 0;
};

using PenaltyResult = PenaltyResultT<float>;

/// Contrast-sensitive kernel w = exp(-|y_i - y_j| / beta^2), elementwise.
/// Weights lie in (0, 1], hitting 1 exactly where y_i == y_j.
template <typename T>
std::vector<T> kernel_weight(std::span<const T> y_i, std::span<const T> y_j, T beta) {
  if (!(beta > T(0)))
    throw ValueError("kernel beta must be > 0, got " + std::to_string(beta));
  if (y_i.size() != y_j.size())
    throw ShapeError("kernel_weight length mismatch: " + std::to_string(y_i.size()) +
                     " vs " + std::to_string(y_j.size()));
  const T inv_b2 = T(1) / (beta * beta);
  std::vector<T> w(y_i.size());
  for (size_t k = 0; k < w.size(); ++k)
    w[k] = std::exp(-std::abs(y_i[k] - y_j[k]) * inv_b2);
  return w;
}

/// Proportional distance between hidden vectors z_i and z_j relative to the
/// target ratio y_i / y_j, for one pair. Differentiable w.r.t. z_i and z_j.
/// The caller must have filtered zero denominators; hitting one here throws.
template <typename T>
TensorT<T> proportional_distance(T y_i, T y_j, const TensorT<T>& z_i,
                                 const TensorT<T>& z_j, T lambda) {
  if (z_i.shape() != z_j.shape())
    throw ShapeError("proportional_distance shape mismatch: " + shape_str(z_i.shape()) +
                     " vs " + shape_str(z_j.shape()));
  for (T v : z_j.values())
    if (y_j * v == T(0))
      throw GuardError("proportional_distance denominator y_j*z_jm is exactly zero");
  auto yi = TensorT<T>::scalar(y_i);
  auto yj = TensorT<T>::scalar(y_j);
  auto num = sub(mul(yi, z_j), mul(yj, z_i));
  auto den = mul(yj, z_j);
  return mul(mean(div(num, den)), lambda);
}

/// Batched anchored mixup penalty over a pair of batches.
///
/// y vectors are plain values (targets carry no gradient); z_i and z_j are
/// [batch, n] graph tensors. Pairs whose denominator row y_j * z_j contains
/// an exact zero (including y_j == 0) are skipped and counted; the remaining
/// pairs contribute kernel_weight * |d_i| averaged over the applied count.
/// Skipped rows are masked out of the graph before the division, so the
/// penalty and its gradients stay finite whenever the guard passed.
template <typename T>
PenaltyResultT<T> anchored_mixup_penalty(std::span<const T> y_i, std::span<const T> y_j,
                                         const TensorT<T>& z_i, const TensorT<T>& z_j,
                                         const MixupConfig& cfg) {
  cfg.validate();
  if (cfg.method != MixupMethod::anchored)
    throw ValueError("anchored_mixup_penalty called with method " + to_string(cfg.method));
  if (z_i.rank() != 2 || z_i.shape() != z_j.shape())
    throw ShapeError("anchored penalty expects matching [batch, n] hidden states, got " +
                     shape_str(z_i.shape()) + " and " + shape_str(z_j.shape()));
  const int64_t batch = z_i.shape()[0];
  const int64_t n = z_i.shape()[1];
  if (static_cast<int64_t>(y_i.size()) != batch ||
      static_cast<int64_t>(y_j.size()) != batch)
    throw ShapeError("anchored penalty target length mismatch: batch " +
                     std::to_string(batch) + ", y_i " + std::to_string(y_i.size()) +
                     ", y_j " + std::to_string(y_j.size()));

  PenaltyResultT<T> res;
  std::vector<T> mask(static_cast<size_t>(batch), T(1));
  const auto& zjv = z_j.values();
  for (int64_t p = 0; p < batch; ++p) {
    bool ok = true;
    for (int64_t m = 0; m < n && ok; ++m)
      ok = y_j[static_cast<size_t>(p)] * zjv[static_cast<size_t>(p * n + m)] != T(0);
    if (!ok) mask[static_cast<size_t>(p)] = T(0);
  }
  int64_t applied = 0;
  for (T v : mask) applied += v != T(0);

  if (cfg.guard == GuardMode::batch && applied != batch) {
    res.penalty = TensorT<T>::scalar(T(0));
    res.applied = 0;
    res.skipped = batch;
    return res;
  }
  res.applied = applied;
  res.skipped = batch - applied;
  if (applied == 0) {
    res.penalty = TensorT<T>::scalar(T(0));
    return res;
  }

  auto mask_col = TensorT<T>::from({batch, 1}, mask);
  auto inv_mask_col = TensorT<T>::from({batch, 1}, [&] {
    std::vector<T> inv(mask.size());
    for (size_t k = 0; k < mask.size(); ++k) inv[k] = T(1) - mask[k];
    return inv;
  }());
  auto yi_col = TensorT<T>::from({batch, 1}, std::vector<T>(y_i.begin(), y_i.end()));
  auto yj_col = TensorT<T>::from({batch, 1}, std::vector<T>(y_j.begin(), y_j.end()));

  // masked rows get numerator 0 and denominator 1, cutting both the value
  // and the gradient path while keeping the division finite
  auto num = mul(mask_col, sub(mul(yi_col, z_j), mul(yj_col, z_i)));
  auto den = add(mul(mask_col, mul(yj_col, z_j)), inv_mask_col);
  auto ratio = div(num, den);

  // kernel weights are constants over targets; skipped rows contribute zero
  std::vector<T> w = kernel_weight(y_i, y_j, static_cast<T>(cfg.beta));
  const T lam = static_cast<T>(cfg.lambda);

  if (cfg.reduction == PenaltyReduction::per_pair) {
    auto d = mul(mean(ratio, 1), lam);  // [batch]
    auto w_row = TensorT<T>::from({batch}, w);
    auto weighted = mul(w_row, abs(d));
    res.penalty = mul(sum(weighted), T(1) / static_cast<T>(applied));
  } else {
    // listing-style global mean over pairs x features, then abs
    auto d = mul(sum(ratio), lam / static_cast<T>(applied * n));
    T w_mean = 0;
    for (int64_t p = 0; p < batch; ++p)
      if (mask[static_cast<size_t>(p)] != T(0)) w_mean += w[static_cast<size_t>(p)];
    w_mean /= static_cast<T>(applied);
    res.penalty = mul(abs(d), w_mean);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Mixup baselines
// ---------------------------------------------------------------------------

template <typename T>
struct MixedBatchT {
  TensorT<T> x;  // leaf: convex combination of the two inputs
  TensorT<T> y;  // leaf: matching target combination
  std::vector<T> lambdas;
};

/// Deterministic mixing core: one lambda per pair, broadcast over the
/// per-sample dims of x. Produces fresh leaves (inputs carry no gradient).
template <typename T>
MixedBatchT<T> mix_batches(const TensorT<T>& x_i, const TensorT<T>& y_i,
                           const TensorT<T>& x_j, const TensorT<T>& y_j,
                           std::span<const T> lambdas) {
  if (x_i.shape() != x_j.shape() || y_i.shape() != y_j.shape())
    throw ShapeError("mixup batch shape mismatch: " + shape_str(x_i.shape()) + " vs " +
                     shape_str(x_j.shape()));
  const int64_t batch = x_i.shape().empty() ? 1 : x_i.shape()[0];
  if (static_cast<int64_t>(lambdas.size()) != batch)
    throw ShapeError("mixup needs one lambda per pair, got " +
                     std::to_string(lambdas.size()) + " for batch " +
                     std::to_string(batch));
  const int64_t per = x_i.size() / batch;
  const int64_t yper = y_i.size() / batch;
  std::vector<T> xv(x_i.values().size()), yv(y_i.values().size());
  for (int64_t p = 0; p < batch; ++p) {
    const T lam = lambdas[static_cast<size_t>(p)];
    for (int64_t k = 0; k < per; ++k) {
      const size_t idx = static_cast<size_t>(p * per + k);
      xv[idx] = lam * x_i.values()[idx] + (T(1) - lam) * x_j.values()[idx];
    }
    for (int64_t k = 0; k < yper; ++k) {
      const size_t idx = static_cast<size_t>(p * yper + k);
      yv[idx] = lam * y_i.values()[idx] + (T(1) - lam) * y_j.values()[idx];
    }
  }
  MixedBatchT<T> out;
  out.x = TensorT<T>::from(x_i.shape(), std::move(xv));
  out.y = TensorT<T>::from(y_i.shape(), std::move(yv));
  out.lambdas.assign(lambdas.begin(), lambdas.end());
  return out;
}

/// Input mixup: x~ = lambda x_i + (1 - lambda) x_j with lambda ~ Beta(a, a),
/// drawn once per pair.
template <typename T>
MixedBatchT<T> input_mixup(const TensorT<T>& x_i, const TensorT<T>& y_i,
                           const TensorT<T>& x_j, const TensorT<T>& y_j, T alpha,
                           std::mt19937_64& rng) {
  const int64_t batch = x_i.shape().empty() ? 1 : x_i.shape()[0];
  auto lambdas = beta_samples(alpha, static_cast<size_t>(batch), rng);
  return mix_batches(x_i, y_i, x_j, y_j, std::span<const T>(lambdas));
}

template <typename T>
struct MixedHiddenT {
  TensorT<T> z;  // differentiable combination of the two hidden states
  TensorT<T> y;  // leaf target combination
  std::vector<T> lambdas;
};

/// Mixing core for hidden states: z~ = lambda z_i + (1 - lambda) z_j built
/// from graph ops so gradients reach both extractor paths.
template <typename T>
MixedHiddenT<T> mix_hidden(const TensorT<T>& z_i, const TensorT<T>& y_i,
                           const TensorT<T>& z_j, const TensorT<T>& y_j,
                           std::span<const T> lambdas) {
  if (z_i.rank() != 2 || z_i.shape() != z_j.shape())
    throw ShapeError("manifold mixup expects matching [batch, n] hidden states, got " +
                     shape_str(z_i.shape()) + " and " + shape_str(z_j.shape()));
  const int64_t batch = z_i.shape()[0];
  if (static_cast<int64_t>(lambdas.size()) != batch)
    throw ShapeError("manifold mixup needs one lambda per pair, got " +
                     std::to_string(lambdas.size()) + " for batch " +
                     std::to_string(batch));
  std::vector<T> lam(lambdas.begin(), lambdas.end());
  std::vector<T> one_minus(lam.size());
  for (size_t k = 0; k < lam.size(); ++k) one_minus[k] = T(1) - lam[k];
  auto lam_col = TensorT<T>::from({batch, 1}, lam);
  auto oml_col = TensorT<T>::from({batch, 1}, one_minus);

  MixedHiddenT<T> out;
  out.z = add(mul(lam_col, z_i), mul(oml_col, z_j));
  const int64_t yper = y_i.size() / batch;
  std::vector<T> yv(y_i.values().size());
  for (int64_t p = 0; p < batch; ++p)
    for (int64_t k = 0; k < yper; ++k) {
      const size_t idx = static_cast<size_t>(p * yper + k);
      yv[idx] = lam[static_cast<size_t>(p)] * y_i.values()[idx] +
                one_minus[static_cast<size_t>(p)] * y_j.values()[idx];
    }
  out.y = TensorT<T>::from(y_i.shape(), std::move(yv));
  out.lambdas = std::move(lam);
  return out;
}

/// Manifold mixup at the extractor output (the single canonical z layer).
template <typename T>
MixedHiddenT<T> manifold_mixup(const TensorT<T>& z_i, const TensorT<T>& y_i,
                               const TensorT<T>& z_j, const TensorT<T>& y_j, T alpha,
                               std::mt19937_64& rng) {
  const int64_t batch = z_i.rank() >= 1 ? z_i.shape()[0] : 1;
  auto lambdas = beta_samples(alpha, static_cast<size_t>(batch), rng);
  return mix_hidden(z_i, y_i, z_j, y_j, std::span<const T>(lambdas));
}

// ---------------------------------------------------------------------------
// Norm penalties
// ---------------------------------------------------------------------------

enum class NormKind { ridge, lasso };

/// lambda * sum ||p||_2^2 (ridge) or lambda * sum ||p||_1 (lasso), built from
/// graph ops so it is differentiable w.r.t. the parameters.
template <typename T>
TensorT<T> norm_penalty(std::span<const TensorT<T>> params, NormKind kind, T lambda) {
  if (!(lambda >= T(0)))
    throw ValueError("norm penalty lambda must be >= 0, got " + std::to_string(lambda));
  TensorT<T> total = TensorT<T>::scalar(T(0));
  for (const auto& p : params) {
    auto term = kind == NormKind::ridge ? sum(mul(p, p)) : sum(abs(p));
    total = add(total, term);
  }
  return mul(total, lambda);
}

}  // namespace amx
