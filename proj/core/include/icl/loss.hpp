#pragma once

#include <cstdint>
#include <vector>

#include "icl/model.hpp"

namespace icl {

// Everything the closed-form loss and its gradients need, precomputed once
// per (dictionary, tau). Immutable after build; loss and gradient evaluation
// only read it.
struct LossContext {
  int m = 0, N = 0, K = 0;
  double tau = 0.0;

  Matrix tokens;  // d x K (prompt block = leftCols(N))
  Matrix z;       // m x N
  Matrix zhat;    // m x K
  Matrix zq;      // m x (K-N)
  Matrix gram;    // N x N, Z^T Z + m tau I
  Matrix zbar;    // N x N, symmetric PSD square root of gram
  Matrix a;       // N x K

  double lstar = 0.0;
  double fbar_max = 0.0;      // max column norm of zbar
  double zbar_norm = 0.0;     // ||zbar||_2
  double ztz_hat_norm = 0.0;  // ||Z^T Zhat||_2
  double a_norm = 0.0;        // ||A||_2
  double z_norm = 0.0;        // ||Z||_2

  auto prompt_tokens() const { return tokens.leftCols(N); }
};

// Per-token residuals: column k is ahat_k - a_k.
struct Delta {
  Matrix d;  // N x K
};

// Builds zbar by symmetric eigendecomposition with eigenvalue clamping at 0,
// solves the SPD system for the target matrix, and evaluates the loss floor
// from its literal two-branch constants. tau = 0 is accepted only when
// Z^T Z has full rank N.
LossContext build_context(const Dictionary& dict, int m, double tau);

Delta delta(const LossContext& ctx, const Matrix& ahat);

// L(theta) - L*, evaluated as the PSD quadratic form (no cancellation).
double loss_gap(const LossContext& ctx, const Delta& dlt);

// (1/2K) sum_k ||zbar delta_k||^2 + L*; never below L*.
double population_loss(const LossContext& ctx, const Delta& dlt);

struct McLoss {
  double estimate = 0.0;
  double std_error = 0.0;
  long n = 0;
};

// Unbiased sample average of (1/2K) sum_k (yhat_k - y_k)^2 over i.i.d.
// (lambda, noise) draws. The lambda distribution must be zero-mean with unit
// second moment per entry. Deterministic given seed.
McLoss mc_loss(const Params& p, const Dictionary& dict, const LambdaDist& dist,
               double tau, long n_samples, std::uint64_t seed);

// Entry (h, k) = (1/K) (zbar s_k^h)^T (zbar delta_k).
Matrix grad_w(const LossContext& ctx, const AttentionState& st, const Delta& dlt);

// Head h: (1/K) sum_k w_{h,k} [V (r_k . s_k^h) - (r_k . s_k^h summed) V s_k^h] v_k^T
// with r_k = gram * delta_k; equals the tokenwise softmax-jacobian chain.
std::vector<Matrix> grad_q(const LossContext& ctx, const AttentionState& st,
                           const Delta& dlt, const Params& p);

}  // namespace icl
