#pragma once

#include <vector>

#include "icl/problem.hpp"

namespace icl {

// Trainable state: H query-key matrices Q_h and H value vectors w_h.
struct Params {
  std::vector<Matrix> q;  // H matrices, each d x d
  Matrix w;               // H x K, row h holds w_h

  int H() const { return static_cast<int>(q.size()); }
  int d() const { return q.empty() ? 0 : static_cast<int>(q[0].rows()); }
  int K() const { return static_cast<int>(w.cols()); }
};

// Attention probabilities and their weighted images, cached per evaluation
// because the loss and both gradients reuse them. The cache is tied to one
// Params value; rebuild it whenever the parameters change.
struct AttentionState {
  std::vector<Matrix> c;  // K entries, N x H; column h of c[k] is s_k^h
  std::vector<Matrix> b;  // K entries, N x H; b[k] = zbar * c[k]

  int K() const { return static_cast<int>(c.size()); }
  int N() const { return c.empty() ? 0 : static_cast<int>(c[0].rows()); }
  int H() const { return c.empty() ? 0 : static_cast<int>(c[0].cols()); }
  auto s(int h, int k) const { return c[static_cast<size_t>(k)].col(h); }
};

// Max-subtracted softmax; positive entries summing to 1, shift-invariant.
Vector softmax(const Vector& x);

// Builds s_k^h = softmax(V^T Q_h v_k) for all heads and tokens, plus the
// weighted images b[k] = zbar * c[k].
AttentionState attention_state(const Params& p, const Dictionary& dict,
                               const Matrix& zbar);
// Same, reusing the buffers of an existing state.
void attention_state_into(const Params& p, const Dictionary& dict,
                          const Matrix& zbar, AttentionState& st);

// yhat_k = sum_h w_{h,k} <y_prompt, s_k^h> for every token k.
Vector predict(const Params& p, const AttentionState& st, const Vector& y_prompt);

// N x K matrix whose column k is sum_h w_{h,k} s_k^h; predict == a_hat^T y.
Matrix a_hat(const Params& p, const AttentionState& st);
// Convenience overload computing the attention probabilities on the fly.
Matrix a_hat(const Params& p, const Dictionary& dict);

// Q_h entries i.i.d. N(0, beta^2); w_h = 0. Deterministic given seed.
Params init_params(int H, int d, int K, double beta, std::uint64_t seed);

// Per-entry gradient of s = softmax(V^T Q v_k) with respect to Q: element j
// of the result is s_j (v_j - V s) v_k^T.
std::vector<Matrix> softmax_jacobian_action(const Vector& s, const Matrix& V,
                                            const Vector& v_k);

}  // namespace icl
