#include "icl/model.hpp"

#include <cmath>

#include "icl/errors.hpp"

namespace icl {

Vector softmax(const Vector& x) {
  if (x.size() == 0) throw ConfigError("softmax of an empty vector");
  if (!x.allFinite()) throw NumericError("softmax input is not finite");
  const double mx = x.maxCoeff();
  Vector e = (x.array() - mx).exp();
  return e / e.sum();
}

namespace {

// Softmax of one logits column written into column h of out.
inline void softmax_column_into(const Eigen::Ref<const Vector>& logits,
                                Matrix& out, int h) {
  const int n = static_cast<int>(logits.size());
  const double mx = logits.maxCoeff();
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    const double e = std::exp(logits[j] - mx);
    out(j, h) = e;
    sum += e;
  }
  out.col(h) /= sum;
}

}  // namespace

void attention_state_into(const Params& p, const Dictionary& dict,
                          const Matrix& zbar, AttentionState& st) {
  const int H = p.H();
  const int K = dict.cfg.K;
  const int N = dict.cfg.N;
  const int d = dict.cfg.d;
  if (H < 1) throw ConfigError("params must have at least one head");
  if (p.d() != d || p.K() != K)
    throw ConfigError("params and dictionary shapes disagree");
  if (zbar.rows() != N || zbar.cols() != N)
    throw ConfigError("zbar must be N x N");

  st.c.resize(static_cast<size_t>(K));
  st.b.resize(static_cast<size_t>(K));
  for (int k = 0; k < K; ++k) {
    st.c[static_cast<size_t>(k)].resize(N, H);
    st.b[static_cast<size_t>(k)].resize(N, H);
  }

  Matrix vq(N, d), logits(N, K);
  for (int h = 0; h < H; ++h) {
    vq.noalias() = dict.prompt_tokens().transpose() * p.q[static_cast<size_t>(h)];
    logits.noalias() = vq * dict.tokens;
    for (int k = 0; k < K; ++k)
      softmax_column_into(logits.col(k), st.c[static_cast<size_t>(k)], h);
  }
  for (int k = 0; k < K; ++k)
    st.b[static_cast<size_t>(k)].noalias() = zbar * st.c[static_cast<size_t>(k)];
}

AttentionState attention_state(const Params& p, const Dictionary& dict,
                               const Matrix& zbar) {
  AttentionState st;
  attention_state_into(p, dict, zbar, st);
  return st;
}

Vector predict(const Params& p, const AttentionState& st, const Vector& y_prompt) {
  const int K = st.K();
  const int H = st.H();
  if (p.H() != H || p.K() != K) throw ConfigError("params and state disagree");
  if (y_prompt.size() != st.N())
    throw ConfigError("prompt label length does not match the state");
  Vector out(K);
  for (int k = 0; k < K; ++k) {
    double acc = 0.0;
    for (int h = 0; h < H; ++h)
      acc += p.w(h, k) * y_prompt.dot(st.c[static_cast<size_t>(k)].col(h));
    out[k] = acc;
  }
  return out;
}

Matrix a_hat(const Params& p, const AttentionState& st) {
  const int K = st.K();
  if (p.H() != st.H() || p.K() != K) throw ConfigError("params and state disagree");
  Matrix out(st.N(), K);
  for (int k = 0; k < K; ++k)
    out.col(k).noalias() = st.c[static_cast<size_t>(k)] * p.w.col(k);
  return out;
}

Matrix a_hat(const Params& p, const Dictionary& dict) {
  AttentionState st;
  attention_state_into(p, dict, Matrix::Identity(dict.cfg.N, dict.cfg.N), st);
  return a_hat(p, st);
}

Params init_params(int H, int d, int K, double beta, std::uint64_t seed) {
  if (H < 1 || d < 1 || K < 1)
    throw ConfigError("init_params requires H, d, K >= 1");
  if (!(beta > 0)) throw ConfigError("beta must be > 0");
  Params p;
  p.q.resize(static_cast<size_t>(H));
  p.w = Matrix::Zero(H, K);
  Rng rng = derive_rng(seed, "params.q");
  // Row-major fill per head, so the layout is part of the fixture contract.
  for (int h = 0; h < H; ++h) {
    Matrix& q = p.q[static_cast<size_t>(h)];
    q.resize(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) q(i, j) = beta * rng.normal();
  }
  return p;
}

std::vector<Matrix> softmax_jacobian_action(const Vector& s, const Matrix& V,
                                            const Vector& v_k) {
  const int N = static_cast<int>(s.size());
  if (V.cols() != N) throw ConfigError("V must have one column per softmax entry");
  if (V.rows() != v_k.size()) throw ConfigError("v_k dimension mismatch");
  if (s.minCoeff() < 0 || std::abs(s.sum() - 1.0) > 1e-9)
    throw ConfigError("s is not a probability vector");
  const Vector vbar = V * s;
  std::vector<Matrix> out(static_cast<size_t>(N));
  for (int j = 0; j < N; ++j)
    out[static_cast<size_t>(j)] = s[j] * (V.col(j) - vbar) * v_k.transpose();
  return out;
}

}  // namespace icl
