#include "icl/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "icl/errors.hpp"

namespace icl {

namespace {

double spectral_norm(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(M);
  return svd.singularValues()(0);
}

}  // namespace

LossContext build_context(const Dictionary& dict, int m, double tau) {
  if (m != dict.cfg.m)
    throw ConfigError("m does not match the dictionary representation dimension");
  if (tau < 0) throw ConfigError("tau must be >= 0");

  LossContext ctx;
  ctx.m = m;
  ctx.N = dict.cfg.N;
  ctx.K = dict.cfg.K;
  ctx.tau = tau;
  ctx.tokens = dict.tokens;
  ctx.z = dict.z();
  ctx.zhat = dict.zhat;
  ctx.zq = dict.zq();

  const int N = ctx.N;
  const int K = ctx.K;
  const double mtau = m * tau;

  ctx.gram = ctx.z.transpose() * ctx.z + mtau * Matrix::Identity(N, N);

  Eigen::SelfAdjointEigenSolver<Matrix> es(ctx.gram);
  if (es.info() != Eigen::Success)
    throw NumericError("eigendecomposition of the prompt gram matrix failed");
  const Vector ev = es.eigenvalues();
  if (tau == 0.0) {
    const double lmax = std::max(ev.maxCoeff(), 0.0);
    const double tol = lmax * N * std::numeric_limits<double>::epsilon();
    const int rank = static_cast<int>((ev.array() > tol).count());
    if (rank < N)
      throw NumericError("tau = 0 requires rank-" + std::to_string(N) +
                         " prompt representations, got rank " + std::to_string(rank));
  }
  const Vector ev_clamped = ev.cwiseMax(0.0);
  ctx.zbar = es.eigenvectors() * ev_clamped.cwiseSqrt().asDiagonal() *
             es.eigenvectors().transpose();
  ctx.zbar = ((ctx.zbar + ctx.zbar.transpose()) / 2.0).eval();
  ctx.zbar_norm = std::sqrt(ev_clamped.maxCoeff());
  ctx.fbar_max = ctx.zbar.colwise().norm().maxCoeff();

  // Target matrix: solve gram * A = Z^T Zhat + (m tau I, 0) with one step of
  // iterative refinement; keeps the tau -> 0 extremes near working precision.
  Matrix rhs = ctx.z.transpose() * ctx.zhat;
  rhs.leftCols(N) += mtau * Matrix::Identity(N, N);
  Eigen::LDLT<Matrix> ldlt(ctx.gram);
  if (ldlt.info() != Eigen::Success)
    throw NumericError("factorization of the prompt gram matrix failed");
  Matrix A = ldlt.solve(rhs);
  A += ldlt.solve(rhs - ctx.gram * A);
  ctx.a = A;

  // Loss floor. Both branches carry the label's own noise energy m tau; only
  // prompt tokens add the m tau e_k cross term (already folded into rhs).
  double acc = 0.0;
  for (int k = 0; k < K; ++k)
    acc += ctx.zhat.col(k).squaredNorm() + mtau - rhs.col(k).dot(A.col(k));
  ctx.lstar = acc / (2.0 * K);

  ctx.ztz_hat_norm = spectral_norm(ctx.z.transpose() * ctx.zhat);
  ctx.a_norm = spectral_norm(ctx.a);
  ctx.z_norm = spectral_norm(ctx.z);
  return ctx;
}

Delta delta(const LossContext& ctx, const Matrix& ahat) {
  if (ahat.rows() != ctx.N || ahat.cols() != ctx.K)
    throw ConfigError("ahat must be N x K");
  return Delta{ahat - ctx.a};
}

double loss_gap(const LossContext& ctx, const Delta& dlt) {
  if (dlt.d.rows() != ctx.N || dlt.d.cols() != ctx.K)
    throw ConfigError("delta must be N x K");
  const Matrix r = ctx.gram * dlt.d;
  double acc = 0.0;
  for (int k = 0; k < ctx.K; ++k) acc += dlt.d.col(k).dot(r.col(k));
  return std::max(0.0, acc / (2.0 * ctx.K));
}

double population_loss(const LossContext& ctx, const Delta& dlt) {
  return loss_gap(ctx, dlt) + ctx.lstar;
}

McLoss mc_loss(const Params& p, const Dictionary& dict, const LambdaDist& dist,
               double tau, long n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw ConfigError("mc_loss requires n_samples >= 1");
  if (tau < 0) throw ConfigError("tau must be >= 0");
  if (!dist.in_distribution())
    throw ConfigError("mc_loss requires a zero-mean unit-variance lambda distribution");

  const int K = dict.cfg.K;
  const int N = dict.cfg.N;
  const int m = dict.cfg.m;
  const Matrix ahat = a_hat(p, dict);

  Rng rng = derive_rng(seed, "mc_loss");
  const double sqrt_tau = std::sqrt(tau);
  Vector lam(m), y_all(K), y_hat(K);
  double mean = 0.0, m2 = 0.0;
  for (long i = 0; i < n_samples; ++i) {
    lam = sample_lambda(dist, m, rng);
    // Conditional on lambda, each lambda . eps_k is N(0, tau ||lambda||^2),
    // independent across tokens; sampling that marginal directly is exact.
    const double noise_sd = sqrt_tau * lam.norm();
    y_all.noalias() = dict.zhat.transpose() * lam;
    for (int k = 0; k < K; ++k) y_all[k] += noise_sd * rng.normal();
    y_hat.noalias() = ahat.transpose() * y_all.head(N);
    const double v = (y_hat - y_all).squaredNorm() / (2.0 * K);
    const double d1 = v - mean;
    mean += d1 / static_cast<double>(i + 1);
    m2 += d1 * (v - mean);
  }
  McLoss out;
  out.estimate = mean;
  out.n = n_samples;
  out.std_error =
      n_samples > 1
          ? std::sqrt(m2 / (static_cast<double>(n_samples - 1) * n_samples))
          : 0.0;
  return out;
}

Matrix grad_w(const LossContext& ctx, const AttentionState& st, const Delta& dlt) {
  if (st.K() != ctx.K || st.N() != ctx.N)
    throw ConfigError("state and context disagree");
  const int H = st.H();
  const Matrix r = ctx.gram * dlt.d;
  Matrix g(H, ctx.K);
  for (int k = 0; k < ctx.K; ++k)
    g.col(k).noalias() = st.c[static_cast<size_t>(k)].transpose() * r.col(k) / ctx.K;
  return g;
}

std::vector<Matrix> grad_q(const LossContext& ctx, const AttentionState& st,
                           const Delta& dlt, const Params& p) {
  if (st.K() != ctx.K || st.N() != ctx.N)
    throw ConfigError("state and context disagree");
  if (p.H() != st.H() || p.K() != ctx.K)
    throw ConfigError("params and state disagree");
  const int H = st.H();
  const int N = ctx.N;
  const int d = p.d();
  const auto V = ctx.prompt_tokens();

  const Matrix r = ctx.gram * dlt.d;
  std::vector<Matrix> g(static_cast<size_t>(H), Matrix::Zero(d, d));
  Vector u(N), img(d);
  for (int k = 0; k < ctx.K; ++k) {
    const Matrix& c_k = st.c[static_cast<size_t>(k)];
    for (int h = 0; h < H; ++h) {
      const double w_hk = p.w(h, k);
      if (w_hk == 0.0) continue;
      const auto s = c_k.col(h);
      u = r.col(k).cwiseProduct(s);
      img.noalias() = V * u;
      img.noalias() -= u.sum() * (V * s);
      g[static_cast<size_t>(h)].noalias() +=
          (w_hk / ctx.K) * img * ctx.tokens.col(k).transpose();
    }
  }
  return g;
}

}  // namespace icl
