#include "icl/inference.hpp"

#include <cmath>
#include <string>

#include "icl/errors.hpp"

namespace icl {

void InferenceConfig::validate() const {
  if (!(B > 0)) throw ConfigError("B must be > 0");
  if (!(eps > 0)) throw ConfigError("eps must be > 0");
  if (!(delta_prob > 0 && delta_prob < 1))
    throw ConfigError("delta_prob must lie in (0, 1)");
}

namespace {

int numeric_rank(const Matrix& M) {
  Eigen::JacobiSVD<Matrix> svd(M);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return 0;
  const double tol = sv(0) * std::max(M.rows(), M.cols()) *
                     std::numeric_limits<double>::epsilon();
  return static_cast<int>((sv.array() > tol).count());
}

Vector refined_solve(const Eigen::LDLT<Matrix>& f, const Matrix& G,
                     const Vector& b) {
  Vector x = f.solve(b);
  x += f.solve(b - G * x);
  return x;
}

}  // namespace

Vector ridge(const Matrix& z, const Vector& y, double reg) {
  const int m = static_cast<int>(z.rows());
  const int N = static_cast<int>(z.cols());
  if (m < 1 || N < 1) throw ConfigError("ridge needs a nonempty design");
  if (y.size() != N) throw ConfigError("label length must equal prompt length");
  if (reg < 0) throw ConfigError("reg must be >= 0");

  if (m <= N) {
    if (reg == 0.0) {
      const int r = numeric_rank(z);
      if (r < m)
        throw NumericError("ridge with reg = 0 needs rank-" + std::to_string(m) +
                           " representations, got rank " + std::to_string(r));
    }
    const Matrix G = z * z.transpose() + reg * Matrix::Identity(m, m);
    Eigen::LDLT<Matrix> f(G);
    if (f.info() != Eigen::Success)
      throw NumericError("ridge normal equations could not be factorized");
    return refined_solve(f, G, z * y);
  }

  // N < m: (reg I_m + Z Z^T)^{-1} Z = Z (Z^T Z + reg I_N)^{-1}, so the small
  // N x N system suffices. reg = 0 is always singular here (rank <= N < m).
  if (reg == 0.0)
    throw NumericError("ridge with reg = 0 is singular when m > N");
  const Matrix G = z.transpose() * z + reg * Matrix::Identity(N, N);
  Eigen::LDLT<Matrix> f(G);
  if (f.info() != Eigen::Success)
    throw NumericError("ridge normal equations could not be factorized");
  return z * refined_solve(f, G, y);
}

Vector y_star(const LossContext& ctx, const Vector& y_prompt) {
  if (y_prompt.size() != ctx.N)
    throw ConfigError("prompt label length does not match the context");
  return ctx.a.transpose() * y_prompt;
}

Vector y_best(const LossContext& ctx, const Vector& y_prompt, double tau) {
  if (y_prompt.size() != ctx.N)
    throw ConfigError("prompt label length does not match the context");
  const Vector lam_tau = ridge(ctx.z, y_prompt, ctx.N * tau);
  Vector out(ctx.K);
  out.head(ctx.N) = y_prompt;
  out.tail(ctx.K - ctx.N).noalias() = ctx.zq.transpose() * lam_tau;
  return out;
}

InferenceResult evaluate(const Params& p, const Dictionary& dict,
                         const LossContext& ctx, const PromptInstance& prompt) {
  if (prompt.N != ctx.N) throw ConfigError("prompt and context disagree on N");
  const AttentionState st = attention_state(p, dict, ctx.zbar);
  const Vector yp = prompt.labels_prompt();

  InferenceResult r;
  r.y_hat = predict(p, st, yp);
  r.y_star = y_star(ctx, yp);
  r.y_best = y_best(ctx, yp, ctx.tau);
  r.lambda_hat = ridge(ctx.z, yp, double(ctx.m) * ctx.tau);
  r.lambda_tau = ridge(ctx.z, yp, double(ctx.N) * ctx.tau);
  r.gap_star = (r.y_hat - r.y_star).squaredNorm() / (2.0 * ctx.K);
  r.gap_best = (r.y_star - r.y_best).squaredNorm() / double(ctx.K);
  return r;
}

double verify_smw(const LossContext& ctx) {
  const int m = ctx.m;
  const int N = ctx.N;
  const int K = ctx.K;
  const Matrix G = ctx.z * ctx.z.transpose() +
                   (double(m) * ctx.tau) * Matrix::Identity(m, m);
  Eigen::LDLT<Matrix> f(G);
  if (f.info() != Eigen::Success)
    throw NumericError("m x m gram factorization failed");
  Matrix X = f.solve(ctx.zq);
  X += f.solve(ctx.zq - G * X);
  Matrix block(N, K);
  block.leftCols(N) = Matrix::Identity(N, N);
  block.rightCols(K - N).noalias() = ctx.z.transpose() * X;
  return (ctx.a - block).norm();
}

double label_norm_bound(const PromptInstance& prompt, double B, double tau,
                        int N, double delta_prob, double z_norm) {
  if (!(B > 0)) throw ConfigError("B must be > 0");
  if (tau < 0) throw ConfigError("tau must be >= 0");
  if (N < 1) throw ConfigError("N must be >= 1");
  if (!(delta_prob > 0 && delta_prob < 1))
    throw ConfigError("delta_prob must lie in (0, 1)");
  if (prompt.lambda.norm() > B * (1.0 + 1e-12))
    throw ConfigError("prompt violates the inference-time bound ||lambda|| <= B");
  const double logd = std::log(1.0 / delta_prob);
  return B * (z_norm + std::sqrt(tau) * std::sqrt(double(N) +
                                                  2.0 * std::sqrt(N * logd) +
                                                  2.0 * logd));
}

Vector clip_to_ball(const Vector& lambda, double B) {
  if (!(B > 0)) throw ConfigError("B must be > 0");
  const double n = lambda.norm();
  if (n <= B) return lambda;
  return lambda * (B / n);
}

}  // namespace icl
