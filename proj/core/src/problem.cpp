#include "icl/problem.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "icl/errors.hpp"

namespace icl {

void ProblemConfig::validate() const {
  if (K < 1 || d < 1 || m < 1)
    throw ConfigError("dimensions must satisfy K >= 1, d >= 1, m >= 1");
  if (N < 1 || N >= K) throw ConfigError("N must satisfy 1 <= N < K");
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
}

namespace {

bool columns_distinct(const Matrix& M, double tol) {
  for (int i = 0; i < M.cols(); ++i)
    for (int j = i + 1; j < M.cols(); ++j)
      if ((M.col(i) - M.col(j)).lpNorm<Eigen::Infinity>() <= tol) return false;
  return true;
}

}  // namespace

Dictionary gen_dictionary(const ProblemConfig& cfg) {
  cfg.validate();
  constexpr int kMaxAttempts = 64;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng tok_rng = derive_rng(cfg.seed, "dictionary.tokens", attempt);
    Matrix tokens(cfg.d, cfg.K);
    bool degenerate = false;
    for (int k = 0; k < cfg.K && !degenerate; ++k) {
      for (int r = 0; r < cfg.d; ++r) tokens(r, k) = tok_rng.normal();
      const double nrm = tokens.col(k).norm();
      if (nrm < 1e-300) {
        degenerate = true;
        break;
      }
      tokens.col(k) /= nrm;
    }
    if (degenerate || !columns_distinct(tokens, 1e-12)) continue;

    Rng rep_rng = derive_rng(cfg.seed, "dictionary.zhat", attempt);
    Matrix zhat(cfg.m, cfg.K);
    for (int k = 0; k < cfg.K; ++k)
      for (int r = 0; r < cfg.m; ++r) zhat(r, k) = rep_rng.normal();

    return Dictionary{cfg, std::move(tokens), std::move(zhat), attempt};
  }
  throw ConfigError("could not draw " + std::to_string(cfg.K) +
                    " distinct unit-norm tokens in R^" + std::to_string(cfg.d));
}

bool check_row_distinct(const Dictionary& dict, double tol) {
  const auto V = dict.prompt_tokens();
  std::vector<double> row(static_cast<size_t>(V.cols()));
  for (int r = 0; r < V.rows(); ++r) {
    for (int j = 0; j < V.cols(); ++j) row[static_cast<size_t>(j)] = V(r, j);
    std::sort(row.begin(), row.end());
    bool distinct = true;
    for (size_t j = 1; j < row.size(); ++j) {
      if (row[j] - row[j - 1] <= tol) {
        distinct = false;
        break;
      }
    }
    if (distinct) return true;
  }
  return false;
}

PromptInstance make_prompt(const Dictionary& dict, const Vector& lambda,
                           const Matrix& noise) {
  const auto& cfg = dict.cfg;
  if (lambda.size() != cfg.m || noise.rows() != cfg.m || noise.cols() != cfg.K)
    throw ConfigError("prompt dimensions do not match the dictionary");
  PromptInstance p;
  p.lambda = lambda;
  p.noise = noise;
  p.N = cfg.N;
  p.labels_all.resize(cfg.K);
  for (int k = 0; k < cfg.K; ++k)
    p.labels_all[k] = lambda.dot(dict.zhat.col(k) + noise.col(k));
  return p;
}

Vector sample_lambda(const LambdaDist& dist, int m, Rng& rng) {
  Vector lam(m);
  switch (dist.kind) {
    case LambdaDist::Kind::StandardGaussian:
      for (int i = 0; i < m; ++i) lam[i] = rng.normal();
      break;
    case LambdaDist::Kind::Rademacher:
      for (int i = 0; i < m; ++i) lam[i] = rng.rademacher();
      break;
    case LambdaDist::Kind::ShiftedGaussian:
      if (dist.mean.size() != m)
        throw ConfigError("shifted-gaussian mean length does not match m");
      if (!(dist.stdev >= 0)) throw ConfigError("shifted-gaussian stdev must be >= 0");
      for (int i = 0; i < m; ++i) lam[i] = dist.mean[i] + dist.stdev * rng.normal();
      break;
  }
  return lam;
}

PromptInstance sample_prompt(const Dictionary& dict, const LambdaDist& dist,
                             double tau, std::uint64_t seed) {
  if (tau < 0) throw ConfigError("tau must be >= 0");
  Rng rng = derive_rng(seed, "prompt");
  Vector lam = sample_lambda(dist, dict.cfg.m, rng);
  Matrix noise(dict.cfg.m, dict.cfg.K);
  const double sd = std::sqrt(tau);
  for (int k = 0; k < dict.cfg.K; ++k)
    for (int r = 0; r < dict.cfg.m; ++r) noise(r, k) = sd * rng.normal();
  return make_prompt(dict, lam, noise);
}

}  // namespace icl
