#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "icl/rng.hpp"

namespace icl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ProblemConfig {
  int K = 0;          // token count
  int d = 0;          // token dimension
  int N = 0;          // prompt length, 1 <= N < K
  int m = 0;          // representation dimension
  double tau = 0.0;   // per-entry label noise variance, > 0
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

// The fixed token dictionary and its random representation table. All K
// token columns are unit-norm and pairwise distinct; the first N columns
// form the prompt block.
struct Dictionary {
  ProblemConfig cfg;
  Matrix tokens;        // d x K
  Matrix zhat;          // m x K, column k is the representation of token k
  int regen_count = 0;  // distinctness retries consumed during generation

  auto prompt_tokens() const { return tokens.leftCols(cfg.N); }  // d x N
  auto z() const { return zhat.leftCols(cfg.N); }                // m x N
  auto zq() const { return zhat.rightCols(cfg.K - cfg.N); }      // m x (K-N)
};

// One sampled task: coefficients, per-token noise and the labels they induce.
struct PromptInstance {
  Vector lambda;      // m
  Matrix noise;       // m x K
  Vector labels_all;  // K
  int N = 0;

  auto labels_prompt() const { return labels_all.head(N); }
};

struct LambdaDist {
  enum class Kind { StandardGaussian, Rademacher, ShiftedGaussian };

  Kind kind = Kind::StandardGaussian;
  Vector mean;         // shifted-gaussian only
  double stdev = 1.0;  // shifted-gaussian only

  // Zero mean, unit second moment per entry. Shifted-gaussian breaks this and
  // is admitted only as an out-of-distribution inference workload.
  bool in_distribution() const { return kind != Kind::ShiftedGaussian; }

  static LambdaDist standard_gaussian() { return {}; }
  static LambdaDist rademacher() { return {Kind::Rademacher, {}, 1.0}; }
  static LambdaDist shifted_gaussian(Vector mean, double stdev) {
    return {Kind::ShiftedGaussian, std::move(mean), stdev};
  }
};

// Draws K unit-norm distinct tokens and a Gaussian representation table.
// Deterministic given cfg.seed; duplicate columns (probability zero, but
// forced in tiny dimensions) trigger regeneration from a perturbed stream,
// reported in regen_count.
Dictionary gen_dictionary(const ProblemConfig& cfg);

// True iff some row of the prompt block has N pairwise-distinct entries.
bool check_row_distinct(const Dictionary& dict, double tol = 1e-12);

// Assembles labels y_k = lambda . (zhat_k + noise_k) for a given draw.
PromptInstance make_prompt(const Dictionary& dict, const Vector& lambda,
                           const Matrix& noise);

Vector sample_lambda(const LambdaDist& dist, int m, Rng& rng);

// Samples lambda per dist and i.i.d. Gaussian noise with per-entry variance
// tau, then assembles the labels. Deterministic given seed.
PromptInstance sample_prompt(const Dictionary& dict, const LambdaDist& dist,
                             double tau, std::uint64_t seed);

}  // namespace icl
