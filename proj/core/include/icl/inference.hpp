#pragma once

#include "icl/loss.hpp"

namespace icl {

struct InferenceConfig {
  double B = 3.0;           // bound on ||lambda||_2 at inference
  double eps = 1e-4;        // target accuracy
  double delta_prob = 0.05; // failure probability over the prompt noise

  void validate() const;
};

struct InferenceResult {
  Vector y_hat;      // model output, length K
  Vector y_star;     // limit prediction (prompt labels + ridge, reg = m tau)
  Vector y_best;     // oracle prediction (reg = N tau)
  Vector lambda_hat; // reg = m tau ridge solution
  Vector lambda_tau; // reg = N tau ridge solution
  double gap_star = 0.0;  // (1/2K) ||y_hat - y_star||^2
  double gap_best = 0.0;  // (1/K)  ||y_star - y_best||^2
};

// (reg I_m + Z Z^T)^{-1} Z y, the minimizer of
// (1/2N) sum_i (y_i - lambda . z_i)^2 + (reg/2N) ||lambda||^2.
// Solves whichever of the m x m / N x N Gram systems is smaller.
Vector ridge(const Matrix& z, const Vector& y, double reg);

// A^T y: the prompt labels followed by the ridge extrapolation with reg = m tau.
Vector y_star(const LossContext& ctx, const Vector& y_prompt);

// Prompt labels followed by the noise-matched ridge extrapolation, reg = N tau.
Vector y_best(const LossContext& ctx, const Vector& y_prompt, double tau);

// Assembles the model output and both reference predictions for one prompt.
InferenceResult evaluate(const Params& p, const Dictionary& dict,
                         const LossContext& ctx, const PromptInstance& prompt);

// Frobenius distance between the solved target matrix and its block form
// (I_N, Z^T (m tau I + Z Z^T)^{-1} Z^Q), computed through the m x m system.
double verify_smw(const LossContext& ctx);

// High-probability bound on the prompt label norm given ||lambda|| <= B.
double label_norm_bound(const PromptInstance& prompt, double B, double tau,
                        int N, double delta_prob, double z_norm);

// Rescales lambda onto the radius-B ball when it lands outside.
Vector clip_to_ball(const Vector& lambda, double B);

}  // namespace icl
