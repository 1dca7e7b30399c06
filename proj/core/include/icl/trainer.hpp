#pragma once

#include <functional>
#include <vector>

#include "icl/loss.hpp"

namespace icl {

enum class LrMode { Manual, AutoTheory };
enum class SmoothnessVariant { Simplified, Tight };

struct TrainerConfig {
  double eta_q = 0.0;  // manual mode only
  double eta_w = 0.0;  // manual mode only
  double gamma = 0.0;  // optional consistency check: gamma^2 == eta_w/eta_q
  long T = 1000;
  LrMode lr_mode = LrMode::AutoTheory;
  SmoothnessVariant variant = SmoothnessVariant::Tight;
  long log_every = 0;  // 0 -> max(1, T / 500)

  void validate() const;
};

// Loss trajectory, certified rate bound and the diagnostics the convergence
// certificate rests on, all sampled at the logging cadence.
struct TrainReport {
  std::vector<long> steps;
  std::vector<double> losses;        // L(theta_t)
  std::vector<double> deltas;        // L(theta_t) - L*
  std::vector<double> rate_bound;    // (1 - eta_w zeta0 / 2K)^t * delta0
  std::vector<double> zeta_trace;    // min_k lambda_min(B_k B_k^T) at t
  std::vector<double> grad_q_norm;   // sqrt(sum_h ||dL/dQ_h||_F^2)
  std::vector<double> grad_w_norm;   // ||dL/dw||_F
  std::vector<double> grad_q_head_max;  // max_h ||dL/dQ_h||_F
  std::vector<double> grad_w_head_max;  // max_h ||dL/dw_h||_2
  std::vector<double> pl_lhs;        // sum_{h,k} (dl/dalpha_{h,k})^2
  std::vector<double> pl_rhs;        // (gamma^2/K^2) zeta_t sum_k ||zbar delta_k||^2
  std::vector<double> alpha_norm;    // max_h ||w_h||_2 / gamma
  std::vector<double> w_inf;         // max_{h,k} |w_{h,k}|
  std::vector<double> q_drift;       // max_h ||Q_h - Q_h^0||_F

  double zeta0 = 0.0;
  double gamma = 0.0;
  double eta_q = 0.0;
  double eta_w = 0.0;
  double smoothness = 0.0;
  double lstar = 0.0;
  double delta0 = 0.0;
  double alpha_bound = 0.0;    // valid along certified runs
  double q_drift_bound = 0.0;  // valid along certified runs
  bool certified = false;
  LrMode lr_mode = LrMode::AutoTheory;
  SmoothnessVariant variant = SmoothnessVariant::Tight;
  Params final_params;
};

using CheckpointFn = std::function<void(long t, const Params& p, double delta)>;

// min_k lambda_min(B_k B_k^T) with B_k = zbar C_k; > 0 certifies the
// full-row-rank initialization condition. Returned as-is when <= 0.
double zeta0(const AttentionState& st, const LossContext& ctx);

// Smallest admissible reparameterization scale for the certified rate.
double gamma_lower_bound(const LossContext& ctx, double zeta0, int H, int K,
                         double delta0);

// Smoothness constant of the reparameterized loss; the tight variant is the
// default, the simplified one is kept for comparison.
double smoothness_L(const LossContext& ctx, double zeta0, double gamma, int H,
                    int K, int N, double delta0, SmoothnessVariant variant);

// Full-batch GD on the closed-form population loss with split learning rates
// (eta_q for every Q_h, eta_w for every w_h). In auto-theory mode the rates
// are derived from (zeta0, gamma, L); certification compares every logged
// gap against the linear-rate bound.
TrainReport train(const Params& params0, const LossContext& ctx,
                  const Dictionary& dict, const TrainerConfig& cfg,
                  const CheckpointFn& on_checkpoint = {});

// Maps to (Q, alpha = w / gamma) and back; identity up to roundoff.
Params reparam_roundtrip(const Params& p, double gamma);

// Number of GD steps sufficient for the inference gap to reach eps with
// probability 1 - delta_prob over the prompt noise; 0 when already there.
long iteration_complexity(double B, double delta0, const LossContext& ctx,
                          double eps, double delta_prob, double eta_w,
                          double zeta0, int K, int N, double tau);

}  // namespace icl
