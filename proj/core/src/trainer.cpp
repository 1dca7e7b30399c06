#include "icl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "icl/errors.hpp"

namespace icl {

void TrainerConfig::validate() const {
  if (T < 0) throw ConfigError("iteration budget T must be >= 0");
  if (log_every < 0) throw ConfigError("log_every must be >= 0");
  if (lr_mode == LrMode::Manual) {
    if (!(eta_q > 0) || !(eta_w > 0))
      throw ConfigError("manual lr_mode requires eta_q > 0 and eta_w > 0");
    if (gamma > 0) {
      const double implied = std::sqrt(eta_w / eta_q);
      if (std::abs(gamma - implied) > 1e-12 * std::max(1.0, implied))
        throw ConfigError("gamma^2 must equal eta_w / eta_q");
    }
  }
}

double zeta0(const AttentionState& st, const LossContext& ctx) {
  if (st.K() != ctx.K || st.N() != ctx.N)
    throw ConfigError("state and context disagree");
  double zmin = std::numeric_limits<double>::infinity();
  Matrix B(ctx.N, st.H());
  for (int k = 0; k < ctx.K; ++k) {
    B.noalias() = ctx.zbar * st.c[static_cast<size_t>(k)];
    Eigen::SelfAdjointEigenSolver<Matrix> es(B * B.transpose(),
                                             Eigen::EigenvaluesOnly);
    zmin = std::min(zmin, es.eigenvalues().minCoeff());
  }
  return zmin;
}

double gamma_lower_bound(const LossContext& ctx, double zeta0, int H, int K,
                         double delta0) {
  if (!(zeta0 > 0))
    throw InvariantError(
        "gamma bound needs zeta0 > 0; initialization violates the "
        "full-row-rank condition");
  if (delta0 < 0) throw ConfigError("delta0 must be >= 0");
  if (H < 1 || K < 1) throw ConfigError("H and K must be >= 1");
  const double c = 128.0 * std::sqrt(2.0) / (std::sqrt(2.0) - 1.0);
  const double inner = c * ctx.zbar_norm * ctx.zbar_norm * std::sqrt(double(H)) *
                       ctx.fbar_max * std::pow(double(K), 1.5) * delta0;
  return std::pow(zeta0, -1.25) * std::sqrt(inner);
}

double smoothness_L(const LossContext& ctx, double zeta0, double gamma, int H,
                    int K, int N, double delta0, SmoothnessVariant variant) {
  if (!(zeta0 > 0) || !(gamma > 0))
    throw ConfigError("smoothness constant requires zeta0 > 0 and gamma > 0");
  if (H < 1 || K < 1 || N < 1 || delta0 < 0)
    throw ConfigError("smoothness constant requires positive dimensions");
  const double zb = ctx.zbar_norm;
  const double zb2 = zb * zb;
  double L2 = 0.0;
  if (variant == SmoothnessVariant::Simplified) {
    const double mtau = ctx.m * ctx.tau;
    if (!(mtau > 0))
      throw ConfigError("the simplified smoothness constant requires tau > 0");
    const double head = 8.0 * std::sqrt(2.0) * H * std::sqrt(double(K)) * zb2 /
                            zeta0 * std::sqrt(delta0) +
                        1.0 + ctx.ztz_hat_norm / mtau;
    L2 = head * head * zb2 * zb2 *
             (8.0 * gamma * gamma / K +
              4096.0 / (gamma * zeta0 * zeta0) * double(K) * K * N * delta0) +
         2.0 * double(H) * H * zb2 * zb2 *
             (std::pow(gamma, 4) / (double(K) * K) +
              16384.0 / (gamma * std::pow(zeta0, 4)) * std::pow(double(K), 3) *
                  zb2 * delta0 * delta0);
  } else {
    const double alpha =
        4.0 * std::sqrt(2.0 * K) * zb * std::sqrt(delta0) / (gamma * zeta0);
    const double agh = alpha * gamma * H;
    const double term_alpha =
        (1.0 / K) * std::pow(2.0 * gamma * zb2 * (2.0 * agh + ctx.a_norm), 2) +
        std::pow(gamma, 4) / (double(K) * K) * double(H) * H * zb2 * zb2;
    const double term_q =
        8.0 * gamma * ctx.fbar_max * zb *
        std::max(1.0, std::pow(2.0 * std::sqrt(double(K)) * alpha, 2)) *
        (agh * agh + 4.0 * N * std::pow(agh + ctx.a_norm, 2));
    L2 = 2.0 * term_alpha + term_q;
  }
  return std::sqrt(L2);
}

Params reparam_roundtrip(const Params& p, double gamma) {
  if (!(gamma > 0)) throw ConfigError("gamma must be > 0");
  Params out = p;
  const Matrix alpha = p.w / gamma;
  out.w = gamma * alpha;
  return out;
}

long iteration_complexity(double B, double delta0, const LossContext& ctx,
                          double eps, double delta_prob, double eta_w,
                          double zeta0, int K, int N, double tau) {
  if (!(B > 0) || !(eps > 0) || !(eta_w > 0) || !(zeta0 > 0) || !(tau > 0) ||
      delta0 < 0 || K < 1 || N < 1)
    throw ConfigError("iteration_complexity requires positive inputs");
  if (!(delta_prob > 0 && delta_prob < 1))
    throw ConfigError("delta_prob must lie in (0, 1)");
  const double rate = 1.0 - eta_w * zeta0 / (2.0 * K);
  if (!(rate > 0 && rate < 1))
    throw ConfigError("decay factor 1 - eta_w zeta0 / 2K must lie in (0, 1)");
  const double logd = std::log(1.0 / delta_prob);
  const double tail =
      std::sqrt(tau) * std::sqrt(2.0 * std::sqrt(N * logd) + 2.0 * logd + N);
  const double arg =
      B * B * delta0 * std::pow(ctx.z_norm + tail, 2) / (ctx.m * tau * eps);
  if (arg <= 1.0) return 0;
  return static_cast<long>(std::ceil(std::log(arg) / std::log(1.0 / rate)));
}

namespace {

// Gradient workspace; all buffers sized once so the GD loop never allocates.
struct GradWork {
  Matrix r;                 // N x K, gram * delta
  Matrix gw;                // H x K
  std::vector<Matrix> gq;   // H of d x d
  Matrix vq;                // N x d
  Matrix logits;            // N x K
  Vector u, img, img2;      // N, d, d
  Matrix bk;                // N x H, zbar * C_k at checkpoints
};

double min_eig_b(const LossContext& ctx, const AttentionState& st, Matrix& bk) {
  double zmin = std::numeric_limits<double>::infinity();
  for (int k = 0; k < ctx.K; ++k) {
    bk.noalias() = ctx.zbar * st.c[static_cast<size_t>(k)];
    Eigen::SelfAdjointEigenSolver<Matrix> es(bk * bk.transpose(),
                                             Eigen::EigenvaluesOnly);
    zmin = std::min(zmin, es.eigenvalues().minCoeff());
  }
  return zmin;
}

}  // namespace

TrainReport train(const Params& params0, const LossContext& ctx,
                  const Dictionary& dict, const TrainerConfig& cfg,
                  const CheckpointFn& on_checkpoint) {
  cfg.validate();
  const int H = params0.H();
  const int K = ctx.K;
  const int N = ctx.N;
  const int d = params0.d();
  if (dict.cfg.K != K || dict.cfg.N != N || dict.cfg.d != d || params0.K() != K)
    throw ConfigError("params, context and dictionary shapes disagree");

  Params p = params0;
  AttentionState st;
  attention_state_into(p, dict, ctx.zbar, st);
  Matrix ahat = a_hat(p, st);
  Delta dl = delta(ctx, ahat);
  const double delta0 = loss_gap(ctx, dl);

  TrainReport rep;
  rep.lstar = ctx.lstar;
  rep.delta0 = delta0;
  rep.lr_mode = cfg.lr_mode;
  rep.variant = cfg.variant;
  rep.zeta0 = zeta0(st, ctx);

  if (cfg.lr_mode == LrMode::AutoTheory) {
    if (!(rep.zeta0 > 0))
      throw InvariantError(
          "auto-theory rates need zeta0 > 0; initialization violates the "
          "full-row-rank condition");
    rep.gamma = gamma_lower_bound(ctx, rep.zeta0, H, K, delta0);
    if (!(rep.gamma > 0)) rep.gamma = 1.0;  // delta0 == 0, any gamma > 0 works
    rep.smoothness =
        smoothness_L(ctx, rep.zeta0, rep.gamma, H, K, N, delta0, cfg.variant);
    rep.eta_q = 1.0 / rep.smoothness;
    rep.eta_w = rep.gamma * rep.gamma * rep.eta_q;
  } else {
    rep.eta_q = cfg.eta_q;
    rep.eta_w = cfg.eta_w;
    rep.gamma = std::sqrt(cfg.eta_w / cfg.eta_q);
    rep.smoothness = 0.0;
  }

  const double rate_term = rep.eta_w * rep.zeta0 / (2.0 * K);
  if (rate_term >= 2.0)
    throw ConfigError("invalid rate: eta_w zeta0 / 2K = " +
                      std::to_string(rate_term) + " >= 2");
  const double decay = 1.0 - rate_term;

  if (rep.zeta0 > 0) {
    const double sigma = rep.zeta0 * rep.gamma * rep.gamma / K;
    rep.alpha_bound = 4.0 * std::sqrt(2.0 * K) * ctx.zbar_norm *
                      std::sqrt(delta0) / (rep.gamma * rep.zeta0);
    rep.q_drift_bound = 8.0 * std::sqrt(2.0) * rep.gamma * rep.alpha_bound *
                        ctx.fbar_max / sigma * std::sqrt(delta0);
  } else {
    rep.alpha_bound = std::numeric_limits<double>::infinity();
    rep.q_drift_bound = std::numeric_limits<double>::infinity();
  }

  const long log_every =
      cfg.log_every > 0 ? cfg.log_every : std::max<long>(1, cfg.T / 500);

  GradWork wk;
  wk.r.resize(N, K);
  wk.gw.resize(H, K);
  wk.gq.assign(static_cast<size_t>(H), Matrix::Zero(d, d));
  wk.vq.resize(N, d);
  wk.logits.resize(N, K);
  wk.u.resize(N);
  wk.img.resize(d);
  wk.img2.resize(d);
  wk.bk.resize(N, H);

  const Matrix vt = dict.prompt_tokens().transpose();  // N x d
  const auto V = ctx.prompt_tokens();

  double delta_t = delta0;

  auto compute_gradients = [&]() {
    for (Matrix& g : wk.gq) g.setZero();
    wk.r.noalias() = ctx.gram * dl.d;
    for (int k = 0; k < K; ++k) {
      const Matrix& c_k = st.c[static_cast<size_t>(k)];
      wk.gw.col(k).noalias() = c_k.transpose() * wk.r.col(k) / K;
      for (int h = 0; h < H; ++h) {
        const double w_hk = p.w(h, k);
        if (w_hk == 0.0) continue;
        const auto s = c_k.col(h);
        wk.u = wk.r.col(k).cwiseProduct(s);
        wk.img.noalias() = V * wk.u;
        wk.img2.noalias() = V * s;
        wk.gq[static_cast<size_t>(h)].noalias() +=
            (w_hk / K) * (wk.img - wk.u.sum() * wk.img2) *
            ctx.tokens.col(k).transpose();
      }
    }
  };

  auto refresh_state = [&]() {
    for (int h = 0; h < H; ++h) {
      wk.vq.noalias() = vt * p.q[static_cast<size_t>(h)];
      wk.logits.noalias() = wk.vq * ctx.tokens;
      for (int k = 0; k < K; ++k) {
        Matrix& c_k = st.c[static_cast<size_t>(k)];
        const auto col = wk.logits.col(k);
        const double mx = col.maxCoeff();
        double sum = 0.0;
        for (int j = 0; j < N; ++j) {
          const double e = std::exp(col[j] - mx);
          c_k(j, h) = e;
          sum += e;
        }
        c_k.col(h) /= sum;
      }
    }
    for (int k = 0; k < K; ++k) {
      ahat.col(k).noalias() = st.c[static_cast<size_t>(k)] * p.w.col(k);
      dl.d.col(k) = ahat.col(k) - ctx.a.col(k);
    }
    double acc = 0.0;
    wk.r.noalias() = ctx.gram * dl.d;
    for (int k = 0; k < K; ++k) acc += dl.d.col(k).dot(wk.r.col(k));
    delta_t = std::max(0.0, acc / (2.0 * K));
  };

  auto log_step = [&](long t) {
    rep.steps.push_back(t);
    rep.deltas.push_back(delta_t);
    rep.losses.push_back(delta_t + ctx.lstar);
    rep.rate_bound.push_back(std::pow(decay, double(t)) * delta0);
    const double zt = min_eig_b(ctx, st, wk.bk);
    rep.zeta_trace.push_back(zt);
    double gq2 = 0.0, gq_head = 0.0;
    for (const Matrix& g : wk.gq) {
      const double n2 = g.squaredNorm();
      gq2 += n2;
      gq_head = std::max(gq_head, n2);
    }
    rep.grad_q_norm.push_back(std::sqrt(gq2));
    rep.grad_q_head_max.push_back(std::sqrt(gq_head));
    const double gw2 = wk.gw.squaredNorm();
    rep.grad_w_norm.push_back(std::sqrt(gw2));
    double gw_head = 0.0;
    for (int h = 0; h < H; ++h)
      gw_head = std::max(gw_head, wk.gw.row(h).squaredNorm());
    rep.grad_w_head_max.push_back(std::sqrt(gw_head));
    const double g2 = rep.gamma * rep.gamma;
    rep.pl_lhs.push_back(g2 * gw2);
    rep.pl_rhs.push_back(g2 / (double(K) * K) * zt * 2.0 * K * delta_t);
    double amax = 0.0, drift = 0.0;
    for (int h = 0; h < H; ++h) {
      amax = std::max(amax, p.w.row(h).norm() / rep.gamma);
      drift = std::max(
          drift, (p.q[static_cast<size_t>(h)] - params0.q[static_cast<size_t>(h)])
                     .norm());
    }
    rep.alpha_norm.push_back(amax);
    rep.w_inf.push_back(p.w.size() ? p.w.cwiseAbs().maxCoeff() : 0.0);
    rep.q_drift.push_back(drift);
    if (on_checkpoint) on_checkpoint(t, p, delta_t);
  };

  compute_gradients();
  log_step(0);

  for (long t = 1; t <= cfg.T; ++t) {
    for (int h = 0; h < H; ++h)
      p.q[static_cast<size_t>(h)].noalias() -= rep.eta_q * wk.gq[static_cast<size_t>(h)];
    p.w.noalias() -= rep.eta_w * wk.gw;

    refresh_state();

    if (!std::isfinite(delta_t))
      throw NumericError("loss diverged (non-finite) at step " + std::to_string(t));
    if (delta0 > 0 && delta_t > 10.0 * delta0)
      throw NumericError("loss diverged past 10x the initial gap at step " +
                         std::to_string(t));

    compute_gradients();

    if (t % log_every == 0 || t == cfg.T) log_step(t);
  }

  rep.certified = true;
  for (size_t i = 0; i < rep.steps.size(); ++i) {
    if (rep.deltas[i] > rep.rate_bound[i] * (1.0 + 1e-9)) {
      rep.certified = false;
      break;
    }
  }
  rep.final_params = p;
  return rep;
}

}  // namespace icl
