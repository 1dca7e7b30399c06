#include <cmath>
#include <sstream>

#include "icl/experiment.hpp"
#include "icl/serialize.hpp"

namespace icl {

namespace {

struct Battery {
  std::vector<VerifyCheck> checks;

  void add(const std::string& name, bool passed, const std::string& detail) {
    checks.push_back({name, passed, detail});
  }
  void add(const std::string& name, double value, double bound) {
    std::ostringstream d;
    d << value << " vs bound " << bound;
    checks.push_back({name, value <= bound, d.str()});
  }
};

Params random_params(int H, int d, int K, double w_scale, Rng& rng) {
  Params p;
  p.q.resize(static_cast<size_t>(H));
  p.w.resize(H, K);
  for (int h = 0; h < H; ++h) {
    p.q[static_cast<size_t>(h)].resize(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) p.q[static_cast<size_t>(h)](i, j) = rng.normal();
    for (int k = 0; k < K; ++k) p.w(h, k) = w_scale * rng.normal();
  }
  return p;
}

double closed_form_loss(const Params& p, const Dictionary& dict,
                        const LossContext& ctx) {
  const AttentionState st = attention_state(p, dict, ctx.zbar);
  return population_loss(ctx, delta(ctx, a_hat(p, st)));
}

// Central finite differences of the closed-form loss, matrix-level relative
// error against the analytic gradients.
std::pair<double, double> fd_gradient_errors(const Dictionary& dict,
                                             const LossContext& ctx, Params p,
                                             double step) {
  const AttentionState st = attention_state(p, dict, ctx.zbar);
  const Delta dl = delta(ctx, a_hat(p, st));
  const Matrix gw = grad_w(ctx, st, dl);
  const std::vector<Matrix> gq = grad_q(ctx, st, dl, p);

  const int H = p.H(), d = p.d(), K = p.K();
  double wnum = 0.0, wden = 0.0, qnum = 0.0, qden = 0.0;
  for (int h = 0; h < H; ++h) {
    for (int k = 0; k < K; ++k) {
      const double save = p.w(h, k);
      p.w(h, k) = save + step;
      const double up = closed_form_loss(p, dict, ctx);
      p.w(h, k) = save - step;
      const double dn = closed_form_loss(p, dict, ctx);
      p.w(h, k) = save;
      const double fd = (up - dn) / (2.0 * step);
      wnum += (fd - gw(h, k)) * (fd - gw(h, k));
      wden += gw(h, k) * gw(h, k);
    }
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        Matrix& q = p.q[static_cast<size_t>(h)];
        const double save = q(i, j);
        q(i, j) = save + step;
        const double up = closed_form_loss(p, dict, ctx);
        q(i, j) = save - step;
        const double dn = closed_form_loss(p, dict, ctx);
        q(i, j) = save;
        const double fd = (up - dn) / (2.0 * step);
        const double an = gq[static_cast<size_t>(h)](i, j);
        qnum += (fd - an) * (fd - an);
        qden += an * an;
      }
    }
  }
  return {std::sqrt(wnum / std::max(wden, 1e-300)),
          std::sqrt(qnum / std::max(qden, 1e-300))};
}

}  // namespace

std::vector<VerifyCheck> verify_battery(const ExperimentSpec& spec) {
  spec.validate();
  Battery bat;
  const ProblemConfig& cfg = spec.problem;
  const Dictionary dict = gen_dictionary(cfg);
  const LossContext ctx = build_context(dict, cfg.m, cfg.tau);
  const std::uint64_t root = cfg.seed;

  // Dictionary invariants.
  double unit_err = 0.0;
  for (int k = 0; k < cfg.K; ++k)
    unit_err = std::max(unit_err, std::abs(dict.tokens.col(k).norm() - 1.0));
  bat.add("token-unit-norm", unit_err, 1e-12);
  bat.add("prompt-row-distinct", check_row_distinct(dict), "some row of V has distinct entries");
  bat.add("dictionary-determinism",
          to_json(dict) == to_json(gen_dictionary(cfg)),
          "same seed, byte-identical dictionary");

  // Label linearity in lambda at fixed noise.
  {
    Rng rng = derive_rng(root, "verify.linearity");
    Vector l1(cfg.m), l2(cfg.m);
    Matrix noise(cfg.m, cfg.K);
    for (int i = 0; i < cfg.m; ++i) {
      l1[i] = rng.normal();
      l2[i] = rng.normal();
    }
    for (int k = 0; k < cfg.K; ++k)
      for (int r = 0; r < cfg.m; ++r) noise(r, k) = rng.normal();
    const Vector sum = make_prompt(dict, l1 + l2, noise).labels_all;
    const Vector parts = make_prompt(dict, l1, noise).labels_all +
                         make_prompt(dict, l2, noise).labels_all;
    bat.add("label-linearity", (sum - parts).lpNorm<Eigen::Infinity>(), 1e-12);
  }

  // Noise and lambda sampling statistics.
  {
    const long cols = 100000 / cfg.K + 1;
    double ss = 0.0;
    long n = 0;
    for (long i = 0; i < cols; ++i) {
      const PromptInstance p =
          sample_prompt(dict, spec.lambda_dist, cfg.tau,
                        derive_seed(root, "verify.noise", std::uint64_t(i)));
      ss += p.noise.squaredNorm();
      n += p.noise.size();
    }
    const double var = ss / double(n);
    bat.add("noise-variance", std::abs(var / cfg.tau - 1.0), 0.03);
  }
  if (spec.lambda_dist.in_distribution()) {
    Rng rng = derive_rng(root, "verify.lambda");
    double ss = 0.0;
    const long n = 100000;
    for (long i = 0; i < n; ++i)
      ss += sample_lambda(spec.lambda_dist, cfg.m, rng).squaredNorm();
    bat.add("lambda-second-moment", std::abs(ss / double(n) / cfg.m - 1.0), 0.02);
  }

  // Context identities.
  bat.add("zbar-factorization",
          (ctx.zbar * ctx.zbar - ctx.gram).norm() / (1.0 + ctx.gram.norm()), 1e-8);
  {
    Eigen::SelfAdjointEigenSolver<Matrix> es(ctx.zbar, Eigen::EigenvaluesOnly);
    bat.add("zbar-psd", -es.eigenvalues().minCoeff(), 1e-10);
  }
  bat.add("smw-identity", verify_smw(ctx) / (1.0 + ctx.a.norm()), 1e-8);

  // Loss floor over random parameters.
  {
    Rng rng = derive_rng(root, "verify.floor");
    const int H = spec.resolved_H();
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      const Params p = random_params(H, cfg.d, cfg.K, 1.0, rng);
      worst = std::min(worst, closed_form_loss(p, dict, ctx) - ctx.lstar);
    }
    bat.add("loss-floor", -worst, 1e-10);
  }

  // Limit predictions reproduce the prompt labels.
  {
    const PromptInstance p =
        sample_prompt(dict, spec.lambda_dist, cfg.tau, derive_seed(root, "verify.prefix"));
    const Vector ys = y_star(ctx, p.labels_prompt());
    const Vector yb = y_best(ctx, p.labels_prompt(), cfg.tau);
    const double err =
        std::max((ys.head(cfg.N) - p.labels_prompt()).lpNorm<Eigen::Infinity>(),
                 (yb.head(cfg.N) - p.labels_prompt()).lpNorm<Eigen::Infinity>());
    bat.add("prefix-identity", err, 1e-12);

    // Ridge optimality for both regularizers.
    Rng rng = derive_rng(root, "verify.ridge");
    for (const double reg : {double(cfg.m) * cfg.tau, double(cfg.N) * cfg.tau}) {
      const Vector lam = ridge(ctx.z, p.labels_prompt(), reg);
      auto objective = [&](const Vector& l) {
        return (p.labels_prompt() - ctx.z.transpose() * l).squaredNorm() /
                   (2.0 * cfg.N) +
               reg / (2.0 * cfg.N) * l.squaredNorm();
      };
      const Vector grad = (ctx.z * (ctx.z.transpose() * lam - p.labels_prompt()) +
                           reg * lam) /
                          double(cfg.N);
      bool beats = true;
      const double base = objective(lam);
      for (int i = 0; i < 1000 && beats; ++i) {
        Vector u(cfg.m);
        for (int r = 0; r < cfg.m; ++r) u[r] = rng.normal();
        u *= 1e-3 / u.norm();
        beats = objective(lam + u) >= base;
      }
      std::ostringstream name;
      name << "ridge-optimality-reg-" << reg;
      bat.add(name.str(), grad.norm() <= 1e-10 * (1.0 + lam.norm()) && beats,
              "stationary and beats 1000 perturbations");
    }
  }

  // Strict gradient check on a small derived instance.
  {
    ProblemConfig small{8, 4, 4, 3, 0.1, derive_seed(root, "verify.small")};
    const Dictionary sdict = gen_dictionary(small);
    const LossContext sctx = build_context(sdict, small.m, small.tau);
    Rng rng = derive_rng(root, "verify.fd");
    const Params p = random_params(6, small.d, small.K, 0.5, rng);
    const auto [w_err, q_err] = fd_gradient_errors(sdict, sctx, p, 1e-5);
    bat.add("grad-w-finite-difference", w_err, 1e-6);
    bat.add("grad-q-finite-difference", q_err, 1e-6);
  }

  // PL inequality and gradient-norm bounds at random parameters (gamma = 1).
  {
    Rng rng = derive_rng(root, "verify.pl");
    const int H = spec.resolved_H();
    bool pl_ok = true, wb_ok = true, qb_ok = true;
    for (int i = 0; i < 20; ++i) {
      const Params p = random_params(H, cfg.d, cfg.K, 0.3, rng);
      const AttentionState st = attention_state(p, dict, ctx.zbar);
      const Delta dl = delta(ctx, a_hat(p, st));
      const double gap = loss_gap(ctx, dl);
      const Matrix gw = grad_w(ctx, st, dl);
      const std::vector<Matrix> gq = grad_q(ctx, st, dl, p);
      const double zt = zeta0(st, ctx);
      const double lhs = gw.squaredNorm();
      const double rhs = std::max(0.0, zt) / (double(cfg.K) * cfg.K) * 2.0 *
                         cfg.K * gap;
      pl_ok = pl_ok && lhs >= rhs * (1.0 - 1e-9) - 1e-300;
      const double wb = ctx.zbar_norm * std::sqrt(2.0 / cfg.K * gap);
      for (int h = 0; h < H; ++h)
        wb_ok = wb_ok && gw.row(h).norm() <= wb * (1.0 + 1e-9);
      const double alpha = p.w.cwiseAbs().maxCoeff();
      const double qb = 2.0 * std::sqrt(2.0) * alpha * ctx.fbar_max * std::sqrt(gap);
      for (int h = 0; h < H; ++h)
        qb_ok = qb_ok && gq[static_cast<size_t>(h)].norm() <= qb * (1.0 + 1e-9);
    }
    bat.add("pl-inequality", pl_ok, "20 random parameter draws");
    bat.add("w-gradient-bound", wb_ok, "20 random parameter draws");
    bat.add("q-gradient-bound", qb_ok, "20 random parameter draws");
  }

  // Monte Carlo loss agrees with the closed form.
  {
    Rng rng = derive_rng(root, "verify.mc");
    const Params p = random_params(spec.resolved_H(), cfg.d, cfg.K, 0.3, rng);
    const double lc = closed_form_loss(p, dict, ctx);
    const McLoss mc = mc_loss(p, dict,
                              spec.lambda_dist.in_distribution()
                                  ? spec.lambda_dist
                                  : LambdaDist::standard_gaussian(),
                              cfg.tau, 100000, derive_seed(root, "verify.mc.draws"));
    bat.add("mc-loss-agreement", std::abs(mc.estimate - lc), 3.0 * mc.std_error);
  }

  // Noiseless full-rank limit recovers the labels exactly.
  {
    ProblemConfig rc{12, 6, 3, 3, 1.0, derive_seed(root, "verify.recovery")};
    const Dictionary rdict = gen_dictionary(rc);
    const LossContext rctx = build_context(rdict, rc.m, 0.0);
    const PromptInstance p =
        sample_prompt(rdict, LambdaDist::standard_gaussian(), 0.0,
                      derive_seed(root, "verify.recovery.prompt"));
    const Vector ys = y_star(rctx, p.labels_prompt());
    bat.add("exact-recovery", (ys - p.labels_all).lpNorm<Eigen::Infinity>(), 1e-8);
  }

  // Averaging the noisy regression objective matches the ridge objective.
  {
    Rng rng = derive_rng(root, "verify.equiv");
    const PromptInstance p =
        sample_prompt(dict, spec.lambda_dist, cfg.tau, derive_seed(root, "verify.equiv.prompt"));
    Vector lam(cfg.m);
    for (int i = 0; i < cfg.m; ++i) lam[i] = rng.normal();
    const Vector resid = p.labels_prompt() - ctx.z.transpose() * lam;
    const double closed =
        resid.squaredNorm() / (2.0 * cfg.N) + cfg.tau / 2.0 * lam.squaredNorm();
    const double noise_sd = std::sqrt(cfg.tau) * lam.norm();
    double mean = 0.0, m2 = 0.0;
    const long n = 100000;
    for (long i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int r = 0; r < cfg.N; ++r) {
        const double e = resid[r] - noise_sd * rng.normal();
        acc += e * e;
      }
      const double v = acc / (2.0 * cfg.N);
      const double d1 = v - mean;
      mean += d1 / double(i + 1);
      m2 += d1 * (v - mean);
    }
    const double se = std::sqrt(m2 / (double(n - 1) * n));
    bat.add("regression-equivalence", std::abs(mean - closed), 3.0 * se);
  }

  return bat.checks;
}

}  // namespace icl
