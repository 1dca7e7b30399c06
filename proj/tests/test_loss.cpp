#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "icl/errors.hpp"
#include "icl/inference.hpp"
#include "icl/serialize.hpp"

using namespace icl;

namespace {

const ProblemConfig kFixtureCfg{3, 2, 2, 2, 0.5, 1};

Params random_params(int H, int d, int K, std::uint64_t seed, double w_scale) {
  Params p = init_params(H, d, K, 1.0, seed);
  Rng rng = derive_rng(seed, "test.w");
  for (int h = 0; h < H; ++h)
    for (int k = 0; k < K; ++k) p.w(h, k) = w_scale * rng.normal();
  return p;
}

// Gauss-Jordan inverse with partial pivoting; test-side tool kept free of
// the library's solver path on purpose.
Matrix gj_inverse(Matrix A) {
  const int n = int(A.rows());
  Matrix inv = Matrix::Identity(n, n);
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(A(r, col)) > std::abs(A(piv, col))) piv = r;
    REQUIRE(std::abs(A(piv, col)) > 0);
    A.row(col).swap(A.row(piv));
    inv.row(col).swap(inv.row(piv));
    const double scale = A(col, col);
    A.row(col) /= scale;
    inv.row(col) /= scale;
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = A(r, col);
      A.row(r) -= f * A.row(col);
      inv.row(r) -= f * inv.row(col);
    }
  }
  return inv;
}

// From-scratch target matrix and loss floor, straight from the defining
// formulas with an explicit inverse.
struct ScriptContext {
  Matrix a;
  double lstar;
};

ScriptContext script_context(const Dictionary& dict, double tau) {
  const int N = dict.cfg.N, K = dict.cfg.K, m = dict.cfg.m;
  const Matrix Z = dict.z();
  const Matrix inv = gj_inverse(Z.transpose() * Z + m * tau * Matrix::Identity(N, N));
  ScriptContext out;
  out.a.resize(N, K);
  double acc = 0.0;
  for (int k = 0; k < K; ++k) {
    Vector b = Z.transpose() * dict.zhat.col(k);
    if (k < N) b[k] += m * tau;
    out.a.col(k) = inv * b;
    acc += dict.zhat.col(k).squaredNorm() + m * tau - b.dot(inv * b);
  }
  out.lstar = acc / (2.0 * K);
  return out;
}

double closed_loss(const Params& p, const Dictionary& dict, const LossContext& ctx) {
  const AttentionState st = attention_state(p, dict, ctx.zbar);
  return population_loss(ctx, delta(ctx, a_hat(p, st)));
}

}  // namespace

TEST_CASE("context with zero representations") {
  Dictionary dict = gen_dictionary(kFixtureCfg);
  dict.zhat.setZero();
  const double tau = 0.5;
  const LossContext ctx = build_context(dict, 2, tau);
  const double root = std::sqrt(2.0 * tau);
  CHECK((ctx.zbar - root * Matrix::Identity(2, 2)).norm() <= 1e-12);
  Matrix expect(2, 3);
  expect << 1, 0, 0, 0, 1, 0;
  CHECK((ctx.a - expect).norm() <= 1e-12);
  // Prompt labels are reproduced exactly; each of the K - N unseen tokens
  // keeps its own irreducible noise energy m tau.
  const double floor = (3 - 2) * 2 * tau / (2.0 * 3);
  CHECK(ctx.lstar == doctest::Approx(floor).epsilon(1e-14));
}

TEST_CASE("noiseless square case inverts the prompt representations") {
  const ProblemConfig cfg{5, 3, 2, 2, 1.0, 33};
  const Dictionary dict = gen_dictionary(cfg);
  const LossContext ctx = build_context(dict, 2, 0.0);
  const Matrix direct = gj_inverse(Matrix(dict.z())) * dict.zhat;
  CHECK((ctx.a - direct).norm() <= 1e-8 * (1.0 + direct.norm()));
}

TEST_CASE("rank-deficient tau = 0 context is rejected with the rank") {
  const ProblemConfig cfg{6, 3, 4, 2, 1.0, 3};  // m=2 < N=4, so rank <= 2
  const Dictionary dict = gen_dictionary(cfg);
  CHECK_THROWS_WITH_AS(build_context(dict, 2, 0.0),
                       "tau = 0 requires rank-4 prompt representations, got rank 2",
                       NumericError);
}

TEST_CASE("context matches the independent script on the fixture") {
  const Dictionary dict = gen_dictionary(kFixtureCfg);
  const LossContext ctx = build_context(dict, 2, 0.5);
  const ScriptContext script = script_context(dict, 0.5);
  CHECK((ctx.a - script.a).norm() <= 1e-10);
  CHECK(ctx.lstar == doctest::Approx(script.lstar).epsilon(1e-12));

  // scalar summaries
  CHECK((ctx.zbar * ctx.zbar - ctx.gram).norm() <= 1e-8 * (1.0 + ctx.gram.norm()));
  Eigen::SelfAdjointEigenSolver<Matrix> es(ctx.zbar, Eigen::EigenvaluesOnly);
  CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  CHECK(ctx.fbar_max == doctest::Approx(ctx.zbar.colwise().norm().maxCoeff()));
  Eigen::JacobiSVD<Matrix> svd(ctx.zbar);
  CHECK(ctx.zbar_norm == doctest::Approx(svd.singularValues()(0)).epsilon(1e-12));
  CHECK(verify_smw(ctx) <= 1e-8 * (1.0 + ctx.a.norm()));
}

TEST_CASE("delta") {
  const Dictionary dict = gen_dictionary(kFixtureCfg);
  const LossContext ctx = build_context(dict, 2, 0.5);

  SUBCASE("ahat = A gives zero residuals") {
    CHECK(delta(ctx, ctx.a).d.norm() == 0.0);
  }

  SUBCASE("zero weights give minus the target columns") {
    const Params p{std::vector<Matrix>(2, Matrix::Identity(2, 2)), Matrix::Zero(2, 3)};
    const AttentionState st = attention_state(p, dict, ctx.zbar);
    const Delta dl = delta(ctx, a_hat(p, st));
    CHECK((dl.d + ctx.a).norm() <= 1e-15);
  }

  SUBCASE("branch formula agrees with the matrix form") {
    const Params p = random_params(3, 2, 3, 17, 0.8);
    const AttentionState st = attention_state(p, dict, ctx.zbar);
    const Delta dl = delta(ctx, a_hat(p, st));
    const Matrix inv =
        gj_inverse(Matrix(dict.z().transpose() * dict.z() + 2 * 0.5 * Matrix::Identity(2, 2)));
    for (int k = 0; k < 3; ++k) {
      Vector target = dict.z().transpose() * dict.zhat.col(k);
      if (k < ctx.N) target[k] += 2 * 0.5;
      Vector branch = Vector::Zero(ctx.N);
      for (int h = 0; h < 3; ++h) branch += p.w(h, k) * st.s(h, k);
      branch -= inv * target;
      CHECK((dl.d.col(k) - branch).norm() <= 1e-10);
    }
  }
}

TEST_CASE("population loss") {
  const Dictionary dict = gen_dictionary(kFixtureCfg);
  const LossContext ctx = build_context(dict, 2, 0.5);

  SUBCASE("zero residual sits at the floor") {
    CHECK(population_loss(ctx, delta(ctx, ctx.a)) == doctest::Approx(ctx.lstar));
  }

  SUBCASE("zero weights give the initial gap used by the trainer") {
    const Params p{std::vector<Matrix>(2, Matrix::Identity(2, 2)), Matrix::Zero(2, 3)};
    const AttentionState st = attention_state(p, dict, ctx.zbar);
    const Delta dl = delta(ctx, a_hat(p, st));
    double expect = 0.0;
    for (int k = 0; k < 3; ++k) expect += (ctx.zbar * ctx.a.col(k)).squaredNorm();
    expect /= 2.0 * 3;
    CHECK(loss_gap(ctx, dl) == doctest::Approx(expect).epsilon(1e-12));
  }

  SUBCASE("never below the floor over random parameters") {
    Rng rng = derive_rng(5, "test.floor");
    for (int i = 0; i < 1000; ++i) {
      const Params p = random_params(2, 2, 3, rng.next_u64(), 1.5);
      CHECK(closed_loss(p, dict, ctx) >= ctx.lstar - 1e-10);
    }
  }
}

TEST_CASE("monte carlo loss") {
  const Dictionary dict = gen_dictionary(kFixtureCfg);
  const LossContext ctx = build_context(dict, 2, 0.5);
  const Params p = random_params(2, 2, 3, 23, 0.6);

  SUBCASE("agrees with the closed form for gaussian and rademacher") {
    const double closed = closed_loss(p, dict, ctx);
    for (const LambdaDist& dist :
         {LambdaDist::standard_gaussian(), LambdaDist::rademacher()}) {
      const McLoss mc = mc_loss(p, dict, dist, 0.5, 1000000, 91);
      CHECK(std::abs(mc.estimate - closed) <= 3.0 * mc.std_error);
    }
  }

  SUBCASE("solved weights bring the estimate down to the floor") {
    Params solved = random_params(2, 2, 3, 3, 0.0);  // H = N = 2
    AttentionState st = attention_state(solved, dict, ctx.zbar);
    for (int k = 0; k < 3; ++k)
      solved.w.col(k) = st.c[size_t(k)].fullPivLu().solve(ctx.a.col(k));
    const McLoss mc =
        mc_loss(solved, dict, LambdaDist::standard_gaussian(), 0.5, 200000, 5);
    CHECK(std::abs(mc.estimate - ctx.lstar) <= 3.0 * mc.std_error);
  }

  SUBCASE("deterministic given the seed") {
    const McLoss a = mc_loss(p, dict, LambdaDist::standard_gaussian(), 0.5, 1, 7);
    const McLoss b = mc_loss(p, dict, LambdaDist::standard_gaussian(), 0.5, 1, 7);
    const McLoss c = mc_loss(p, dict, LambdaDist::standard_gaussian(), 0.5, 1, 8);
    CHECK(a.estimate == b.estimate);
    CHECK(a.estimate != c.estimate);
  }

  SUBCASE("rejects bad inputs") {
    CHECK_THROWS_AS(mc_loss(p, dict, LambdaDist::standard_gaussian(), 0.5, 0, 7),
                    ConfigError);
    CHECK_THROWS_AS(mc_loss(p, dict, LambdaDist::shifted_gaussian(Vector::Ones(2), 2.0),
                            0.5, 10, 7),
                    ConfigError);
  }
}

TEST_CASE("gradients") {
  const Dictionary dict = gen_dictionary(kFixtureCfg);
  const LossContext ctx = build_context(dict, 2, 0.5);

  SUBCASE("zero at the infimum") {
    // Solve C_k w_k = A_k per token; H = N makes the system square.
    Params p = random_params(2, 2, 3, 3, 0.0);
    AttentionState st = attention_state(p, dict, ctx.zbar);
    for (int k = 0; k < 3; ++k)
      p.w.col(k) = st.c[size_t(k)].fullPivLu().solve(ctx.a.col(k));
    st = attention_state(p, dict, ctx.zbar);
    const Delta dl = delta(ctx, a_hat(p, st));
    REQUIRE(loss_gap(ctx, dl) <= 1e-20);
    CHECK(grad_w(ctx, st, dl).norm() <= 1e-12);
    for (const Matrix& g : grad_q(ctx, st, dl, p)) CHECK(g.norm() <= 1e-12);
  }

  SUBCASE("zero weights zero the q-gradient") {
    const Params p = random_params(3, 2, 3, 11, 0.0);
    const AttentionState st = attention_state(p, dict, ctx.zbar);
    const Delta dl = delta(ctx, a_hat(p, st));
    for (const Matrix& g : grad_q(ctx, st, dl, p)) CHECK(g.norm() == 0.0);
  }

  SUBCASE("uniform attention with identity weighting averages the residual") {
    // Hand-built context with gram = I so that r = delta.
    LossContext flat = ctx;
    flat.gram = Matrix::Identity(2, 2);
    flat.zbar = Matrix::Identity(2, 2);
    Params p;
    p.q.assign(1, Matrix::Zero(2, 2));
    p.w = Matrix::Ones(1, 3);
    const AttentionState st = attention_state(p, dict, flat.zbar);
    const Delta dl = delta(flat, a_hat(p, st));
    const Matrix gw = grad_w(flat, st, dl);
    for (int k = 0; k < 3; ++k)
      CHECK(gw(0, k) ==
            doctest::Approx(dl.d.col(k).sum() / (3.0 * 2.0)).epsilon(1e-12));
  }

  SUBCASE("match central finite differences") {
    Params p = random_params(3, 2, 3, 29, 0.7);
    const AttentionState st = attention_state(p, dict, ctx.zbar);
    const Delta dl = delta(ctx, a_hat(p, st));
    const Matrix gw = grad_w(ctx, st, dl);
    const auto gq = grad_q(ctx, st, dl, p);
    const double h = 1e-5;
    double wnum = 0, wden = 0, qnum = 0, qden = 0;
    for (int hh = 0; hh < 3; ++hh) {
      for (int k = 0; k < 3; ++k) {
        const double save = p.w(hh, k);
        p.w(hh, k) = save + h;
        const double up = closed_loss(p, dict, ctx);
        p.w(hh, k) = save - h;
        const double dn = closed_loss(p, dict, ctx);
        p.w(hh, k) = save;
        const double fd = (up - dn) / (2 * h);
        wnum += (fd - gw(hh, k)) * (fd - gw(hh, k));
        wden += gw(hh, k) * gw(hh, k);
      }
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const double save = p.q[size_t(hh)](a, b);
          p.q[size_t(hh)](a, b) = save + h;
          const double up = closed_loss(p, dict, ctx);
          p.q[size_t(hh)](a, b) = save - h;
          const double dn = closed_loss(p, dict, ctx);
          p.q[size_t(hh)](a, b) = save;
          const double fd = (up - dn) / (2 * h);
          const double an = gq[size_t(hh)](a, b);
          qnum += (fd - an) * (fd - an);
          qden += an * an;
        }
    }
    CHECK(std::sqrt(wnum / wden) <= 1e-6);
    CHECK(std::sqrt(qnum / qden) <= 1e-6);
  }
}

TEST_CASE("gradient norm bounds and PL inequality at random parameters") {
  const Dictionary dict = gen_dictionary({8, 4, 4, 2, 0.1, 12});
  const LossContext ctx = build_context(dict, 2, 0.1);
  Rng rng = derive_rng(41, "test.bounds");
  for (int i = 0; i < 50; ++i) {
    const Params p = random_params(6, 4, 8, rng.next_u64(), 0.4);
    const AttentionState st = attention_state(p, dict, ctx.zbar);
    const Delta dl = delta(ctx, a_hat(p, st));
    const double gap = loss_gap(ctx, dl);
    const Matrix gw = grad_w(ctx, st, dl);
    const auto gq = grad_q(ctx, st, dl, p);

    // Per-head q-gradient bound with the current weight ceiling (gamma = 1).
    const double alpha = p.w.cwiseAbs().maxCoeff();
    const double qb = 2.0 * std::sqrt(2.0) * alpha * ctx.fbar_max * std::sqrt(gap);
    for (const Matrix& g : gq) CHECK(g.norm() <= qb * (1.0 + 1e-9));

    // Per-head w-gradient bound.
    const double wb = ctx.zbar_norm * std::sqrt(2.0 / ctx.K * gap);
    for (int h = 0; h < 6; ++h) CHECK(gw.row(h).norm() <= wb * (1.0 + 1e-9));

    // PL inequality with the current spectral floor.
    double zmin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < ctx.K; ++k) {
      const Matrix B = ctx.zbar * st.c[size_t(k)];
      Eigen::SelfAdjointEigenSolver<Matrix> es(B * B.transpose(), Eigen::EigenvaluesOnly);
      zmin = std::min(zmin, es.eigenvalues().minCoeff());
    }
    double sum_zd = 0.0;
    for (int k = 0; k < ctx.K; ++k)
      sum_zd += (ctx.zbar * dl.d.col(k)).squaredNorm();
    const double lhs = gw.squaredNorm();
    const double rhs = std::max(0.0, zmin) / (double(ctx.K) * ctx.K) * sum_zd;
    CHECK(lhs >= rhs * (1.0 - 1e-9) - 1e-300);
  }
}

TEST_CASE("noisy regression objective averages to the ridge objective") {
  const Dictionary dict = gen_dictionary({12, 5, 6, 3, 0.2, 19});
  Rng rng = derive_rng(77, "test.equiv");
  const double tau = 0.2;
  for (int rep = 0; rep < 5; ++rep) {
    const PromptInstance prompt = sample_prompt(dict, LambdaDist::standard_gaussian(),
                                                tau, derive_seed(77, "prompt", rep));
    Vector lam(3);
    for (int i = 0; i < 3; ++i) lam[i] = rng.normal();
    const Vector resid = prompt.labels_prompt() - dict.z().transpose() * lam;
    const double ridge_obj =
        resid.squaredNorm() / (2.0 * dict.cfg.N) + tau / 2.0 * lam.squaredNorm();
    const double sd = std::sqrt(tau) * lam.norm();
    double mean = 0, m2 = 0;
    const long n = 100000;
    for (long i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int r = 0; r < dict.cfg.N; ++r) {
        const double e = resid[r] - sd * rng.normal();
        acc += e * e;
      }
      const double v = acc / (2.0 * dict.cfg.N);
      const double d1 = v - mean;
      mean += d1 / double(i + 1);
      m2 += d1 * (v - mean);
    }
    const double se = std::sqrt(m2 / (double(n - 1) * n));
    CHECK(std::abs(mean - ridge_obj) <= 3.0 * se);
  }
}

TEST_CASE("context serialization round-trips through the cache format") {
  const Dictionary dict = gen_dictionary({8, 4, 4, 2, 0.1, 12});
  const LossContext ctx = build_context(dict, 2, 0.1);
  const LossContext back = context_from_json(to_json(ctx));
  CHECK((back.a - ctx.a).norm() == 0.0);
  CHECK((back.zbar - ctx.zbar).norm() == 0.0);
  CHECK(back.lstar == ctx.lstar);
  CHECK(back.z_norm == ctx.z_norm);
  CHECK((back.gram - ctx.gram).norm() <= 1e-12);
}
