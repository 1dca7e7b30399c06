#include "icl/experiment.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "icl/errors.hpp"
#include "icl/serialize.hpp"
#include "icl/svg.hpp"

namespace icl {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << "0x" << std::hex << v;
  return ss.str();
}

// Collects every artifact of a run and its checksum for the manifest.
class OutputDir {
 public:
  explicit OutputDir(const std::string& dir) : dir_(dir) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw ConfigError("could not create out_dir '" + dir + "'");
  }

  void write(const std::string& name, const std::string& contents) {
    write_file((fs::path(dir_) / name).string(), contents);
    std::lock_guard<std::mutex> lock(mu_);
    entries_.push_back({name, hex64(fnv1a64(contents))});
  }

  const std::vector<ManifestEntry>& entries() const { return entries_; }
  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  std::mutex mu_;
  std::vector<ManifestEntry> entries_;
};

// Runs n jobs on up to max_threads() workers; job results land in caller
// buffers indexed by job, so the schedule cannot affect the output.
void parallel_for(int n, const std::function<void(int)>& fn,
                  std::vector<std::string>& failures) {
  const int workers = std::max(1, std::min(max_threads(), n));
  std::atomic<int> next{0};
  std::mutex mu;
  auto body = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu);
        failures.push_back("job " + std::to_string(i) + ": " + e.what());
      }
    }
  };
  if (workers == 1) {
    body();
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int t = 0; t < workers; ++t) pool.emplace_back(body);
  for (auto& th : pool) th.join();
}

std::string trajectory_csv(const TrainReport& rep) {
  std::ostringstream csv;
  csv << "t,loss,delta,rate_bound,zeta_t,grad_q_norm,grad_w_norm,pl_lhs,pl_rhs\n";
  for (size_t i = 0; i < rep.steps.size(); ++i) {
    csv << rep.steps[i] << ',' << fmt(rep.losses[i]) << ',' << fmt(rep.deltas[i])
        << ',' << fmt(rep.rate_bound[i]) << ',' << fmt(rep.zeta_trace[i]) << ','
        << fmt(rep.grad_q_norm[i]) << ',' << fmt(rep.grad_w_norm[i]) << ','
        << fmt(rep.pl_lhs[i]) << ',' << fmt(rep.pl_rhs[i]) << '\n';
  }
  return csv.str();
}

LambdaDist ood_dist(int m, double stdev = 2.0) {
  return LambdaDist::shifted_gaussian(Vector::Ones(m), stdev);
}

void run_train_curve(const ExperimentSpec& spec, OutputDir& out,
                     RunManifest& manifest) {
  const Dictionary dict = gen_dictionary(spec.problem);
  const LossContext ctx = build_context(dict, spec.problem.m, spec.problem.tau);
  const Params params0 =
      init_params(spec.resolved_H(), spec.problem.d, spec.problem.K,
                  spec.model.beta, derive_seed(spec.problem.seed, "experiment.params"));

  // Held-out prompts for the inference-gap curves; their limit predictions
  // are parameter-free and precomputed.
  constexpr int kEvalPrompts = 8;
  std::vector<Vector> in_prompts, in_stars, ood_prompts, ood_stars;
  const LambdaDist ood = ood_dist(spec.problem.m);
  for (int i = 0; i < kEvalPrompts; ++i) {
    PromptInstance p = sample_prompt(dict, spec.lambda_dist, spec.problem.tau,
                                     derive_seed(spec.problem.seed, "eval.in", i));
    in_prompts.push_back(p.labels_prompt());
    in_stars.push_back(y_star(ctx, in_prompts.back()));
    PromptInstance q = sample_prompt(dict, ood, spec.problem.tau,
                                     derive_seed(spec.problem.seed, "eval.ood", i));
    ood_prompts.push_back(q.labels_prompt());
    ood_stars.push_back(y_star(ctx, ood_prompts.back()));
  }

  std::ostringstream gaps;
  gaps << "t,gap_in,gap_ood\n";
  std::vector<double> gap_ts, gap_in, gap_ood;
  auto on_checkpoint = [&](long t, const Params& p, double) {
    const AttentionState st = attention_state(p, dict, ctx.zbar);
    double gin = 0.0, good = 0.0;
    for (int i = 0; i < kEvalPrompts; ++i) {
      gin += (predict(p, st, in_prompts[static_cast<size_t>(i)]) -
              in_stars[static_cast<size_t>(i)])
                 .squaredNorm() /
             (2.0 * ctx.K);
      good += (predict(p, st, ood_prompts[static_cast<size_t>(i)]) -
               ood_stars[static_cast<size_t>(i)])
                  .squaredNorm() /
              (2.0 * ctx.K);
    }
    gin /= kEvalPrompts;
    good /= kEvalPrompts;
    gaps << t << ',' << fmt(gin) << ',' << fmt(good) << '\n';
    gap_ts.push_back(double(t));
    gap_in.push_back(gin);
    gap_ood.push_back(good);
  };

  // T = 0 under auto-theory rates means "train until the inference target":
  // the budget comes from the iteration-complexity bound at (B, eps, delta).
  TrainerConfig tcfg = spec.trainer;
  if (tcfg.T == 0 && tcfg.lr_mode == LrMode::AutoTheory) {
    const AttentionState st0 = attention_state(params0, dict, ctx.zbar);
    const Delta dl0 = delta(ctx, a_hat(params0, st0));
    const double d0 = loss_gap(ctx, dl0);
    const double z0 = zeta0(st0, ctx);
    double gamma = gamma_lower_bound(ctx, z0, params0.H(), ctx.K, d0);
    if (!(gamma > 0)) gamma = 1.0;
    const double L = smoothness_L(ctx, z0, gamma, params0.H(), ctx.K, ctx.N, d0,
                                  tcfg.variant);
    tcfg.T = iteration_complexity(spec.inference.B, d0, ctx, spec.inference.eps,
                                  spec.inference.delta_prob, gamma * gamma / L,
                                  z0, ctx.K, ctx.N, ctx.tau);
  }

  const TrainReport rep = train(params0, ctx, dict, tcfg, on_checkpoint);

  out.write("trajectory.csv", trajectory_csv(rep));
  out.write("gap_curves.csv", gaps.str());
  out.write("report.json", to_json(rep));
  out.write("model.json",
            to_json(ModelBundle{rep.final_params, dict, spec.problem.tau}));

  std::vector<double> ts(rep.steps.begin(), rep.steps.end());
  out.write("loss_curve.svg",
            render_line_chart("training loss", "step", "loss gap",
                              {{"delta", ts, rep.deltas},
                               {"rate bound", ts, rep.rate_bound}},
                              true));
  out.write("gap_curves.svg",
            render_line_chart("inference gap", "step", "gap",
                              {{"in-domain", gap_ts, gap_in},
                               {"out-of-domain", gap_ts, gap_ood}},
                              true));
  if (!rep.certified && spec.trainer.lr_mode == LrMode::AutoTheory)
    manifest.failures.push_back("train-curve: certified rate bound violated");
}

void run_sweep_n(const ExperimentSpec& spec, OutputDir& out, RunManifest& manifest) {
  const std::vector<int> grid = spec.resolved_n_grid();
  const std::vector<std::uint64_t> seeds = spec.resolved_seeds();
  const int jobs = static_cast<int>(grid.size() * seeds.size());
  std::vector<double> gap(static_cast<size_t>(jobs),
                          std::numeric_limits<double>::quiet_NaN());

  parallel_for(
      jobs,
      [&](int j) {
        const int n = grid[static_cast<size_t>(j) % grid.size()];
        const std::uint64_t seed = seeds[static_cast<size_t>(j) / grid.size()];
        ProblemConfig cfg = spec.problem;
        cfg.N = n;
        cfg.seed = seed;
        const Dictionary dict = gen_dictionary(cfg);
        const LossContext ctx = build_context(dict, cfg.m, cfg.tau);
        const PromptInstance prompt = sample_prompt(
            dict, spec.lambda_dist, cfg.tau, derive_seed(seed, "sweep_n.prompt"));
        const Vector ys = y_star(ctx, prompt.labels_prompt());
        const Vector yb = y_best(ctx, prompt.labels_prompt(), cfg.tau);
        gap[static_cast<size_t>(j)] = (ys - yb).squaredNorm() / double(cfg.K);
      },
      manifest.failures);

  std::ostringstream csv;
  csv << "seed,N,gap_best\n";
  std::vector<Series> series;
  for (size_t s = 0; s < seeds.size(); ++s) {
    Series ser{"seed " + std::to_string(seeds[s]), {}, {}};
    for (size_t g = 0; g < grid.size(); ++g) {
      const double v = gap[s * grid.size() + g];
      csv << seeds[s] << ',' << grid[g] << ',' << fmt(v) << '\n';
      ser.x.push_back(double(grid[g]));
      ser.y.push_back(v);
    }
    series.push_back(std::move(ser));
  }
  out.write("gap_vs_n.csv", csv.str());
  out.write("gap_vs_n.svg",
            render_line_chart("ridge mismatch vs prompt length", "N",
                              "gap_best", series, true));
}

void run_sweep_h(const ExperimentSpec& spec, OutputDir& out, RunManifest& manifest) {
  const std::vector<int> grid = spec.resolved_h_grid();
  const std::vector<std::uint64_t> seeds = spec.resolved_seeds();
  const int jobs = static_cast<int>(grid.size() * seeds.size());
  struct Row {
    double delta0 = std::numeric_limits<double>::quiet_NaN();
    double delta_final = std::numeric_limits<double>::quiet_NaN();
    bool certified = false;
  };
  std::vector<Row> rows(static_cast<size_t>(jobs));

  parallel_for(
      jobs,
      [&](int j) {
        const int H = grid[static_cast<size_t>(j) % grid.size()];
        const std::uint64_t seed = seeds[static_cast<size_t>(j) / grid.size()];
        ProblemConfig cfg = spec.problem;
        cfg.seed = seed;
        const Dictionary dict = gen_dictionary(cfg);
        const LossContext ctx = build_context(dict, cfg.m, cfg.tau);
        const Params params0 =
            init_params(H, cfg.d, cfg.K, spec.model.beta,
                        derive_seed(seed, "sweep_h.params", std::uint64_t(H)));
        const TrainReport rep = train(params0, ctx, dict, spec.trainer);
        rows[static_cast<size_t>(j)] = {rep.delta0, rep.deltas.back(), rep.certified};
      },
      manifest.failures);

  std::ostringstream csv;
  csv << "seed,H,delta0,delta_final,certified\n";
  std::vector<Series> series;
  for (size_t s = 0; s < seeds.size(); ++s) {
    Series ser{"seed " + std::to_string(seeds[s]), {}, {}};
    for (size_t g = 0; g < grid.size(); ++g) {
      const Row& r = rows[s * grid.size() + g];
      csv << seeds[s] << ',' << grid[g] << ',' << fmt(r.delta0) << ','
          << fmt(r.delta_final) << ',' << (r.certified ? 1 : 0) << '\n';
      ser.x.push_back(double(grid[g]));
      ser.y.push_back(r.delta_final);
    }
    series.push_back(std::move(ser));
  }
  out.write("sweep_h.csv", csv.str());
  out.write("sweep_h.svg",
            render_line_chart("final loss gap vs head count", "H",
                              "final delta", series, true));
}

}  // namespace

int max_threads() {
  if (const char* env = std::getenv("ICL_LAB_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

std::string to_json(const RunManifest& m) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "run_manifest";
  j["version"] = m.version;
  j["experiment"] = m.experiment;
  j["spec_hash"] = m.spec_hash;
  j["root_seed"] = m.root_seed;
  j["seeds"] = m.seeds;
  j["ok"] = m.ok;
  j["failures"] = m.failures;
  nlohmann::json files = nlohmann::json::array();
  for (const auto& e : m.files)
    files.push_back({{"path", e.path}, {"checksum", e.checksum}});
  j["files"] = files;
  return j.dump(2) + "\n";
}

RunManifest run(const ExperimentSpec& spec) {
  spec.validate();
  RunManifest manifest;
  manifest.version = std::string(kVersion);
  manifest.experiment = experiment_kind_name(spec.experiment);
  manifest.spec_hash = hex64(fnv1a64(serialize_spec(spec)));
  manifest.root_seed = spec.problem.seed;
  if (spec.experiment == ExperimentKind::SweepN ||
      spec.experiment == ExperimentKind::SweepH)
    manifest.seeds = spec.resolved_seeds();

  OutputDir out(spec.out_dir);
  out.write("spec.cfg", serialize_spec(spec));

  switch (spec.experiment) {
    case ExperimentKind::TrainCurve:
      run_train_curve(spec, out, manifest);
      break;
    case ExperimentKind::SweepN:
      run_sweep_n(spec, out, manifest);
      break;
    case ExperimentKind::SweepH:
      run_sweep_h(spec, out, manifest);
      break;
    case ExperimentKind::Verify: {
      const std::vector<VerifyCheck> checks = verify_battery(spec);
      std::ostringstream report;
      for (const auto& c : checks) {
        report << (c.passed ? "[ok]   " : "[FAIL] ") << c.name;
        if (!c.detail.empty()) report << " — " << c.detail;
        report << '\n';
        if (!c.passed)
          manifest.failures.push_back("verify: " + c.name + " — " + c.detail);
      }
      out.write("verify_report.txt", report.str());
      break;
    }
  }

  manifest.ok = manifest.failures.empty();
  manifest.files = out.entries();
  write_file((fs::path(out.dir()) / "manifest.json").string(), to_json(manifest));
  return manifest;
}

}  // namespace icl
