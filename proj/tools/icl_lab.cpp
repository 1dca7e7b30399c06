// icl-lab: reproducible experiments for the one-layer multi-head softmax
// attention workbench. Subcommands: train, infer, sweep-n, sweep-h, verify,
// loss-report. Exit codes: 0 success, 1 invariant failure, 2 config error,
// 3 numeric divergence.

#include <charconv>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "icl/errors.hpp"
#include "icl/experiment.hpp"
#include "icl/serialize.hpp"

namespace {

using namespace icl;

std::string fmt(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

ExperimentSpec load_spec(const std::string& path) {
  return parse_spec(read_file(path));
}

int finish(const RunManifest& manifest) {
  for (const auto& f : manifest.failures) std::cerr << "failure: " << f << "\n";
  std::cout << "wrote " << manifest.files.size() << " artifacts ("
            << manifest.experiment << ")\n";
  return manifest.ok ? 0 : 1;
}

int cmd_train(const std::string& config, const std::string& lr_mode,
              const std::string& variant, const std::string& out) {
  ExperimentSpec spec = load_spec(config);
  spec.experiment = ExperimentKind::TrainCurve;
  if (!out.empty()) spec.out_dir = out;
  if (lr_mode == "manual")
    spec.trainer.lr_mode = LrMode::Manual;
  else if (lr_mode == "auto-theory")
    spec.trainer.lr_mode = LrMode::AutoTheory;
  else if (!lr_mode.empty())
    throw ConfigError("--lr-mode must be 'manual' or 'auto-theory'");
  if (variant == "simplified")
    spec.trainer.variant = SmoothnessVariant::Simplified;
  else if (variant == "tight")
    spec.trainer.variant = SmoothnessVariant::Tight;
  else if (!variant.empty())
    throw ConfigError("--variant must be 'simplified' or 'tight'");
  return finish(run(spec));
}

int cmd_sweep(const std::string& config, ExperimentKind kind,
              const std::string& out) {
  ExperimentSpec spec = load_spec(config);
  spec.experiment = kind;
  if (!out.empty()) spec.out_dir = out;
  return finish(run(spec));
}

int cmd_verify(const std::string& config, const std::string& out) {
  ExperimentSpec spec = load_spec(config);
  spec.experiment = ExperimentKind::Verify;
  if (!out.empty()) spec.out_dir = out;
  const RunManifest manifest = run(spec);
  const std::string report =
      read_file((std::filesystem::path(spec.out_dir) / "verify_report.txt").string());
  std::cout << report;
  return finish(manifest);
}

int cmd_infer(const std::string& model_path, const std::string& prompt_path,
              const std::string& out, bool dump_attention) {
  const ModelBundle model = model_from_json(read_file(model_path));
  const PromptInstance prompt = prompt_from_json(read_file(prompt_path));
  const LossContext ctx =
      build_context(model.dictionary, model.dictionary.cfg.m, model.tau);
  const InferenceResult result = evaluate(model.params, model.dictionary, ctx, prompt);
  const std::string text = to_json(result);
  if (out.empty())
    std::cout << text;
  else
    write_file(out, text);

  if (dump_attention) {
    const AttentionState st = attention_state(model.params, model.dictionary, ctx.zbar);
    std::ostringstream csv;
    csv << "k,j";
    for (int h = 0; h < st.H(); ++h) csv << ",h" << h;
    csv << "\n";
    for (int k = 0; k < st.K(); ++k)
      for (int j = 0; j < st.N(); ++j) {
        csv << k << ',' << j;
        for (int h = 0; h < st.H(); ++h)
          csv << ',' << fmt(st.c[static_cast<size_t>(k)](j, h));
        csv << "\n";
      }
    write_file("attention.csv", csv.str());
    std::cerr << "wrote attention.csv\n";
  }
  return 0;
}

int cmd_loss_report(const std::string& model_path, const std::string& context_cache) {
  const ModelBundle model = model_from_json(read_file(model_path));
  LossContext ctx;
  if (!context_cache.empty() && std::filesystem::exists(context_cache)) {
    ctx = context_from_json(read_file(context_cache));
  } else {
    ctx = build_context(model.dictionary, model.dictionary.cfg.m, model.tau);
    if (!context_cache.empty()) write_file(context_cache, to_json(ctx));
  }
  const AttentionState st = attention_state(model.params, model.dictionary, ctx.zbar);
  const Delta dl = delta(ctx, a_hat(model.params, st));
  const double gap = loss_gap(ctx, dl);
  const Matrix gw = grad_w(ctx, st, dl);
  const std::vector<Matrix> gq = grad_q(ctx, st, dl, model.params);
  double gq2 = 0.0;
  for (const Matrix& g : gq) gq2 += g.squaredNorm();
  std::cout << "loss,lstar,delta,grad_w_norm,grad_q_norm\n";
  std::cout << fmt(gap + ctx.lstar) << ',' << fmt(ctx.lstar) << ',' << fmt(gap)
            << ',' << fmt(std::sqrt(gw.squaredNorm())) << ','
            << fmt(std::sqrt(gq2)) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"one-layer multi-head softmax attention workbench"};
  app.require_subcommand(1);

  std::string config, out, lr_mode, variant;
  std::string model_path, prompt_path, context_cache;
  bool dump_attention = false;

  auto* train = app.add_subcommand("train", "train and emit the trajectory");
  train->add_option("--config", config, "experiment config file")->required();
  train->add_option("--lr-mode", lr_mode, "manual | auto-theory");
  train->add_option("--variant", variant, "simplified | tight");
  train->add_option("--out", out, "output directory");

  auto* infer = app.add_subcommand("infer", "evaluate a model on one prompt");
  infer->add_option("--model", model_path, "model bundle JSON")->required();
  infer->add_option("--prompt", prompt_path, "prompt JSON")->required();
  infer->add_option("--out", out, "write the result here instead of stdout");
  infer->add_flag("--dump-attention", dump_attention,
                  "write per-token attention matrices to attention.csv");

  auto* sweep_n = app.add_subcommand("sweep-n", "ridge mismatch vs prompt length");
  sweep_n->add_option("--config", config, "experiment config file")->required();
  sweep_n->add_option("--out", out, "output directory");

  auto* sweep_h = app.add_subcommand("sweep-h", "final loss gap vs head count");
  sweep_h->add_option("--config", config, "experiment config file")->required();
  sweep_h->add_option("--out", out, "output directory");

  auto* verify = app.add_subcommand("verify", "run the invariant suite");
  verify->add_option("--config", config, "experiment config file")->required();
  verify->add_option("--out", out, "output directory");

  auto* loss_report = app.add_subcommand("loss-report", "loss and gradient norms as CSV");
  loss_report->add_option("--model", model_path, "model bundle JSON")->required();
  loss_report->add_option("--context-cache", context_cache,
                          "context cache file (read if present, else written)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // command-line misuse is a configuration error
  }

  try {
    if (train->parsed()) return cmd_train(config, lr_mode, variant, out);
    if (infer->parsed()) return cmd_infer(model_path, prompt_path, out, dump_attention);
    if (sweep_n->parsed()) return cmd_sweep(config, icl::ExperimentKind::SweepN, out);
    if (sweep_h->parsed()) return cmd_sweep(config, icl::ExperimentKind::SweepH, out);
    if (verify->parsed()) return cmd_verify(config, out);
    if (loss_report->parsed()) return cmd_loss_report(model_path, context_cache);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return icl::exit_code_for(e);
  }
  return 0;
}
