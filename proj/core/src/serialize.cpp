#include "icl/serialize.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "icl/errors.hpp"

namespace icl {

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& M) {
  json rows = json::array();
  for (int i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Matrix matrix_from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("expected a nested array for a matrix");
  const int rows = static_cast<int>(j.size());
  if (rows == 0) return Matrix(0, 0);
  const int cols = static_cast<int>(j.at(0).size());
  Matrix M(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const auto& row = j.at(static_cast<size_t>(i));
    if (static_cast<int>(row.size()) != cols)
      throw ConfigError("ragged matrix rows in JSON document");
    for (int c = 0; c < cols; ++c) M(i, c) = row.at(static_cast<size_t>(c)).get<double>();
  }
  return M;
}

Vector vector_from_json(const json& j) {
  Vector v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) v[i] = j.at(static_cast<size_t>(i)).get<double>();
  return v;
}

json header(std::string_view kind) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = std::string(kind);
  return j;
}

json require(const json& j, std::string_view kind) {
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != kSchemaVersion)
    throw ConfigError("unsupported schema_version");
  if (!j.contains("kind") || j["kind"].get<std::string>() != kind)
    throw ConfigError("expected a document of kind '" + std::string(kind) + "'");
  return j;
}

json parse(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("malformed JSON document");
  return j;
}

json dictionary_to_json_obj(const Dictionary& dict) {
  json j = header("dictionary");
  j["config"] = {{"K", dict.cfg.K}, {"d", dict.cfg.d},   {"N", dict.cfg.N},
                 {"m", dict.cfg.m}, {"tau", dict.cfg.tau}, {"seed", dict.cfg.seed}};
  j["regen_count"] = dict.regen_count;
  j["tokens"] = matrix_to_json(dict.tokens);
  j["zhat"] = matrix_to_json(dict.zhat);
  return j;
}

Dictionary dictionary_from_json_obj(const json& j) {
  require(j, "dictionary");
  Dictionary dict;
  const auto& c = j.at("config");
  dict.cfg.K = c.at("K").get<int>();
  dict.cfg.d = c.at("d").get<int>();
  dict.cfg.N = c.at("N").get<int>();
  dict.cfg.m = c.at("m").get<int>();
  dict.cfg.tau = c.at("tau").get<double>();
  dict.cfg.seed = c.at("seed").get<std::uint64_t>();
  dict.regen_count = j.at("regen_count").get<int>();
  dict.tokens = matrix_from_json(j.at("tokens"));
  dict.zhat = matrix_from_json(j.at("zhat"));
  if (dict.tokens.rows() != dict.cfg.d || dict.tokens.cols() != dict.cfg.K ||
      dict.zhat.rows() != dict.cfg.m || dict.zhat.cols() != dict.cfg.K)
    throw ConfigError("dictionary document has inconsistent shapes");
  return dict;
}

json params_to_json_obj(const Params& p) {
  json j = header("params");
  j["H"] = p.H();
  j["d"] = p.d();
  j["K"] = p.K();
  json heads = json::array();
  for (const Matrix& q : p.q) heads.push_back(matrix_to_json(q));
  j["q"] = std::move(heads);
  j["w"] = matrix_to_json(p.w);
  return j;
}

Params params_from_json_obj(const json& j) {
  require(j, "params");
  Params p;
  const int H = j.at("H").get<int>();
  p.q.reserve(static_cast<size_t>(H));
  for (const auto& q : j.at("q")) p.q.push_back(matrix_from_json(q));
  p.w = matrix_from_json(j.at("w"));
  if (static_cast<int>(p.q.size()) != H || p.w.rows() != H)
    throw ConfigError("params document has inconsistent head count");
  return p;
}

}  // namespace

std::string to_json(const Dictionary& dict) {
  return dictionary_to_json_obj(dict).dump(2) + "\n";
}

std::string to_json(const PromptInstance& prompt) {
  json j = header("prompt");
  j["N"] = prompt.N;
  j["lambda"] = vector_to_json(prompt.lambda);
  j["noise"] = matrix_to_json(prompt.noise);
  j["labels_all"] = vector_to_json(prompt.labels_all);
  j["labels_prompt"] = vector_to_json(prompt.labels_prompt());
  return j.dump(2) + "\n";
}

std::string to_json(const Params& p) { return params_to_json_obj(p).dump(2) + "\n"; }

std::string to_json(const LossContext& ctx) {
  json j = header("loss_context");
  j["m"] = ctx.m;
  j["N"] = ctx.N;
  j["K"] = ctx.K;
  j["tau"] = ctx.tau;
  j["tokens"] = matrix_to_json(ctx.tokens);
  j["zhat"] = matrix_to_json(ctx.zhat);
  j["zbar"] = matrix_to_json(ctx.zbar);
  j["a"] = matrix_to_json(ctx.a);
  j["lstar"] = ctx.lstar;
  j["fbar_max"] = ctx.fbar_max;
  j["zbar_norm"] = ctx.zbar_norm;
  j["ztz_hat_norm"] = ctx.ztz_hat_norm;
  j["a_norm"] = ctx.a_norm;
  j["z_norm"] = ctx.z_norm;
  return j.dump(2) + "\n";
}

std::string to_json(const InferenceResult& r) {
  json j = header("inference_result");
  j["y_hat"] = vector_to_json(r.y_hat);
  j["y_star"] = vector_to_json(r.y_star);
  j["y_best"] = vector_to_json(r.y_best);
  j["lambda_hat"] = vector_to_json(r.lambda_hat);
  j["lambda_tau"] = vector_to_json(r.lambda_tau);
  j["gap_star"] = r.gap_star;
  j["gap_best"] = r.gap_best;
  return j.dump(2) + "\n";
}

std::string to_json(const TrainReport& rep) {
  json j = header("train_report");
  j["zeta0"] = rep.zeta0;
  j["gamma"] = rep.gamma;
  j["eta_q"] = rep.eta_q;
  j["eta_w"] = rep.eta_w;
  j["smoothness"] = rep.smoothness;
  j["lstar"] = rep.lstar;
  j["delta0"] = rep.delta0;
  j["alpha_bound"] = rep.alpha_bound;
  j["q_drift_bound"] = rep.q_drift_bound;
  j["certified"] = rep.certified;
  j["lr_mode"] = rep.lr_mode == LrMode::AutoTheory ? "auto-theory" : "manual";
  j["variant"] =
      rep.variant == SmoothnessVariant::Tight ? "tight" : "simplified";
  j["steps"] = rep.steps;
  j["losses"] = rep.losses;
  j["deltas"] = rep.deltas;
  j["rate_bound"] = rep.rate_bound;
  j["zeta_trace"] = rep.zeta_trace;
  j["grad_q_norm"] = rep.grad_q_norm;
  j["grad_w_norm"] = rep.grad_w_norm;
  j["grad_q_head_max"] = rep.grad_q_head_max;
  j["grad_w_head_max"] = rep.grad_w_head_max;
  j["pl_lhs"] = rep.pl_lhs;
  j["pl_rhs"] = rep.pl_rhs;
  j["alpha_norm"] = rep.alpha_norm;
  j["w_inf"] = rep.w_inf;
  j["q_drift"] = rep.q_drift;
  j["final_params"] = params_to_json_obj(rep.final_params);
  return j.dump(2) + "\n";
}

std::string to_json(const ModelBundle& bundle) {
  json j = header("model");
  j["tau"] = bundle.tau;
  j["params"] = params_to_json_obj(bundle.params);
  j["dictionary"] = dictionary_to_json_obj(bundle.dictionary);
  return j.dump(2) + "\n";
}

Dictionary dictionary_from_json(const std::string& text) {
  return dictionary_from_json_obj(parse(text));
}

PromptInstance prompt_from_json(const std::string& text) {
  json j = require(parse(text), "prompt");
  PromptInstance p;
  p.N = j.at("N").get<int>();
  p.lambda = vector_from_json(j.at("lambda"));
  p.noise = matrix_from_json(j.at("noise"));
  p.labels_all = vector_from_json(j.at("labels_all"));
  return p;
}

Params params_from_json(const std::string& text) {
  return params_from_json_obj(parse(text));
}

LossContext context_from_json(const std::string& text) {
  json j = require(parse(text), "loss_context");
  LossContext ctx;
  ctx.m = j.at("m").get<int>();
  ctx.N = j.at("N").get<int>();
  ctx.K = j.at("K").get<int>();
  ctx.tau = j.at("tau").get<double>();
  ctx.tokens = matrix_from_json(j.at("tokens"));
  ctx.zhat = matrix_from_json(j.at("zhat"));
  ctx.zbar = matrix_from_json(j.at("zbar"));
  ctx.a = matrix_from_json(j.at("a"));
  ctx.z = ctx.zhat.leftCols(ctx.N);
  ctx.zq = ctx.zhat.rightCols(ctx.K - ctx.N);
  ctx.gram = ctx.z.transpose() * ctx.z +
             (double(ctx.m) * ctx.tau) * Matrix::Identity(ctx.N, ctx.N);
  ctx.lstar = j.at("lstar").get<double>();
  ctx.fbar_max = j.at("fbar_max").get<double>();
  ctx.zbar_norm = j.at("zbar_norm").get<double>();
  ctx.ztz_hat_norm = j.at("ztz_hat_norm").get<double>();
  ctx.a_norm = j.at("a_norm").get<double>();
  ctx.z_norm = j.at("z_norm").get<double>();
  return ctx;
}

ModelBundle model_from_json(const std::string& text) {
  json j = require(parse(text), "model");
  ModelBundle b;
  b.tau = j.at("tau").get<double>();
  b.params = params_from_json_obj(j.at("params"));
  b.dictionary = dictionary_from_json_obj(j.at("dictionary"));
  return b;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("could not open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("could not write '" + path + "'");
  out << contents;
}

}  // namespace icl
