#include "icl/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "icl/errors.hpp"

namespace icl {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

struct KeyValue {
  std::string value;
  int line = 0;
};

using Section = std::map<std::string, KeyValue>;

[[noreturn]] void fail(int line, const std::string& what) {
  throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

double parse_double(const KeyValue& kv, const std::string& key) {
  const std::string& s = kv.value;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    fail(kv.line, "'" + key + "' expects a number, got '" + s + "'");
  return v;
}

long parse_long(const KeyValue& kv, const std::string& key) {
  const std::string& s = kv.value;
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    fail(kv.line, "'" + key + "' expects an integer, got '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const KeyValue& kv, const std::string& key) {
  const std::string& s = kv.value;
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    fail(kv.line, "'" + key + "' expects a nonnegative integer, got '" + s + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
  return out;
}

// Pulls a key out of the section, so leftovers can be reported as unknown.
template <typename F>
void take(Section& sec, const std::string& key, F&& use) {
  auto it = sec.find(key);
  if (it == sec.end()) return;
  use(it->second);
  sec.erase(it);
}

void reject_leftovers(const Section& sec, const std::string& name) {
  if (sec.empty()) return;
  const auto& [key, kv] = *sec.begin();
  fail(kv.line, "unknown key '" + key + "' in [" + name + "]");
}

}  // namespace

std::vector<int> ExperimentSpec::resolved_n_grid() const {
  if (!n_grid.empty()) return n_grid;
  const int m = problem.m;
  std::vector<int> grid = {m / 2, 3 * m / 4, m, 5 * m / 4, 3 * m / 2, 2 * m};
  grid.erase(std::remove_if(grid.begin(), grid.end(),
                            [&](int n) { return n < 1 || n >= problem.K; }),
             grid.end());
  return grid;
}

std::vector<int> ExperimentSpec::resolved_h_grid() const {
  if (!h_grid.empty()) return h_grid;
  const int N = problem.N;
  std::vector<int> grid = {1, std::max(1, N / 2), N, 2 * N};
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

std::vector<std::uint64_t> ExperimentSpec::resolved_seeds() const {
  if (!seeds.empty()) return seeds;
  return {1, 2, 3, 4, 5};
}

void ExperimentSpec::validate() const {
  problem.validate();
  trainer.validate();
  inference.validate();
  if (model.H < 0) throw ConfigError("H must be >= 0 (0 means H = N)");
  if (!(model.beta > 0)) throw ConfigError("beta must be > 0");
  if (lambda_dist.kind == LambdaDist::Kind::ShiftedGaussian &&
      lambda_dist.mean.size() != problem.m)
    throw ConfigError("shifted-gaussian mean length must equal m");
  if (out_dir.empty()) throw ConfigError("out_dir must be nonempty");
  for (int n : n_grid)
    if (n < 1 || n >= problem.K)
      throw ConfigError("n_grid entries must satisfy 1 <= N < K");
  for (int h : h_grid)
    if (h < 1) throw ConfigError("h_grid entries must be >= 1");
}

bool ExperimentSpec::operator==(const ExperimentSpec& o) const {
  auto veq = [](const Vector& a, const Vector& b) {
    return a.size() == b.size() && (a.array() == b.array()).all();
  };
  return problem.K == o.problem.K && problem.d == o.problem.d &&
         problem.N == o.problem.N && problem.m == o.problem.m &&
         problem.tau == o.problem.tau && problem.seed == o.problem.seed &&
         lambda_dist.kind == o.lambda_dist.kind &&
         veq(lambda_dist.mean, o.lambda_dist.mean) &&
         lambda_dist.stdev == o.lambda_dist.stdev && model.H == o.model.H &&
         model.beta == o.model.beta && trainer.eta_q == o.trainer.eta_q &&
         trainer.eta_w == o.trainer.eta_w && trainer.gamma == o.trainer.gamma &&
         trainer.T == o.trainer.T && trainer.lr_mode == o.trainer.lr_mode &&
         trainer.variant == o.trainer.variant &&
         trainer.log_every == o.trainer.log_every &&
         inference.B == o.inference.B && inference.eps == o.inference.eps &&
         inference.delta_prob == o.inference.delta_prob &&
         experiment == o.experiment && out_dir == o.out_dir &&
         n_grid == o.n_grid && h_grid == o.h_grid && seeds == o.seeds;
}

std::string experiment_kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::TrainCurve: return "train-curve";
    case ExperimentKind::SweepN: return "sweep-n";
    case ExperimentKind::SweepH: return "sweep-h";
    case ExperimentKind::Verify: return "verify";
  }
  return "verify";
}

ExperimentSpec parse_spec(const std::string& text) {
  std::map<std::string, Section> sections;
  std::string current;
  int line_no = 0;
  std::istringstream in(text);
  std::string raw;
  static const std::set<std::string> known_sections = {
      "problem", "lambda", "model", "trainer", "inference", "experiment"};
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (size_t hash = line.find('#'); hash != std::string::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "unterminated section header");
      current = trim(line.substr(1, line.size() - 2));
      if (!known_sections.count(current))
        fail(line_no, "unknown section [" + current + "]");
      sections[current];
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
    if (current.empty()) fail(line_no, "key outside of any [section]");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(line_no, "empty key");
    auto [it, inserted] = sections[current].emplace(key, KeyValue{value, line_no});
    if (!inserted) fail(line_no, "duplicate key '" + key + "'");
  }

  ExperimentSpec spec;
  spec.trainer.T = 1000;

  if (auto s = sections.find("problem"); s != sections.end()) {
    auto& sec = s->second;
    take(sec, "K", [&](const KeyValue& kv) { spec.problem.K = int(parse_long(kv, "K")); });
    take(sec, "d", [&](const KeyValue& kv) { spec.problem.d = int(parse_long(kv, "d")); });
    take(sec, "N", [&](const KeyValue& kv) { spec.problem.N = int(parse_long(kv, "N")); });
    take(sec, "m", [&](const KeyValue& kv) { spec.problem.m = int(parse_long(kv, "m")); });
    take(sec, "tau", [&](const KeyValue& kv) { spec.problem.tau = parse_double(kv, "tau"); });
    take(sec, "seed", [&](const KeyValue& kv) { spec.problem.seed = parse_u64(kv, "seed"); });
    reject_leftovers(sec, "problem");
  }
  if (auto s = sections.find("lambda"); s != sections.end()) {
    auto& sec = s->second;
    take(sec, "kind", [&](const KeyValue& kv) {
      if (kv.value == "standard-gaussian")
        spec.lambda_dist.kind = LambdaDist::Kind::StandardGaussian;
      else if (kv.value == "rademacher")
        spec.lambda_dist.kind = LambdaDist::Kind::Rademacher;
      else if (kv.value == "shifted-gaussian")
        spec.lambda_dist.kind = LambdaDist::Kind::ShiftedGaussian;
      else
        fail(kv.line, "unknown lambda kind '" + kv.value + "'");
    });
    take(sec, "mean", [&](const KeyValue& kv) {
      auto parts = split_csv(kv.value);
      spec.lambda_dist.mean.resize(static_cast<int>(parts.size()));
      for (size_t i = 0; i < parts.size(); ++i) {
        double v = 0.0;
        auto [ptr, ec] =
            std::from_chars(parts[i].data(), parts[i].data() + parts[i].size(), v);
        if (ec != std::errc{} || ptr != parts[i].data() + parts[i].size())
          fail(kv.line, "'mean' expects a comma list of numbers");
        spec.lambda_dist.mean[static_cast<int>(i)] = v;
      }
    });
    take(sec, "stdev", [&](const KeyValue& kv) {
      spec.lambda_dist.stdev = parse_double(kv, "stdev");
    });
    reject_leftovers(sec, "lambda");
  }
  if (auto s = sections.find("model"); s != sections.end()) {
    auto& sec = s->second;
    take(sec, "H", [&](const KeyValue& kv) { spec.model.H = int(parse_long(kv, "H")); });
    take(sec, "beta", [&](const KeyValue& kv) { spec.model.beta = parse_double(kv, "beta"); });
    reject_leftovers(sec, "model");
  }
  if (auto s = sections.find("trainer"); s != sections.end()) {
    auto& sec = s->second;
    take(sec, "eta_q", [&](const KeyValue& kv) { spec.trainer.eta_q = parse_double(kv, "eta_q"); });
    take(sec, "eta_w", [&](const KeyValue& kv) { spec.trainer.eta_w = parse_double(kv, "eta_w"); });
    take(sec, "gamma", [&](const KeyValue& kv) { spec.trainer.gamma = parse_double(kv, "gamma"); });
    take(sec, "T", [&](const KeyValue& kv) { spec.trainer.T = parse_long(kv, "T"); });
    take(sec, "log_every", [&](const KeyValue& kv) {
      spec.trainer.log_every = parse_long(kv, "log_every");
    });
    take(sec, "lr_mode", [&](const KeyValue& kv) {
      if (kv.value == "manual")
        spec.trainer.lr_mode = LrMode::Manual;
      else if (kv.value == "auto-theory")
        spec.trainer.lr_mode = LrMode::AutoTheory;
      else
        fail(kv.line, "lr_mode must be 'manual' or 'auto-theory'");
    });
    take(sec, "variant", [&](const KeyValue& kv) {
      if (kv.value == "simplified")
        spec.trainer.variant = SmoothnessVariant::Simplified;
      else if (kv.value == "tight")
        spec.trainer.variant = SmoothnessVariant::Tight;
      else
        fail(kv.line, "variant must be 'simplified' or 'tight'");
    });
    reject_leftovers(sec, "trainer");
  }
  if (auto s = sections.find("inference"); s != sections.end()) {
    auto& sec = s->second;
    take(sec, "B", [&](const KeyValue& kv) { spec.inference.B = parse_double(kv, "B"); });
    take(sec, "eps", [&](const KeyValue& kv) { spec.inference.eps = parse_double(kv, "eps"); });
    take(sec, "delta", [&](const KeyValue& kv) {
      spec.inference.delta_prob = parse_double(kv, "delta");
    });
    reject_leftovers(sec, "inference");
  }
  if (auto s = sections.find("experiment"); s != sections.end()) {
    auto& sec = s->second;
    take(sec, "kind", [&](const KeyValue& kv) {
      if (kv.value == "train-curve")
        spec.experiment = ExperimentKind::TrainCurve;
      else if (kv.value == "sweep-n")
        spec.experiment = ExperimentKind::SweepN;
      else if (kv.value == "sweep-h")
        spec.experiment = ExperimentKind::SweepH;
      else if (kv.value == "verify")
        spec.experiment = ExperimentKind::Verify;
      else
        fail(kv.line, "unknown experiment kind '" + kv.value + "'");
    });
    take(sec, "out_dir", [&](const KeyValue& kv) { spec.out_dir = kv.value; });
    auto parse_int_list = [&](const KeyValue& kv, std::vector<int>& out,
                              const char* key) {
      out.clear();
      for (const auto& part : split_csv(kv.value)) {
        int v = 0;
        auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (ec != std::errc{} || ptr != part.data() + part.size())
          fail(kv.line, std::string("'") + key + "' expects a comma list of integers");
        out.push_back(v);
      }
    };
    take(sec, "n_grid",
         [&](const KeyValue& kv) { parse_int_list(kv, spec.n_grid, "n_grid"); });
    take(sec, "h_grid",
         [&](const KeyValue& kv) { parse_int_list(kv, spec.h_grid, "h_grid"); });
    take(sec, "seeds", [&](const KeyValue& kv) {
      spec.seeds.clear();
      for (const auto& part : split_csv(kv.value)) {
        std::uint64_t v = 0;
        auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (ec != std::errc{} || ptr != part.data() + part.size())
          fail(kv.line, "'seeds' expects a comma list of nonnegative integers");
        spec.seeds.push_back(v);
      }
    });
    reject_leftovers(sec, "experiment");
  }

  spec.validate();
  return spec;
}

std::string serialize_spec(const ExperimentSpec& spec) {
  std::ostringstream out;
  out << "[problem]\n";
  out << "K = " << spec.problem.K << "\n";
  out << "d = " << spec.problem.d << "\n";
  out << "N = " << spec.problem.N << "\n";
  out << "m = " << spec.problem.m << "\n";
  out << "tau = " << fmt_double(spec.problem.tau) << "\n";
  out << "seed = " << spec.problem.seed << "\n";
  out << "\n[lambda]\n";
  switch (spec.lambda_dist.kind) {
    case LambdaDist::Kind::StandardGaussian:
      out << "kind = standard-gaussian\n";
      break;
    case LambdaDist::Kind::Rademacher:
      out << "kind = rademacher\n";
      break;
    case LambdaDist::Kind::ShiftedGaussian: {
      out << "kind = shifted-gaussian\n";
      out << "mean = ";
      for (int i = 0; i < spec.lambda_dist.mean.size(); ++i) {
        if (i) out << ",";
        out << fmt_double(spec.lambda_dist.mean[i]);
      }
      out << "\n";
      out << "stdev = " << fmt_double(spec.lambda_dist.stdev) << "\n";
      break;
    }
  }
  out << "\n[model]\n";
  out << "H = " << spec.model.H << "\n";
  out << "beta = " << fmt_double(spec.model.beta) << "\n";
  out << "\n[trainer]\n";
  out << "lr_mode = "
      << (spec.trainer.lr_mode == LrMode::AutoTheory ? "auto-theory" : "manual")
      << "\n";
  out << "variant = "
      << (spec.trainer.variant == SmoothnessVariant::Tight ? "tight" : "simplified")
      << "\n";
  if (spec.trainer.eta_q != 0) out << "eta_q = " << fmt_double(spec.trainer.eta_q) << "\n";
  if (spec.trainer.eta_w != 0) out << "eta_w = " << fmt_double(spec.trainer.eta_w) << "\n";
  if (spec.trainer.gamma != 0) out << "gamma = " << fmt_double(spec.trainer.gamma) << "\n";
  out << "T = " << spec.trainer.T << "\n";
  out << "log_every = " << spec.trainer.log_every << "\n";
  out << "\n[inference]\n";
  out << "B = " << fmt_double(spec.inference.B) << "\n";
  out << "eps = " << fmt_double(spec.inference.eps) << "\n";
  out << "delta = " << fmt_double(spec.inference.delta_prob) << "\n";
  out << "\n[experiment]\n";
  out << "kind = " << experiment_kind_name(spec.experiment) << "\n";
  out << "out_dir = " << spec.out_dir << "\n";
  auto emit_list = [&](const char* key, const auto& xs) {
    if (xs.empty()) return;
    out << key << " = ";
    for (size_t i = 0; i < xs.size(); ++i) {
      if (i) out << ",";
      out << xs[i];
    }
    out << "\n";
  };
  emit_list("n_grid", spec.n_grid);
  emit_list("h_grid", spec.h_grid);
  emit_list("seeds", spec.seeds);
  return out.str();
}

}  // namespace icl
