#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include "icl/errors.hpp"
#include "icl/experiment.hpp"
#include "icl/serialize.hpp"

using namespace icl;
namespace fs = std::filesystem;

namespace {

ExperimentSpec random_spec(Rng& rng) {
  ExperimentSpec spec;
  spec.problem.K = 3 + int(rng.next_u64() % 40);
  spec.problem.N = 1 + int(rng.next_u64() % (spec.problem.K - 1));
  spec.problem.d = 1 + int(rng.next_u64() % 8);
  spec.problem.m = 1 + int(rng.next_u64() % 8);
  spec.problem.tau = 0.001 + rng.uniform();
  spec.problem.seed = rng.next_u64() % 100000;
  const int kind = int(rng.next_u64() % 3);
  if (kind == 1)
    spec.lambda_dist = LambdaDist::rademacher();
  else if (kind == 2) {
    Vector mean(spec.problem.m);
    for (int i = 0; i < mean.size(); ++i) mean[i] = rng.normal();
    spec.lambda_dist = LambdaDist::shifted_gaussian(mean, rng.uniform() + 0.1);
  }
  spec.model.H = int(rng.next_u64() % 5);  // 0 means N
  spec.model.beta = 0.1 + rng.uniform();
  if (rng.next_u64() % 2) {
    spec.trainer.lr_mode = LrMode::Manual;
    spec.trainer.eta_q = 1e-4 + rng.uniform();
    spec.trainer.eta_w = 1e-4 + rng.uniform();
  }
  spec.trainer.variant = rng.next_u64() % 2 ? SmoothnessVariant::Simplified
                                            : SmoothnessVariant::Tight;
  spec.trainer.T = long(rng.next_u64() % 10000);
  spec.trainer.log_every = long(rng.next_u64() % 100);
  spec.inference.B = 0.5 + rng.uniform();
  spec.inference.eps = 1e-6 + rng.uniform();
  spec.inference.delta_prob = 0.01 + 0.9 * rng.uniform();
  spec.experiment = static_cast<ExperimentKind>(rng.next_u64() % 4);
  spec.out_dir = "out" + std::to_string(rng.next_u64() % 1000);
  if (rng.next_u64() % 2) {
    spec.n_grid.clear();
    for (int i = 0; i < 3; ++i)
      spec.n_grid.push_back(1 + int(rng.next_u64() % (spec.problem.K - 1)));
  }
  if (rng.next_u64() % 2) spec.h_grid = {1, 2, 4};
  if (rng.next_u64() % 2) spec.seeds = {rng.next_u64() % 100, rng.next_u64() % 100};
  return spec;
}

}  // namespace

TEST_CASE("minimal config gets documented defaults") {
  const ExperimentSpec spec = parse_spec("[experiment]\nkind = verify\n");
  CHECK(spec.problem.K == 60);
  CHECK(spec.problem.N == 20);
  CHECK(spec.problem.tau == 0.01);
  CHECK(spec.resolved_H() == 20);
  CHECK(spec.trainer.lr_mode == LrMode::AutoTheory);
  CHECK(spec.trainer.variant == SmoothnessVariant::Tight);
  CHECK(spec.inference.B == 3.0);
  CHECK(spec.out_dir == "out");
  CHECK(spec.resolved_seeds() == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
}

TEST_CASE("validation and parse errors") {
  CHECK_THROWS_WITH_AS(parse_spec("[problem]\nN = 0\n"),
                       "N must satisfy 1 <= N < K", ConfigError);
  CHECK_THROWS_AS(parse_spec("[problem]\nbogus = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_spec("[nosuch]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_spec("[problem]\nK 12\n"), ConfigError);
  CHECK_THROWS_AS(parse_spec("K = 12\n"), ConfigError);  // key outside section
  CHECK_THROWS_AS(parse_spec("[problem]\nK = 12\nK = 13\n"), ConfigError);
  try {
    parse_spec("[problem]\n# fine\nwrong_key = 1\n");
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    CHECK(std::string(e.what()).find("wrong_key") != std::string::npos);
  }
}

TEST_CASE("comments and whitespace are tolerated") {
  const ExperimentSpec spec = parse_spec(
      "# leading comment\n"
      "[problem]\n"
      "  K = 12   # inline comment\n"
      "\tN = 3\n"
      "[experiment]\n"
      "kind = sweep-n\n");
  CHECK(spec.problem.K == 12);
  CHECK(spec.problem.N == 3);
  CHECK(spec.experiment == ExperimentKind::SweepN);
}

TEST_CASE("serialize/parse round trip on random specs") {
  Rng rng = derive_rng(2024, "test.config");
  for (int i = 0; i < 1000; ++i) {
    const ExperimentSpec spec = random_spec(rng);
    const ExperimentSpec back = parse_spec(serialize_spec(spec));
    CHECK(back == spec);
  }
}

TEST_CASE("shipped configs parse and round trip") {
  for (const char* name : {"/fig2.cfg", "/fig3.cfg", "/fig4.cfg", "/fixture.cfg"}) {
    const std::string text = read_file(std::string(ICL_CONFIG_DIR) + name);
    const ExperimentSpec spec = parse_spec(text);
    CHECK(parse_spec(serialize_spec(spec)) == spec);
  }
}

TEST_CASE("verify experiment writes a complete manifest") {
  ExperimentSpec spec = parse_spec(read_file(std::string(ICL_CONFIG_DIR) + "/fixture.cfg"));
  const fs::path dir = fs::temp_directory_path() / "icl_test_verify";
  fs::remove_all(dir);
  spec.out_dir = dir.string();
  const RunManifest manifest = run(spec);
  CHECK(manifest.ok);
  CHECK(manifest.experiment == "verify");

  std::set<std::string> on_disk;
  for (const auto& entry : fs::directory_iterator(dir))
    on_disk.insert(entry.path().filename().string());
  CHECK(on_disk.count("manifest.json") == 1);
  on_disk.erase("manifest.json");

  std::set<std::string> listed;
  for (const auto& e : manifest.files) {
    listed.insert(e.path);
    std::ostringstream expect;
    expect << "0x" << std::hex << fnv1a64(read_file((dir / e.path).string()));
    CHECK(e.checksum == expect.str());
  }
  CHECK(listed == on_disk);
  fs::remove_all(dir);
}

TEST_CASE("sweep outputs are byte-identical across runs") {
  ExperimentSpec spec = parse_spec(read_file(std::string(ICL_CONFIG_DIR) + "/fig3.cfg"));
  spec.seeds = {1, 2};
  spec.n_grid = {10, 20, 30};
  const fs::path a = fs::temp_directory_path() / "icl_test_sweep_a";
  const fs::path b = fs::temp_directory_path() / "icl_test_sweep_b";
  fs::remove_all(a);
  fs::remove_all(b);
  spec.out_dir = a.string();
  REQUIRE(run(spec).ok);
  spec.out_dir = b.string();
  REQUIRE(run(spec).ok);
  CHECK(read_file((a / "gap_vs_n.csv").string()) ==
        read_file((b / "gap_vs_n.csv").string()));
  CHECK(read_file((a / "gap_vs_n.svg").string()) ==
        read_file((b / "gap_vs_n.svg").string()));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("train-curve experiment emits the full artifact set") {
  ExperimentSpec spec;
  spec.problem = {8, 4, 4, 2, 0.1, 12};
  spec.model.H = 6;
  spec.trainer.T = 300;
  spec.experiment = ExperimentKind::TrainCurve;
  const fs::path dir = fs::temp_directory_path() / "icl_test_curve";
  fs::remove_all(dir);
  spec.out_dir = dir.string();
  const RunManifest manifest = run(spec);
  CHECK(manifest.ok);
  for (const char* name : {"trajectory.csv", "gap_curves.csv", "report.json",
                           "model.json", "loss_curve.svg", "gap_curves.svg"}) {
    CHECK(fs::exists(dir / name));
  }
  const std::string csv = read_file((dir / "trajectory.csv").string());
  CHECK(csv.rfind("t,loss,delta,rate_bound,zeta_t,grad_q_norm,grad_w_norm,pl_lhs,pl_rhs\n",
                  0) == 0);
  // the emitted model bundle can be reloaded and evaluated
  const ModelBundle bundle = model_from_json(read_file((dir / "model.json").string()));
  CHECK(bundle.params.H() == 6);
  CHECK(bundle.dictionary.cfg.K == 8);
  fs::remove_all(dir);
}

TEST_CASE("sweep results do not depend on the thread cap") {
  ExperimentSpec spec = parse_spec(read_file(std::string(ICL_CONFIG_DIR) + "/fig3.cfg"));
  spec.seeds = {1, 2, 3};
  spec.n_grid = {10, 20, 30};
  const fs::path one = fs::temp_directory_path() / "icl_threads_1";
  const fs::path two = fs::temp_directory_path() / "icl_threads_2";
  fs::remove_all(one);
  fs::remove_all(two);
  setenv("ICL_LAB_THREADS", "1", 1);
  spec.out_dir = one.string();
  REQUIRE(run(spec).ok);
  setenv("ICL_LAB_THREADS", "2", 1);
  spec.out_dir = two.string();
  REQUIRE(run(spec).ok);
  unsetenv("ICL_LAB_THREADS");
  CHECK(read_file((one / "gap_vs_n.csv").string()) ==
        read_file((two / "gap_vs_n.csv").string()));
  fs::remove_all(one);
  fs::remove_all(two);
}

TEST_CASE("train-curve at desk scale descends with the ood gap on top") {
  ExperimentSpec spec = parse_spec(read_file(std::string(ICL_CONFIG_DIR) + "/fig2.cfg"));
  const fs::path dir = fs::temp_directory_path() / "icl_test_fig2";
  fs::remove_all(dir);
  spec.out_dir = dir.string();
  const RunManifest manifest = run(spec);
  CHECK(manifest.ok);

  // loss trajectory is nonincreasing (up to the numeric floor slack)
  const std::string traj = read_file((dir / "trajectory.csv").string());
  std::istringstream rows(traj);
  std::string line;
  std::getline(rows, line);  // header
  std::vector<double> deltas;
  while (std::getline(rows, line)) {
    std::istringstream cells(line);
    std::string cell;
    std::getline(cells, cell, ',');  // t
    std::getline(cells, cell, ',');  // loss
    std::getline(cells, cell, ',');  // delta
    deltas.push_back(std::stod(cell));
  }
  REQUIRE(deltas.size() > 10);
  for (size_t i = 1; i < deltas.size(); ++i)
    CHECK(deltas[i] <= deltas[i - 1] + 1e-12 * deltas.front());
  CHECK(deltas.back() < 0.5 * deltas.front());

  // ood gap stays above the in-domain gap and both descend
  const std::string gaps = read_file((dir / "gap_curves.csv").string());
  std::istringstream grows(gaps);
  std::getline(grows, line);  // header
  std::vector<double> gin, good;
  while (std::getline(grows, line)) {
    std::istringstream cells(line);
    std::string cell;
    std::getline(cells, cell, ',');
    std::getline(cells, cell, ',');
    gin.push_back(std::stod(cell));
    std::getline(cells, cell, ',');
    good.push_back(std::stod(cell));
  }
  REQUIRE(gin.size() == good.size());
  REQUIRE(!gin.empty());
  for (size_t i = 0; i < gin.size(); ++i) CHECK(good[i] >= gin[i]);
  CHECK(gin.back() < 0.5 * gin.front());
  CHECK(good.back() < 0.5 * good.front());
  fs::remove_all(dir);
}

TEST_CASE("train-curve with T = 0 trains to the inference target") {
  ExperimentSpec spec;
  spec.problem = {8, 4, 4, 2, 0.1, 12};
  spec.model.H = 6;
  spec.trainer.T = 0;  // derive the budget from (B, eps, delta)
  spec.inference = {3.0, 1e-4, 0.05};
  spec.experiment = ExperimentKind::TrainCurve;
  const fs::path dir = fs::temp_directory_path() / "icl_test_to_eps";
  fs::remove_all(dir);
  spec.out_dir = dir.string();
  const RunManifest manifest = run(spec);
  CHECK(manifest.ok);
  const std::string csv = read_file((dir / "gap_curves.csv").string());
  // final checkpoint's in-domain gap is below the eps target
  const size_t last = csv.rfind('\n', csv.size() - 2);
  std::istringstream row(csv.substr(last + 1));
  std::string t, gap_in;
  std::getline(row, t, ',');
  std::getline(row, gap_in, ',');
  CHECK(std::stod(gap_in) <= 1e-4);
  CHECK(std::stol(t) > 1000);
  fs::remove_all(dir);
}
