#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icl/inference.hpp"
#include "icl/trainer.hpp"

namespace icl {

enum class ExperimentKind { TrainCurve, SweepN, SweepH, Verify };

struct ModelConfig {
  int H = 0;         // 0 -> defaults to N
  double beta = 1.0; // Gaussian init scale
};

// A full experiment description; everything an `icl-lab` run needs. All
// randomness descends from problem.seed through named sub-streams, so every
// sub-experiment is independently replayable.
struct ExperimentSpec {
  ProblemConfig problem{60, 20, 20, 20, 0.01, 1};
  LambdaDist lambda_dist;
  ModelConfig model;
  TrainerConfig trainer;
  InferenceConfig inference;
  ExperimentKind experiment = ExperimentKind::Verify;
  std::string out_dir = "out";
  std::vector<int> n_grid;            // sweep-n; defaults near N = m
  std::vector<int> h_grid;            // sweep-h; defaults {1, N/2, N, 2N}
  std::vector<std::uint64_t> seeds;   // sweep repetitions; defaults {1..5}

  int resolved_H() const { return model.H > 0 ? model.H : problem.N; }
  std::vector<int> resolved_n_grid() const;
  std::vector<int> resolved_h_grid() const;
  std::vector<std::uint64_t> resolved_seeds() const;
  void validate() const;

  bool operator==(const ExperimentSpec& other) const;
};

// Strict parser for the bracketed key = value grammar ('#' starts a comment,
// unknown sections or keys are fatal). Errors carry the offending line.
ExperimentSpec parse_spec(const std::string& text);

// Canonical emission; parse_spec(serialize_spec(s)) == s.
std::string serialize_spec(const ExperimentSpec& spec);

std::string experiment_kind_name(ExperimentKind kind);

}  // namespace icl
