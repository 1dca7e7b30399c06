#pragma once

#include <string>
#include <vector>

#include "icl/config.hpp"

namespace icl {

struct ManifestEntry {
  std::string path;      // relative to out_dir
  std::string checksum;  // fnv1a64 of the bytes, hex
};

struct RunManifest {
  std::string version;
  std::string experiment;
  std::string spec_hash;  // fnv1a64 of the serialized spec
  std::uint64_t root_seed = 0;
  std::vector<std::uint64_t> seeds;  // sweep replicate seeds, when used
  bool ok = true;
  std::vector<std::string> failures;  // partial-run failures, one line each
  std::vector<ManifestEntry> files;
};

std::string to_json(const RunManifest& manifest);

// Executes the configured experiment, writing every artifact (and finally
// manifest.json) under spec.out_dir. Partial failures are recorded in the
// manifest and flip ok to false; the caller decides the exit code.
RunManifest run(const ExperimentSpec& spec);

// One named check of the verify battery.
struct VerifyCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

// The full invariant suite on the configured problem (plus a small derived
// instance for the strict gradient check). Used by `run` for the verify
// experiment and directly by the CLI.
std::vector<VerifyCheck> verify_battery(const ExperimentSpec& spec);

// Parallelism cap: ICL_LAB_THREADS when set, hardware concurrency otherwise.
int max_threads();

}  // namespace icl
