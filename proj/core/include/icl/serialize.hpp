#pragma once

#include <string>

#include "icl/inference.hpp"
#include "icl/trainer.hpp"

namespace icl {

// JSON schema, version 1. Every document carries "schema_version" and "kind";
// matrices are row-major nested arrays; generator seeds are recorded so any
// artifact can be regenerated. Serialization is byte-stable (sorted keys,
// shortest round-trip numbers), which is what the golden-fixture tests
// compare against.
inline constexpr int kSchemaVersion = 1;
inline constexpr std::string_view kVersion = "0.1.0";

std::string to_json(const Dictionary& dict);
std::string to_json(const PromptInstance& prompt);
std::string to_json(const Params& params);
std::string to_json(const LossContext& ctx);
std::string to_json(const InferenceResult& result);
std::string to_json(const TrainReport& report);

// Self-contained model bundle: parameters plus the dictionary and noise level
// they were trained against.
struct ModelBundle {
  Params params;
  Dictionary dictionary;
  double tau = 0.0;
};
std::string to_json(const ModelBundle& bundle);

Dictionary dictionary_from_json(const std::string& text);
PromptInstance prompt_from_json(const std::string& text);
Params params_from_json(const std::string& text);
LossContext context_from_json(const std::string& text);
ModelBundle model_from_json(const std::string& text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace icl
