#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>

#include "kpc/llm.hpp"
#include "kpc/semantic_model.hpp"

namespace kpc {

// Damage applied to a scripted answer before it is returned.
struct CorruptionSpec {
  std::size_t drop = 0;    // remove k triples
  std::size_t inject = 0;  // add k instances with no path to any real attribute
  std::size_t rename = 0;  // suffix the property of k triples with "_renamed"

  bool any() const { return drop || inject || rename; }
  friend bool operator==(const CorruptionSpec&, const CorruptionSpec&) = default;
};

// Canned responses keyed by (source id, stage) plus per-stage corruption.
// The corruption of a response depends only on (seed, source id, stage).
struct MockScript {
  std::map<std::pair<std::string, Stage>, std::string> responses;
  std::map<Stage, CorruptionSpec> corruption;
  std::uint64_t seed = 2023;

  nlohmann::json to_json() const;
  static MockScript from_json(const nlohmann::json& j);

  // Responses that answer every stage with the gold model: reasoning text
  // followed by <Step1> labels and/or a <Step2> model.
  void add_gold(const std::string& source_id, const SemanticModel& gold);
};

// The text a well-behaved model would return for `stage` given its answer.
std::string scripted_answer(Stage stage, const SemanticModel& model);

// Applies `spec` to the last <Step1>/<Step2> payload of `response` (Step1
// for Chain1, Step2 otherwise). Deterministic in (seed, source_id, stage).
std::string corrupt_response(const std::string& response, const CorruptionSpec& spec,
                             std::uint64_t seed, const std::string& source_id, Stage stage);

// Model-level corruption used by corrupt_response. Labels-only models get
// their injected instances through hallucinated attribute annotations.
SemanticModel corrupt_model(const SemanticModel& m, const CorruptionSpec& spec, std::uint64_t seed,
                            const std::string& source_id, Stage stage);

class MockProvider final : public ChatProvider {
 public:
  explicit MockProvider(MockScript script) : script_(std::move(script)) {}

  // Throws ProviderError when the script has no entry for the tag.
  Completion complete(std::string_view system, std::span<const Message> turns,
                      const RequestTag& tag) override;
  std::string name() const override { return "mock"; }

  const MockScript& script() const { return script_; }

 private:
  MockScript script_;
};

}  // namespace kpc
