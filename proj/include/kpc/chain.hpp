#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kpc/ingest.hpp"
#include "kpc/llm.hpp"
#include "kpc/ontology.hpp"
#include "kpc/prompting.hpp"
#include "kpc/semantic_model.hpp"

namespace kpc {

struct ChainConfig {
  bool chaining_enabled = true;
  bool pruning_enabled = true;
  // Drop internal links the ontology does not sanction before pruning.
  bool strict_ontology_validation = false;

  nlohmann::json to_json() const;
  static ChainConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ChainConfig&, const ChainConfig&) = default;
};

struct StageTimings {
  double chain1_ms = 0.0;  // the combined call when chaining is off
  double chain2_ms = 0.0;
  double total_ms = 0.0;
};

struct ChainResult {
  SemanticModel labels;       // Step1 semantic triples
  SemanticModel raw_model;    // Step2 answer as returned (labels merged in if it had none)
  SemanticModel final_model;  // after strict validation and pruning
  std::vector<ChatExchange> transcripts;
  StageTimings timings;
  Usage usage;
  std::vector<std::string> diagnostics;
};

struct ChainEnvironment {
  PromptTemplate templates = PromptTemplate::defaults();
  std::size_t record_cap = kDefaultRecordCap;
  const Ontology* ontology = nullptr;  // needed for strict validation
};

// Runs one source through the chain. With chaining on, Chain1 and Chain2 are
// two turns of one conversation; with it off a single combined prompt asks
// for both answers.
//
// Throws NoAnswerError (message prefixed with the stage), Step1ParseError
// before any Chain2 call, and provider errors as raised.
ChainResult run_chain(std::string_view system_prompt, const Table& table, const ChainConfig& config,
                      ChatProvider& provider, const ChainEnvironment& env = {});

// Single prompt asking for <Step1> and <Step2> in one response.
std::string combined_prompt(const PromptTemplate& tmpl, const SerializedTable& table);

}  // namespace kpc
