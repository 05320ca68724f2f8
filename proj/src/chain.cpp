#include "kpc/chain.hpp"

#include <chrono>
#include <set>

#include "kpc/errors.hpp"

namespace kpc {

using json = nlohmann::json;

namespace {

class Conversation {
 public:
  Conversation(std::string_view system, ChatProvider& provider, std::string source_id,
               ChainResult& result)
      : system_(system), provider_(provider), source_id_(std::move(source_id)), result_(result) {}

  // Sends `prompt` as the next user turn; returns the reply and its wall time.
  std::pair<std::string, double> ask(std::string prompt, Stage stage) {
    turns_.push_back({Role::User, std::move(prompt)});
    const auto start = std::chrono::steady_clock::now();
    auto reply = provider_.complete(system_, turns_, {source_id_, stage});
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    result_.transcripts.push_back({{source_id_, stage}, std::string(system_), turns_, reply.text,
                                   reply.usage, reply.latency_ms > 0 ? reply.latency_ms : ms});
    result_.usage += reply.usage;
    turns_.push_back({Role::Assistant, reply.text});
    return {std::move(reply.text), ms};
  }

 private:
  std::string_view system_;
  ChatProvider& provider_;
  std::string source_id_;
  ChainResult& result_;
  std::vector<Message> turns_;
};

std::string extract_stage(const std::string& reply, std::string_view tag, Stage stage) {
  try {
    return extract_tagged_json(reply, tag);
  } catch (const NoAnswerError& e) {
    throw NoAnswerError(std::string(to_string(stage)) + ": " + e.what());
  }
}

SemanticModel labels_from(const std::string& step1) {
  try {
    return parse_labels(step1);
  } catch (const Error& e) {
    throw Step1ParseError(std::string("Step1 answer rejected: ") + e.what());
  }
}

SemanticModel model_from(const std::string& step2, Stage stage, ChainResult& result) {
  try {
    const auto doc = json::parse(step2);
    if (doc.is_object() && !doc.contains("internal_link_triples")) {
      result.diagnostics.push_back("Step2 answer has no internal_link_triples field");
    }
    return parse_model(step2, {.drop_self_loops = true, .require_links = false});
  } catch (const std::exception& e) {
    throw NoAnswerError(std::string(to_string(stage)) + ": Step2 answer is not a semantic model: " +
                        e.what());
  }
}

std::set<std::string> attribute_set(const Table& table) {
  return {table.attributes().begin(), table.attributes().end()};
}

}  // namespace

json ChainConfig::to_json() const {
  return {{"chaining_enabled", chaining_enabled},
          {"pruning_enabled", pruning_enabled},
          {"strict_ontology_validation", strict_ontology_validation}};
}

ChainConfig ChainConfig::from_json(const json& j) {
  ChainConfig c;
  try {
    c.chaining_enabled = j.value("chaining_enabled", c.chaining_enabled);
    c.pruning_enabled = j.value("pruning_enabled", c.pruning_enabled);
    c.strict_ontology_validation = j.value("strict_ontology_validation", c.strict_ontology_validation);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("chain config: ") + e.what());
  }
  return c;
}

std::string combined_prompt(const PromptTemplate& tmpl, const SerializedTable& table) {
  return build_combined_prompt(tmpl, table);
}

ChainResult run_chain(std::string_view system_prompt, const Table& table, const ChainConfig& config,
                      ChatProvider& provider, const ChainEnvironment& env) {
  if (config.strict_ontology_validation && env.ontology == nullptr) {
    throw ConfigError("strict ontology validation needs an ontology");
  }
  const auto started = std::chrono::steady_clock::now();
  ChainResult result;
  Conversation chat(system_prompt, provider, table.source_id(), result);
  const auto serialized = serialize_table(table, env.record_cap);

  Stage model_stage = Stage::Chain2;
  std::string step2_text;
  if (config.chaining_enabled) {
    auto [reply1, ms1] = chat.ask(build_chain1_prompt(env.templates, serialized), Stage::Chain1);
    result.timings.chain1_ms = ms1;
    const auto step1_text = extract_stage(reply1, "Step1", Stage::Chain1);
    result.labels = labels_from(step1_text);
    if (result.labels.semantic_triples.empty()) {
      result.diagnostics.push_back("Chain1 produced zero labels; continuing with Chain2");
    }

    auto [reply2, ms2] = chat.ask(build_chain2_prompt(env.templates, step1_text), Stage::Chain2);
    result.timings.chain2_ms = ms2;
    step2_text = extract_stage(reply2, "Step2", Stage::Chain2);
  } else {
    model_stage = Stage::Combined;
    auto [reply, ms] = chat.ask(combined_prompt(env.templates, serialized), Stage::Combined);
    result.timings.chain1_ms = ms;
    result.labels = labels_from(extract_stage(reply, "Step1", Stage::Combined));
    step2_text = extract_stage(reply, "Step2", Stage::Combined);
  }

  // Links only; the labels stay as the Step1 answer.
  result.labels.internal_link_triples.clear();
  result.raw_model = model_from(step2_text, model_stage, result);
  if (result.raw_model.semantic_triples.empty()) {
    result.raw_model.semantic_triples = result.labels.semantic_triples;
    result.diagnostics.push_back("Step2 answer has no semantic triples; merged Step1 labels");
  }

  SemanticModel validated = result.raw_model;
  if (config.strict_ontology_validation) {
    std::erase_if(validated.internal_link_triples, [&](const InternalLinkTriple& l) {
      try {
        return !triple_is_legal(*env.ontology, l.subject.class_name, l.property, l.object.class_name);
      } catch (const DanglingNameError&) {
        return true;
      }
    });
    const auto dropped = result.raw_model.internal_link_triples.size() - validated.internal_link_triples.size();
    if (dropped) result.diagnostics.push_back("strict validation dropped " + std::to_string(dropped) + " links");
  }

  if (config.pruning_enabled) {
    const auto attributes = attribute_set(table);
    result.final_model = prune(validated, attributes);
    std::erase_if(result.labels.semantic_triples,
                  [&](const SemanticTriple& t) { return !attributes.contains(t.attribute); });
  } else {
    result.final_model = std::move(validated);
  }

  result.timings.total_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace kpc
