#include "kpc/mock_provider.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "kpc/errors.hpp"
#include "kpc/rng.hpp"

namespace kpc {

using json = nlohmann::json;

namespace {

constexpr auto kHallucinatedLink = "mock:hallucinated_link";
constexpr auto kHallucinatedProperty = "mock:hallucinated_property";

Stage stage_from_string(std::string_view s) {
  if (s == "chain1") return Stage::Chain1;
  if (s == "chain2") return Stage::Chain2;
  if (s == "combined") return Stage::Combined;
  throw ConfigError("unknown stage '" + std::string(s) + "'");
}

std::uint64_t corruption_seed(std::uint64_t seed, const std::string& source_id, Stage stage) {
  return fnv1a64(to_string(stage), fnv1a64(source_id, fnv1a64(std::to_string(seed))));
}

// First k entries of a seeded permutation of [0, n).
std::vector<std::size_t> pick(std::size_t n, std::size_t k, SplitMix64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  shuffle_in_place(idx, rng);
  idx.resize(std::min(k, n));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::string scripted_answer(Stage stage, const SemanticModel& model) {
  std::string out;
  if (stage == Stage::Chain1 || stage == Stage::Combined) {
    out +=
        "Reasoning: each attribute was matched against the ontology nodes and the known "
        "examples, choosing the class and data property that describe its values.\n"
        "<Step1>\n" +
        serialize_labels(model) + "\n</Step1>\n";
  }
  if (stage == Stage::Chain2 || stage == Stage::Combined) {
    out +=
        "Reasoning: the labelled class nodes were connected through object properties "
        "sanctioned by the potential triples.\n"
        "<Step2>\n" +
        serialize_model(model) + "\n</Step2>\n";
  }
  return out;
}

SemanticModel corrupt_model(const SemanticModel& m, const CorruptionSpec& spec, std::uint64_t seed,
                            const std::string& source_id, Stage stage) {
  SplitMix64 rng(corruption_seed(seed, source_id, stage));

  std::vector<SemanticTriple> sem(m.semantic_triples.begin(), m.semantic_triples.end());
  std::vector<InternalLinkTriple> links(m.internal_link_triples.begin(), m.internal_link_triples.end());

  // index i < sem.size() addresses sem, the rest address links
  if (spec.drop) {
    const auto victims = pick(sem.size() + links.size(), spec.drop, rng);
    for (auto it = victims.rbegin(); it != victims.rend(); ++it) {
      if (*it < sem.size()) {
        sem.erase(sem.begin() + static_cast<std::ptrdiff_t>(*it));
      } else {
        links.erase(links.begin() + static_cast<std::ptrdiff_t>(*it - sem.size()));
      }
    }
  }
  if (spec.rename) {
    for (const auto i : pick(sem.size() + links.size(), spec.rename, rng)) {
      auto& prop = i < sem.size() ? sem[i].property : links[i - sem.size()].property;
      prop += "_renamed";
    }
  }

  SemanticModel out;
  out.semantic_triples.insert(sem.begin(), sem.end());
  out.internal_link_triples.insert(links.begin(), links.end());

  if (spec.inject) {
    std::map<std::string, std::uint32_t> next_index;
    for (const auto& n : m.nodes()) {
      auto& next = next_index[n.class_name];
      next = std::max(next, n.index + 1);
    }
    std::vector<std::string> classes;
    for (const auto& [cls, _] : next_index) classes.push_back(cls);
    if (classes.empty()) {
      classes.push_back("mock:Phantom");
      next_index["mock:Phantom"] = 1;
    }

    std::vector<ClassInstance> fresh;
    for (std::size_t i = 0; i < spec.inject; ++i) {
      const auto& cls = classes[rng.below(classes.size())];
      fresh.push_back({cls, next_index[cls]++});
    }
    // A lone instance or a labels-only answer cannot hold a link, so those
    // instances annotate attributes that do not exist in the source.
    if (stage == Stage::Chain1 || fresh.size() == 1) {
      for (std::size_t i = 0; i < fresh.size(); ++i) {
        out.semantic_triples.insert(
            {fresh[i], kHallucinatedProperty, "mock:hallucinated_attribute_" + std::to_string(i + 1)});
      }
    } else {
      for (std::size_t i = 0; i + 1 < fresh.size(); ++i) {
        out.internal_link_triples.insert({fresh[i], kHallucinatedLink, fresh[i + 1]});
      }
    }
  }
  return out;
}

std::string corrupt_response(const std::string& response, const CorruptionSpec& spec,
                             std::uint64_t seed, const std::string& source_id, Stage stage) {
  if (!spec.any()) return response;
  const bool labels = stage == Stage::Chain1;
  const std::string open = labels ? "<Step1>" : "<Step2>";
  const std::string close = labels ? "</Step1>" : "</Step2>";

  const auto start = response.rfind(open);
  if (start == std::string::npos) return response;
  const auto body_start = start + open.size();
  const auto end = response.find(close, body_start);
  if (end == std::string::npos) return response;

  SemanticModel model;
  try {
    model = parse_model(std::string_view(response).substr(body_start, end - body_start),
                        {.drop_self_loops = true, .require_links = !labels});
  } catch (const Error&) {
    return response;
  }
  const auto damaged = corrupt_model(model, spec, seed, source_id, stage);
  return response.substr(0, body_start) + "\n" +
         (labels ? serialize_labels(damaged) : serialize_model(damaged)) + "\n" +
         response.substr(end);
}

json MockScript::to_json() const {
  json resp = json::object();
  for (const auto& [key, text] : responses) resp[key.first][std::string(to_string(key.second))] = text;
  json corr = json::object();
  for (const auto& [stage, spec] : corruption) {
    corr[std::string(to_string(stage))] = {
        {"drop", spec.drop}, {"inject", spec.inject}, {"rename", spec.rename}};
  }
  return {{"seed", seed}, {"responses", std::move(resp)}, {"corruption", std::move(corr)}};
}

MockScript MockScript::from_json(const json& j) {
  MockScript s;
  try {
    s.seed = j.value("seed", s.seed);
    if (j.contains("responses")) {
      for (const auto& [source, stages] : j.at("responses").items()) {
        for (const auto& [stage, text] : stages.items()) {
          s.responses[{source, stage_from_string(stage)}] = text.get<std::string>();
        }
      }
    }
    if (j.contains("corruption")) {
      for (const auto& [stage, spec] : j.at("corruption").items()) {
        s.corruption[stage_from_string(stage)] = {spec.value("drop", std::size_t{0}),
                                                  spec.value("inject", std::size_t{0}),
                                                  spec.value("rename", std::size_t{0})};
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("mock script: ") + e.what());
  }
  return s;
}

void MockScript::add_gold(const std::string& source_id, const SemanticModel& gold) {
  for (const auto stage : {Stage::Chain1, Stage::Chain2, Stage::Combined}) {
    responses[{source_id, stage}] = scripted_answer(stage, gold);
  }
}

Completion MockProvider::complete(std::string_view system, std::span<const Message> turns,
                                  const RequestTag& tag) {
  const auto it = script_.responses.find({tag.source_id, tag.stage});
  if (it == script_.responses.end()) {
    throw ProviderError("mock script has no " + std::string(to_string(tag.stage)) +
                        " response for '" + tag.source_id + "'");
  }
  Completion out;
  const auto spec = script_.corruption.find(tag.stage);
  out.text = spec == script_.corruption.end()
                 ? it->second
                 : corrupt_response(it->second, spec->second, script_.seed, tag.source_id, tag.stage);
  out.usage.input_tokens = estimate_tokens(system);
  for (const auto& m : turns) out.usage.input_tokens += estimate_tokens(m.content);
  out.usage.output_tokens = estimate_tokens(out.text);
  return out;
}

}  // namespace kpc
