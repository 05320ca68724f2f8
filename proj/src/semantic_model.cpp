#include "kpc/semantic_model.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <deque>
#include <json.hpp>
#include <map>

#include "json_text.hpp"
#include "kpc/errors.hpp"
#include "kpc/ingest.hpp"

namespace kpc {

using json = nlohmann::json;

namespace {

constexpr auto kSemanticTriples = "semantic_triples";
constexpr auto kInternalLinkTriples = "internal_link_triples";

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::array<std::string, 3>> read_triples(const json& doc, const char* field,
                                                     bool required) {
  std::vector<std::array<std::string, 3>> out;
  if (!doc.contains(field)) {
    if (required) throw SchemaError(std::string("missing field '") + field + "'");
    return out;
  }
  const auto& arr = doc.at(field);
  if (!arr.is_array()) throw SchemaError(std::string("'") + field + "' must be an array");
  for (const auto& t : arr) {
    if (!t.is_array() || t.size() != 3 ||
        !std::all_of(t.begin(), t.end(), [](const json& s) { return s.is_string(); })) {
      throw SchemaError(std::string("entries of '") + field +
                        "' must be 3-element string arrays: " + t.dump());
    }
    out.push_back({trim(t[0].get<std::string>()), trim(t[1].get<std::string>()),
                   trim(t[2].get<std::string>())});
  }
  return out;
}

json parse_object(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("model is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("model must be a JSON object");
  return doc;
}

std::vector<std::vector<std::string>> semantic_rows(const SemanticModel& m) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& t : m.semantic_triples) rows.push_back({t.subject.render(), t.property, t.attribute});
  return rows;
}

std::string_view local_name(std::string_view name) {
  const auto cut = name.find_last_of(":#/");
  return cut == std::string_view::npos ? name : name.substr(cut + 1);
}

}  // namespace

ClassInstance ClassInstance::parse(std::string_view text) {
  const std::string s = trim(text);
  const auto last_non_digit = s.find_last_not_of("0123456789");
  if (last_non_digit == std::string::npos) {
    throw InstanceParseError("class instance '" + s + "' has no class name");
  }
  ClassInstance inst;
  inst.class_name = s.substr(0, last_non_digit + 1);
  const std::string_view digits(s.data() + last_non_digit + 1, s.size() - last_non_digit - 1);
  if (!digits.empty()) {
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), inst.index);
    if (ec != std::errc() || inst.index == 0) {
      throw InstanceParseError("bad instance index in '" + s + "'");
    }
  }
  return inst;
}

std::set<ClassInstance> SemanticModel::nodes() const {
  std::set<ClassInstance> out;
  for (const auto& t : semantic_triples) out.insert(t.subject);
  for (const auto& t : internal_link_triples) {
    out.insert(t.subject);
    out.insert(t.object);
  }
  return out;
}

SemanticModel parse_model(std::string_view text, const ModelParseOptions& options) {
  const json doc = parse_object(text);
  SemanticModel m;
  for (auto& [s, p, a] : read_triples(doc, kSemanticTriples, true)) {
    m.semantic_triples.insert({ClassInstance::parse(s), std::move(p), std::move(a)});
  }
  for (auto& [s, p, o] : read_triples(doc, kInternalLinkTriples, options.require_links)) {
    InternalLinkTriple link{ClassInstance::parse(s), std::move(p), ClassInstance::parse(o)};
    if (link.subject == link.object) {
      if (options.drop_self_loops) continue;
      throw SchemaError("self-loop on " + link.subject.render());
    }
    m.internal_link_triples.insert(std::move(link));
  }
  return m;
}

SemanticModel parse_labels(std::string_view text) {
  return parse_model(text, {.drop_self_loops = true, .require_links = false});
}

std::string serialize_model(const SemanticModel& m) {
  std::vector<std::vector<std::string>> links;
  for (const auto& t : m.internal_link_triples) {
    links.push_back({t.subject.render(), t.property, t.object.render()});
  }
  std::string out = "{\n";
  detail::append_rows(out, kSemanticTriples, semantic_rows(m));
  out += ",\n";
  detail::append_rows(out, kInternalLinkTriples, links);
  out += "\n}";
  return out;
}

std::string serialize_labels(const SemanticModel& m) {
  std::string out = "{\n";
  detail::append_rows(out, kSemanticTriples, semantic_rows(m));
  out += "\n}";
  return out;
}

SemanticModel prune(const SemanticModel& m, const std::set<std::string>& attributes) {
  SemanticModel out;
  for (const auto& t : m.semantic_triples) {
    if (attributes.contains(t.attribute)) out.semantic_triples.insert(t);
  }

  std::map<ClassInstance, std::vector<const ClassInstance*>> adjacent;
  for (const auto& t : m.internal_link_triples) {
    adjacent[t.subject].push_back(&t.object);
    adjacent[t.object].push_back(&t.subject);
  }

  std::set<ClassInstance> reached;
  std::deque<const ClassInstance*> frontier;
  for (const auto& t : out.semantic_triples) {
    if (reached.insert(t.subject).second) frontier.push_back(&t.subject);
  }
  while (!frontier.empty()) {
    const auto* cur = frontier.front();
    frontier.pop_front();
    const auto it = adjacent.find(*cur);
    if (it == adjacent.end()) continue;
    for (const auto* next : it->second) {
      if (reached.insert(*next).second) frontier.push_back(next);
    }
  }

  for (const auto& t : m.internal_link_triples) {
    if (reached.contains(t.subject)) out.internal_link_triples.insert(t);
  }
  return out;
}

std::size_t depth(const SemanticModel& m) {
  std::map<ClassInstance, std::vector<const ClassInstance*>> successors;
  std::map<ClassInstance, std::size_t> in_degree;
  for (const auto& n : m.nodes()) in_degree[n] = 0;
  for (const auto& t : m.internal_link_triples) {
    successors[t.subject].push_back(&t.object);
    ++in_degree[t.object];
  }

  // Kahn's order; longest[n] = edges on the longest link path ending at n
  std::map<ClassInstance, std::size_t> longest;
  std::deque<ClassInstance> ready;
  for (const auto& [n, deg] : in_degree) {
    if (deg == 0) ready.push_back(n);
  }
  std::size_t visited = 0;
  while (!ready.empty()) {
    const ClassInstance cur = ready.front();
    ready.pop_front();
    ++visited;
    const std::size_t here = longest[cur];
    const auto it = successors.find(cur);
    if (it == successors.end()) continue;
    for (const auto* next : it->second) {
      auto& best = longest[*next];
      best = std::max(best, here + 1);
      if (--in_degree[*next] == 0) ready.push_back(*next);
    }
  }
  if (visited != in_degree.size()) throw CyclicModelError("internal links contain a directed cycle");

  std::size_t result = 0;
  for (const auto& t : m.semantic_triples) result = std::max(result, longest[t.subject] + 1);
  return result;
}

std::string_view to_string(Severity s) { return s == Severity::Error ? "error" : "warning"; }

LintReport lint_gold(const SemanticModel& m, const Table& table) {
  LintReport report;
  for (const auto& t : m.semantic_triples) {
    if (table.has_attribute(t.attribute)) continue;
    report.diagnostics.push_back(
        {"L1", Severity::Error,
         "leaf attribute '" + t.attribute + "' is not a header of source '" + table.source_id() + "'",
         "[" + t.subject.render() + ", " + t.property + ", " + t.attribute + "]"});
  }

  const auto nodes = m.nodes();
  const auto has_class = [&](std::string_view local) {
    return std::any_of(nodes.begin(), nodes.end(),
                       [&](const ClassInstance& n) { return local_name(n.class_name) == local; });
  };
  if (has_class("E67_Birth") && has_class("E69_Death")) {
    const auto linked = [&](std::string_view event, std::uint32_t span_index) {
      return std::any_of(m.internal_link_triples.begin(), m.internal_link_triples.end(),
                         [&](const InternalLinkTriple& l) {
                           return local_name(l.subject.class_name) == event &&
                                  local_name(l.property) == "P4_has_time-span" &&
                                  local_name(l.object.class_name) == "E52_Time-Span" &&
                                  l.object.index == span_index;
                         });
    };
    const bool birth_ok = linked("E67_Birth", 1);
    const bool death_ok = linked("E69_Death", 2);
    if (!birth_ok || !death_ok) {
      std::string offending;
      for (const auto& l : m.internal_link_triples) {
        if (local_name(l.property) != "P4_has_time-span") continue;
        const auto subj = local_name(l.subject.class_name);
        if (subj != "E67_Birth" && subj != "E69_Death") continue;
        if (!offending.empty()) offending += "; ";
        offending += "[" + l.subject.render() + ", " + l.property + ", " + l.object.render() + "]";
      }
      report.diagnostics.push_back(
          {"L2", Severity::Warning,
           std::string("Birth/Death time-spans misnumbered: expected Birth -> Time-Span1 and "
                       "Death -> Time-Span2") +
               (birth_ok ? "" : " (Birth wrong)") + (death_ok ? "" : " (Death wrong)"),
           offending});
    }
  }
  return report;
}

}  // namespace kpc
