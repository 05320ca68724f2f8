#pragma once

#include <compare>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace kpc {

class Table;

// A numbered occurrence of an ontology class, rendered "crm:E52_Time-Span2".
struct ClassInstance {
  std::string class_name;
  std::uint32_t index = 1;

  std::string render() const { return class_name + std::to_string(index); }

  // Trailing decimal digits are the index; a name without digits is index 1.
  // Throws InstanceParseError on an empty class part or index 0.
  static ClassInstance parse(std::string_view text);

  friend auto operator<=>(const ClassInstance&, const ClassInstance&) = default;
};

// Attribute annotation: (instance, data property, source attribute).
struct SemanticTriple {
  ClassInstance subject;
  std::string property;
  std::string attribute;

  friend auto operator<=>(const SemanticTriple&, const SemanticTriple&) = default;
};

// Instance-to-instance edge: (instance, object property, instance).
struct InternalLinkTriple {
  ClassInstance subject;
  std::string property;
  ClassInstance object;

  friend auto operator<=>(const InternalLinkTriple&, const InternalLinkTriple&) = default;
};

struct SemanticModel {
  std::set<SemanticTriple> semantic_triples;
  std::set<InternalLinkTriple> internal_link_triples;

  // Every instance mentioned by either triple set.
  std::set<ClassInstance> nodes() const;
  std::size_t size() const { return semantic_triples.size() + internal_link_triples.size(); }
  bool empty() const { return semantic_triples.empty() && internal_link_triples.empty(); }

  friend bool operator==(const SemanticModel&, const SemanticModel&) = default;
};

struct ModelParseOptions {
  // Links whose subject equals their object are dropped instead of raising
  // SchemaError. LLM output is parsed with this on.
  bool drop_self_loops = false;
  // Accept a missing "internal_link_triples" field (Step1 answers).
  bool require_links = true;
};

// Parses {"semantic_triples": [[s,p,attr],...], "internal_link_triples":
// [[s,p,o],...]}. Throws SchemaError / InstanceParseError.
SemanticModel parse_model(std::string_view text, const ModelParseOptions& options = {});

// Step1 answer: only "semantic_triples" is required.
SemanticModel parse_labels(std::string_view text);

// Deterministic JSON with both arrays sorted, one triple per line.
std::string serialize_model(const SemanticModel& m);
// Same shape with only the "semantic_triples" field.
std::string serialize_labels(const SemanticModel& m);

// Drops semantic triples on unknown attributes, then every instance with no
// undirected path to a remaining attribute together with its links.
SemanticModel prune(const SemanticModel& m, const std::set<std::string>& attributes);

// Longest directed path, in edges, that ends at an attribute. Internal links
// point subject -> object and semantic triples point instance -> attribute.
// Throws CyclicModelError if the internal links contain a directed cycle.
std::size_t depth(const SemanticModel& m);

enum class Severity { Warning, Error };

struct LintDiagnostic {
  std::string rule;  // "L1", "L2"
  Severity severity;
  std::string message;
  std::string offending;
};

struct LintReport {
  std::vector<LintDiagnostic> diagnostics;
  bool clean() const { return diagnostics.empty(); }
};

// Gold-model checks:
//   L1  every semantic triple annotates a header of `table`;
//   L2  with both Birth and Death present, Birth -P4-> Time-Span1 and
//       Death -P4-> Time-Span2.
LintReport lint_gold(const SemanticModel& m, const Table& table);

std::string_view to_string(Severity s);

}  // namespace kpc
