#pragma once

#include <compare>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace kpc {

struct PotentialTriple {
  std::string subject;
  std::string property;
  std::string object;

  friend auto operator<=>(const PotentialTriple&, const PotentialTriple&) = default;
};

// A domain ontology: single-inheritance class and property hierarchies plus
// the (class, property, class) triples the ontology sanctions.
//
// Class and property names live in separate namespaces. Data and object
// properties share the property namespace.
class Ontology {
 public:
  // Builder used by the parser and by tests. Parent maps must name declared
  // entries and be acyclic; validate() enforces that.
  struct Builder {
    std::map<std::string, std::string> class_parent;     // "" = root
    std::map<std::string, std::string> property_parent;  // "" = root
    std::set<PotentialTriple> triples;

    void add_class(const std::string& name, const std::string& parent = {});
    void add_property(const std::string& name, const std::string& parent = {});
    Ontology build() &&;
  };

  Ontology() = default;

  bool has_class(std::string_view name) const;
  bool has_property(std::string_view name) const;

  // Ancestors nearest-first, excluding the entry itself.
  const std::vector<std::string>& class_ancestors(std::string_view name) const;
  const std::vector<std::string>& property_ancestors(std::string_view name) const;

  std::vector<std::string> class_names() const;
  std::vector<std::string> property_names() const;
  const std::set<PotentialTriple>& potential_triples() const { return triples_; }

  // Reflexive, transitive. Throws DanglingNameError for undeclared names.
  bool is_subclass_of(std::string_view a, std::string_view b) const;
  bool is_subproperty_of(std::string_view a, std::string_view b) const;

  // Strict descendants of `name` in sorted order.
  std::vector<std::string> class_descendants(std::string_view name) const;

  friend bool operator==(const Ontology&, const Ontology&) = default;

 private:
  using Chains = std::map<std::string, std::vector<std::string>, std::less<>>;

  Chains class_chain_;
  Chains property_chain_;
  std::set<PotentialTriple> triples_;
};

// Parses {"Nodes": [...], "Properties": [...], "Potential triples": [...]}.
// Entries are "A -> B -> C" inheritance chains; potential triples are
// [subject, property, object] arrays.
//
// Throws SchemaError (missing field, conflicting parents),
// InheritanceCycleError and DanglingNameError.
Ontology parse_ontology(std::string_view text);

// Deterministic JSON; each class/property is written once with its full
// ancestor chain.
std::string serialize_ontology(const Ontology& onto);

// All triples obtained by specialising the subject and object of `t` to
// subclasses (reflexively), so `t` itself is always included. Properties are
// not refined.
std::set<PotentialTriple> refinements(const Ontology& onto, const PotentialTriple& t);

// True iff some declared potential triple (S, P, O) has subject ⊑ S,
// property ⊑ P and object ⊑ O.
bool triple_is_legal(const Ontology& onto, std::string_view subject, std::string_view property,
                     std::string_view object);

}  // namespace kpc
