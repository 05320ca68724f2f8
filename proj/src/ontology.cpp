#include "kpc/ontology.hpp"

#include <algorithm>
#include <json.hpp>

#include "json_text.hpp"
#include "kpc/errors.hpp"

namespace kpc {

using json = nlohmann::json;

namespace {

constexpr auto kNodes = "Nodes";
constexpr auto kProperties = "Properties";
constexpr auto kPotentialTriples = "Potential triples";

void add_entry(std::map<std::string, std::string>& parents, const std::string& kind,
               const std::string& name, const std::string& parent) {
  if (name.empty()) throw SchemaError("empty " + kind + " name");
  auto [it, inserted] = parents.try_emplace(name, parent);
  if (!inserted && !parent.empty()) {
    if (it->second.empty()) {
      it->second = parent;
    } else if (it->second != parent) {
      throw SchemaError(kind + " '" + name + "' has conflicting parents '" + it->second +
                        "' and '" + parent + "'");
    }
  }
  if (!parent.empty()) parents.try_emplace(parent, "");
}

std::map<std::string, std::vector<std::string>, std::less<>> resolve_chains(
    const std::map<std::string, std::string>& parents, const std::string& kind) {
  std::map<std::string, std::vector<std::string>, std::less<>> chains;
  for (const auto& [name, first_parent] : parents) {
    std::vector<std::string> chain;
    for (std::string cur = first_parent; !cur.empty(); cur = parents.at(cur)) {
      if (cur == name || std::find(chain.begin(), chain.end(), cur) != chain.end()) {
        throw InheritanceCycleError(kind + " inheritance cycle through '" + name + "'");
      }
      chain.push_back(cur);
    }
    chains.emplace(name, std::move(chain));
  }
  return chains;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// "A -> B -> C" => {A, B, C}
std::vector<std::string> split_chain(std::string_view entry) {
  std::vector<std::string> parts;
  for (;;) {
    const auto arrow = entry.find("->");
    parts.push_back(trim(entry.substr(0, arrow)));
    if (parts.back().empty()) throw SchemaError("empty segment in chain '" + std::string(entry) + "'");
    if (arrow == std::string_view::npos) break;
    entry.remove_prefix(arrow + 2);
  }
  return parts;
}

void read_chains(const json& doc, const char* field, const std::string& kind,
                 std::map<std::string, std::string>& parents) {
  if (!doc.contains(field)) throw SchemaError(std::string("missing field '") + field + "'");
  const auto& arr = doc.at(field);
  if (!arr.is_array()) throw SchemaError(std::string("'") + field + "' must be an array");
  for (const auto& entry : arr) {
    if (!entry.is_string()) throw SchemaError(std::string("'") + field + "' entries must be strings");
    const auto parts = split_chain(entry.get<std::string>());
    for (std::size_t i = 0; i < parts.size(); ++i) {
      add_entry(parents, kind, parts[i], i + 1 < parts.size() ? parts[i + 1] : std::string());
    }
  }
}

std::string chain_string(const std::string& name, const std::vector<std::string>& ancestors) {
  std::string out = name;
  for (const auto& a : ancestors) out += " -> " + a;
  return out;
}

const std::vector<std::string>& chain_of(
    const std::map<std::string, std::vector<std::string>, std::less<>>& chains,
    std::string_view name, const char* kind) {
  const auto it = chains.find(name);
  if (it == chains.end()) {
    throw DanglingNameError(std::string("undeclared ") + kind + " '" + std::string(name) + "'");
  }
  return it->second;
}

bool in_chain(const std::vector<std::string>& chain, std::string_view name) {
  return std::find(chain.begin(), chain.end(), name) != chain.end();
}

}  // namespace

void Ontology::Builder::add_class(const std::string& name, const std::string& parent) {
  add_entry(class_parent, "class", name, parent);
}

void Ontology::Builder::add_property(const std::string& name, const std::string& parent) {
  add_entry(property_parent, "property", name, parent);
}

Ontology Ontology::Builder::build() && {
  Ontology onto;
  onto.class_chain_ = resolve_chains(class_parent, "class");
  onto.property_chain_ = resolve_chains(property_parent, "property");
  for (const auto& t : triples) {
    chain_of(onto.class_chain_, t.subject, "class");
    chain_of(onto.property_chain_, t.property, "property");
    chain_of(onto.class_chain_, t.object, "class");
  }
  onto.triples_ = std::move(triples);
  return onto;
}

bool Ontology::has_class(std::string_view name) const { return class_chain_.contains(name); }

bool Ontology::has_property(std::string_view name) const {
  return property_chain_.contains(name);
}

const std::vector<std::string>& Ontology::class_ancestors(std::string_view name) const {
  return chain_of(class_chain_, name, "class");
}

const std::vector<std::string>& Ontology::property_ancestors(std::string_view name) const {
  return chain_of(property_chain_, name, "property");
}

std::vector<std::string> Ontology::class_names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : class_chain_) out.push_back(name);
  return out;
}

std::vector<std::string> Ontology::property_names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : property_chain_) out.push_back(name);
  return out;
}

bool Ontology::is_subclass_of(std::string_view a, std::string_view b) const {
  const auto& chain = chain_of(class_chain_, a, "class");
  chain_of(class_chain_, b, "class");
  return a == b || in_chain(chain, b);
}

bool Ontology::is_subproperty_of(std::string_view a, std::string_view b) const {
  const auto& chain = chain_of(property_chain_, a, "property");
  chain_of(property_chain_, b, "property");
  return a == b || in_chain(chain, b);
}

std::vector<std::string> Ontology::class_descendants(std::string_view name) const {
  chain_of(class_chain_, name, "class");
  std::vector<std::string> out;
  for (const auto& [cls, chain] : class_chain_) {
    if (in_chain(chain, name)) out.push_back(cls);
  }
  return out;
}

Ontology parse_ontology(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("ontology is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("ontology must be a JSON object");

  Ontology::Builder b;
  read_chains(doc, kNodes, "class", b.class_parent);
  read_chains(doc, kProperties, "property", b.property_parent);

  if (!doc.contains(kPotentialTriples)) {
    throw SchemaError(std::string("missing field '") + kPotentialTriples + "'");
  }
  const auto& triples = doc.at(kPotentialTriples);
  if (!triples.is_array()) throw SchemaError("'Potential triples' must be an array");
  for (const auto& t : triples) {
    if (!t.is_array() || t.size() != 3 ||
        !std::all_of(t.begin(), t.end(), [](const json& s) { return s.is_string(); })) {
      throw SchemaError("potential triple must be [subject, property, object]: " + t.dump());
    }
    b.triples.insert({trim(t[0].get<std::string>()), trim(t[1].get<std::string>()),
                      trim(t[2].get<std::string>())});
  }
  return std::move(b).build();
}

std::string serialize_ontology(const Ontology& onto) {
  std::vector<std::vector<std::string>> nodes;
  for (const auto& name : onto.class_names()) {
    nodes.push_back({chain_string(name, onto.class_ancestors(name))});
  }
  std::vector<std::vector<std::string>> props;
  for (const auto& name : onto.property_names()) {
    props.push_back({chain_string(name, onto.property_ancestors(name))});
  }
  std::vector<std::vector<std::string>> triples;
  for (const auto& t : onto.potential_triples()) triples.push_back({t.subject, t.property, t.object});

  std::string out = "{\n";
  detail::append_rows(out, kNodes, nodes);
  out += ",\n";
  detail::append_rows(out, kProperties, props);
  out += ",\n";
  detail::append_rows(out, kPotentialTriples, triples);
  out += "\n}";
  return out;
}

std::set<PotentialTriple> refinements(const Ontology& onto, const PotentialTriple& t) {
  onto.property_ancestors(t.property);  // declared check
  auto subjects = onto.class_descendants(t.subject);
  subjects.push_back(t.subject);
  auto objects = onto.class_descendants(t.object);
  objects.push_back(t.object);

  std::set<PotentialTriple> out;
  for (const auto& s : subjects) {
    for (const auto& o : objects) out.insert({s, t.property, o});
  }
  return out;
}

bool triple_is_legal(const Ontology& onto, std::string_view subject, std::string_view property,
                     std::string_view object) {
  const auto& s_chain = onto.class_ancestors(subject);
  const auto& p_chain = onto.property_ancestors(property);
  const auto& o_chain = onto.class_ancestors(object);
  const auto covers = [](std::string_view name, const std::vector<std::string>& chain,
                         const std::string& general) {
    return name == general || in_chain(chain, general);
  };
  return std::any_of(onto.potential_triples().begin(), onto.potential_triples().end(),
                     [&](const PotentialTriple& t) {
                       return covers(subject, s_chain, t.subject) &&
                              covers(property, p_chain, t.property) &&
                              covers(object, o_chain, t.object);
                     });
}

}  // namespace kpc
