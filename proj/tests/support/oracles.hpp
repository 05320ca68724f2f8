#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the library's matching, pruning or depth
// code; models are handled as plain strings.

#include <algorithm>
#include <functional>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "kpc/ontology.hpp"
#include "kpc/semantic_model.hpp"

namespace oracle {

using kpc::ClassInstance;
using kpc::SemanticModel;

struct RandomModelSpec {
  int classes = 3;
  int max_instances = 3;
  int attributes = 6;
  int properties = 3;
  double label_p = 0.7;
  double link_p = 0.25;
};

// Class names must not end in a digit: the index is read from trailing digits.
inline std::string class_name(int c) { return std::string("ex:K") + static_cast<char>('A' + c); }
inline std::string attr_name(int a) { return "col" + std::to_string(a); }

inline SemanticModel random_model(std::mt19937_64& rng, const RandomModelSpec& spec = {}) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<ClassInstance> inst;
  for (int c = 0; c < spec.classes; ++c) {
    const int n = std::uniform_int_distribution<int>(0, spec.max_instances)(rng);
    // indices need not be contiguous
    std::vector<std::uint32_t> pool{1, 2, 3, 4, 5};
    std::shuffle(pool.begin(), pool.end(), rng);
    for (int i = 0; i < n; ++i) inst.push_back({class_name(c), pool[static_cast<std::size_t>(i)]});
  }
  SemanticModel m;
  if (inst.empty()) return m;
  std::uniform_int_distribution<std::size_t> pick(0, inst.size() - 1);
  std::uniform_int_distribution<int> prop(0, spec.properties - 1);
  for (int a = 0; a < spec.attributes; ++a) {
    if (coin(rng) < spec.label_p) {
      m.semantic_triples.insert({inst[pick(rng)], "ex:d" + std::to_string(prop(rng)), attr_name(a)});
    }
  }
  for (const auto& s : inst) {
    for (const auto& o : inst) {
      if (s == o) continue;
      if (coin(rng) < spec.link_p) m.internal_link_triples.insert({s, "ex:p" + std::to_string(prop(rng)), o});
    }
  }
  return m;
}

// Consistently renumbers every instance of each class with a random
// permutation of fresh indices.
inline SemanticModel renumber(const SemanticModel& m, std::mt19937_64& rng) {
  std::map<std::string, std::vector<std::uint32_t>> by_class;
  for (const auto& n : m.nodes()) by_class[n.class_name].push_back(n.index);
  std::map<ClassInstance, ClassInstance> to;
  for (auto& [c, idx] : by_class) {
    std::vector<std::uint32_t> fresh;
    for (std::uint32_t i = 1; i <= idx.size() + 3; ++i) fresh.push_back(i);
    std::shuffle(fresh.begin(), fresh.end(), rng);
    for (std::size_t i = 0; i < idx.size(); ++i) to[{c, idx[i]}] = {c, fresh[i]};
  }
  SemanticModel out;
  for (const auto& t : m.semantic_triples) out.semantic_triples.insert({to.at(t.subject), t.property, t.attribute});
  for (const auto& t : m.internal_link_triples) {
    out.internal_link_triples.insert({to.at(t.subject), t.property, to.at(t.object)});
  }
  return out;
}

// Drops and adds a few triples and renumbers, so the pair overlaps partially.
inline SemanticModel perturb(const SemanticModel& gold, std::mt19937_64& rng, const RandomModelSpec& spec = {}) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  SemanticModel out;
  for (const auto& t : gold.semantic_triples) {
    if (coin(rng) > 0.2) out.semantic_triples.insert(t);
  }
  for (const auto& t : gold.internal_link_triples) {
    if (coin(rng) > 0.2) out.internal_link_triples.insert(t);
  }
  const auto noise = random_model(rng, {spec.classes, spec.max_instances, spec.attributes, spec.properties, 0.2, 0.08});
  out.semantic_triples.insert(noise.semantic_triples.begin(), noise.semantic_triples.end());
  out.internal_link_triples.insert(noise.internal_link_triples.begin(), noise.internal_link_triples.end());
  return renumber(out, rng);
}

// ---------------------------------------------------------------- matching

inline std::string inst_str(const std::string& c, long idx) { return c + "#" + std::to_string(idx); }

// Largest |gold ∩ mapped(pred)| over every way of sending each class's
// predicted instances to distinct gold indices or to a private fresh index.
// Candidates per class come from std::next_permutation over the gold indices
// padded with one "unmatched" marker per predicted instance.
inline std::size_t brute_force_intersection(const SemanticModel& gold, const SemanticModel& pred) {
  std::set<std::string> g;
  for (const auto& t : gold.semantic_triples) {
    g.insert("S|" + inst_str(t.subject.class_name, t.subject.index) + "|" + t.property + "|" + t.attribute);
  }
  for (const auto& t : gold.internal_link_triples) {
    g.insert("L|" + inst_str(t.subject.class_name, t.subject.index) + "|" + t.property + "|" +
             inst_str(t.object.class_name, t.object.index));
  }

  std::map<std::string, std::vector<std::uint32_t>> pred_idx, gold_idx;
  for (const auto& n : pred.nodes()) pred_idx[n.class_name].push_back(n.index);
  for (const auto& n : gold.nodes()) gold_idx[n.class_name].push_back(n.index);

  std::vector<std::string> classes;
  std::vector<std::vector<std::vector<long>>> choices;  // per class: candidate targets for each predicted index
  for (const auto& [c, idx] : pred_idx) {
    std::vector<long> slots;
    for (auto gi : gold_idx[c]) slots.push_back(gi);
    for (std::size_t i = 0; i < idx.size(); ++i) slots.push_back(-1);
    std::sort(slots.begin(), slots.end());
    std::set<std::vector<long>> seen;
    do {
      seen.insert(std::vector<long>(slots.begin(), slots.begin() + static_cast<long>(idx.size())));
    } while (std::next_permutation(slots.begin(), slots.end()));
    classes.push_back(c);
    choices.emplace_back(seen.begin(), seen.end());
  }

  std::map<std::string, std::map<std::uint32_t, long>> mapping;
  std::size_t best = 0;
  std::function<void(std::size_t)> rec = [&](std::size_t k) {
    if (k == classes.size()) {
      auto m = [&](const ClassInstance& ci) { return inst_str(ci.class_name, mapping[ci.class_name][ci.index]); };
      std::size_t hit = 0;
      for (const auto& t : pred.semantic_triples) {
        hit += g.count("S|" + m(t.subject) + "|" + t.property + "|" + t.attribute);
      }
      for (const auto& t : pred.internal_link_triples) {
        hit += g.count("L|" + m(t.subject) + "|" + t.property + "|" + m(t.object));
      }
      best = std::max(best, hit);
      return;
    }
    const auto& c = classes[k];
    const auto& idx = pred_idx[c];
    for (const auto& choice : choices[k]) {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        // unmatched instances get an index no gold instance uses
        mapping[c][idx[i]] = choice[i] < 0 ? -1000 - static_cast<long>(i) : choice[i];
      }
      rec(k + 1);
    }
  };
  rec(0);
  return best;
}

// ---------------------------------------------------------------- graphs

using Adj = std::map<std::string, std::set<std::string>>;

inline Adj undirected(const SemanticModel& m) {
  Adj adj;
  for (const auto& t : m.semantic_triples) {
    adj[t.subject.render()].insert("@" + t.attribute);
    adj["@" + t.attribute].insert(t.subject.render());
  }
  for (const auto& t : m.internal_link_triples) {
    adj[t.subject.render()].insert(t.object.render());
    adj[t.object.render()].insert(t.subject.render());
  }
  return adj;
}

// Does `from` reach any attribute node ("@...") along undirected edges?
inline bool reaches_attribute(const Adj& adj, const std::string& from) {
  std::set<std::string> seen{from};
  std::queue<std::string> q;
  q.push(from);
  while (!q.empty()) {
    const auto u = q.front();
    q.pop();
    if (u.front() == '@') return true;
    const auto it = adj.find(u);
    if (it == adj.end()) continue;
    for (const auto& v : it->second) {
      if (seen.insert(v).second) q.push(v);
    }
  }
  return false;
}

// What prune() should keep: labels on known attributes, then everything in a
// component that still touches one of them.
inline SemanticModel expected_prune(const SemanticModel& m, const std::set<std::string>& attrs) {
  SemanticModel kept;
  for (const auto& t : m.semantic_triples) {
    if (attrs.count(t.attribute)) kept.semantic_triples.insert(t);
  }
  kept.internal_link_triples = m.internal_link_triples;
  const auto adj = undirected(kept);
  SemanticModel out;
  out.semantic_triples = kept.semantic_triples;
  for (const auto& t : m.internal_link_triples) {
    if (reaches_attribute(adj, t.subject.render())) out.internal_link_triples.insert(t);
  }
  return out;
}

// Longest directed path, counted in edges, ending at an attribute; found by
// enumerating simple paths. Returns -1 on a directed cycle.
inline long brute_depth(const SemanticModel& m) {
  std::map<std::string, std::vector<std::string>> out;
  std::map<std::string, bool> labelled;
  for (const auto& t : m.internal_link_triples) out[t.subject.render()].push_back(t.object.render());
  for (const auto& t : m.semantic_triples) labelled[t.subject.render()] = true;
  long best = 0;
  bool cycle = false;
  std::set<std::string> on_path;
  std::function<void(const std::string&, long)> walk = [&](const std::string& u, long len) {
    if (labelled[u]) best = std::max(best, len + 1);
    on_path.insert(u);
    for (const auto& v : out[u]) {
      if (on_path.count(v)) {
        cycle = true;
        continue;
      }
      walk(v, len + 1);
    }
    on_path.erase(u);
  };
  for (const auto& n : m.nodes()) walk(n.render(), 0);
  return cycle ? -1 : best;
}


// ---------------------------------------------------------------- ontology

struct RandomOntology {
  std::map<std::string, std::string> class_parent, prop_parent;  // "" = root
  std::set<kpc::PotentialTriple> triples;

  std::string json() const {
    auto chains = [](const std::map<std::string, std::string>& parent) {
      std::string out;
      for (const auto& [c, p] : parent) {
        if (!out.empty()) out += ",";
        out += "\"" + c + (p.empty() ? "" : " -> " + p) + "\"";
      }
      return out;
    };
    std::string t;
    for (const auto& x : triples) {
      if (!t.empty()) t += ",";
      t += "[\"" + x.subject + "\",\"" + x.property + "\",\"" + x.object + "\"]";
    }
    return "{\"Nodes\":[" + chains(class_parent) + "],\"Properties\":[" + chains(prop_parent) +
           "],\"Potential triples\":[" + t + "]}";
  }
};

// Parents always have a smaller number, so the forest is acyclic.
inline RandomOntology random_ontology(std::mt19937_64& rng, int max_classes = 10) {
  RandomOntology o;
  const int nc = std::uniform_int_distribution<int>(1, max_classes)(rng);
  const int np = std::uniform_int_distribution<int>(1, 4)(rng);
  for (int i = 0; i < nc; ++i) {
    const int p = i == 0 ? -1 : std::uniform_int_distribution<int>(-1, i - 1)(rng);
    o.class_parent["C" + std::to_string(i)] = p < 0 ? "" : "C" + std::to_string(p);
  }
  for (int i = 0; i < np; ++i) {
    const int p = i == 0 ? -1 : std::uniform_int_distribution<int>(-1, i - 1)(rng);
    o.prop_parent["p" + std::to_string(i)] = p < 0 ? "" : "p" + std::to_string(p);
  }
  const int nt = std::uniform_int_distribution<int>(0, 5)(rng);
  for (int i = 0; i < nt; ++i) {
    o.triples.insert({"C" + std::to_string(rng() % nc), "p" + std::to_string(rng() % np),
                      "C" + std::to_string(rng() % nc)});
  }
  return o;
}

// Reflexive descendants by walking every name's parent chain.
inline std::set<std::string> below(const std::map<std::string, std::string>& parent, const std::string& top) {
  std::set<std::string> out;
  for (const auto& [name, _] : parent) {
    for (std::string cur = name; !cur.empty(); cur = parent.at(cur)) {
      if (cur == top) {
        out.insert(name);
        break;
      }
    }
  }
  return out;
}

// Every (s, p, o) sanctioned by some potential triple after specializing any
// of its three positions.
inline std::set<kpc::PotentialTriple> legal_triples(const RandomOntology& r) {
  std::set<kpc::PotentialTriple> legal;
  for (const auto& t : r.triples) {
    for (const auto& s : below(r.class_parent, t.subject)) {
      for (const auto& p : below(r.prop_parent, t.property)) {
        for (const auto& ob : below(r.class_parent, t.object)) legal.insert({s, p, ob});
      }
    }
  }
  return legal;
}

// ---------------------------------------------------------------- split

// Written out independently of the library so a change in either shows up.
inline std::vector<std::string> splitmix_shuffle(std::vector<std::string> v, std::uint64_t seed) {
  std::uint64_t state = seed;
  auto next = [&] {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  for (std::size_t i = v.size() - 1; i >= 1; --i) std::swap(v[i], v[next() % (i + 1)]);
  return v;
}

}  // namespace oracle
