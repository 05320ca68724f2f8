#include "kpc/eval.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <numeric>
#include <tuple>
#include <unordered_map>

#include "kpc/errors.hpp"
#include "kpc/rng.hpp"

namespace kpc {

using json = nlohmann::json;

std::string_view to_string(EvalStep s) { return s == EvalStep::Labeling ? "labeling" : "modeling"; }

EvalStep eval_step_from_string(std::string_view s) {
  if (s == "labeling") return EvalStep::Labeling;
  if (s == "modeling") return EvalStep::Modeling;
  throw ConfigError("unknown eval step '" + std::string(s) + "'");
}

namespace {

constexpr std::uint32_t kFresh = 0;  // gold indices start at 1

// Triples over interned ids. Subject/object are (class, position within that
// class's sorted predicted indices) on the predicted side and (class, gold
// index) on the gold side.
using Key = std::array<std::uint32_t, 6>;  // kind, class, idx, property, class2|attr, idx2

struct Interner {
  std::unordered_map<std::string, std::uint32_t> ids;
  std::uint32_t operator()(const std::string& s) {
    return ids.try_emplace(s, static_cast<std::uint32_t>(ids.size())).first->second;
  }
};

struct Problem {
  std::vector<std::string> class_names;
  std::vector<std::vector<std::uint32_t>> gold_idx;  // per class, sorted
  std::vector<std::vector<std::uint32_t>> pred_idx;  // per class, sorted
  std::vector<Key> gold;                             // sorted
  std::vector<Key> pred;                             // positions instead of indices

  std::size_t count(const std::vector<std::vector<std::uint32_t>>& assign) const {
    std::size_t n = 0;
    for (const auto& k : pred) {
      const auto s = assign[k[1]][k[2]];
      if (s == kFresh) continue;
      Key mapped = k;
      mapped[2] = s;
      if (k[0] == 1) {
        const auto o = assign[k[4]][k[5]];
        if (o == kFresh) continue;
        mapped[5] = o;
      }
      if (std::binary_search(gold.begin(), gold.end(), mapped)) ++n;
    }
    return n;
  }
};

Problem build_problem(const SemanticModel& gold, const SemanticModel& predicted) {
  Problem p;
  Interner classes, props, attrs;
  std::vector<std::set<std::uint32_t>> gset, pset;
  auto cls = [&](const ClassInstance& ci, std::vector<std::set<std::uint32_t>>& into) {
    const auto id = classes(ci.class_name);
    if (id >= gset.size()) {
      gset.resize(id + 1);
      pset.resize(id + 1);
      p.class_names.resize(id + 1);
      p.class_names[id] = ci.class_name;
    }
    into[id].insert(ci.index);
    return id;
  };
  for (const auto& t : gold.semantic_triples) {
    const auto c = cls(t.subject, gset);
    p.gold.push_back({0, c, t.subject.index, props(t.property), attrs(t.attribute), 0});
  }
  for (const auto& t : gold.internal_link_triples) {
    const auto c = cls(t.subject, gset);
    const auto c2 = cls(t.object, gset);
    p.gold.push_back({1, c, t.subject.index, props(t.property), c2, t.object.index});
  }
  std::sort(p.gold.begin(), p.gold.end());

  std::vector<Key> raw;
  for (const auto& t : predicted.semantic_triples) {
    const auto c = cls(t.subject, pset);
    raw.push_back({0, c, t.subject.index, props(t.property), attrs(t.attribute), 0});
  }
  for (const auto& t : predicted.internal_link_triples) {
    const auto c = cls(t.subject, pset);
    const auto c2 = cls(t.object, pset);
    raw.push_back({1, c, t.subject.index, props(t.property), c2, t.object.index});
  }

  p.gold_idx.resize(gset.size());
  p.pred_idx.resize(pset.size());
  for (std::size_t c = 0; c < gset.size(); ++c) {
    p.gold_idx[c].assign(gset[c].begin(), gset[c].end());
    p.pred_idx[c].assign(pset[c].begin(), pset[c].end());
  }
  auto pos = [&](std::uint32_t c, std::uint32_t idx) {
    const auto& v = p.pred_idx[c];
    return static_cast<std::uint32_t>(std::lower_bound(v.begin(), v.end(), idx) - v.begin());
  };
  for (auto k : raw) {
    k[2] = pos(k[1], k[2]);
    if (k[0] == 1) k[5] = pos(k[4], k[5]);
    p.pred.push_back(k);
  }
  return p;
}

// Every maximal injective alignment of `n_pred` positions onto `gold`.
// Lexicographic; the identity comes first when the index sets coincide.
std::vector<std::vector<std::uint32_t>> alignments(std::size_t n_pred, const std::vector<std::uint32_t>& gold) {
  std::vector<std::vector<std::uint32_t>> out;
  const auto matched = std::min(n_pred, gold.size());
  std::vector<std::uint32_t> cur(n_pred, kFresh);
  std::vector<bool> used(gold.size(), false);
  std::size_t placed = 0;
  auto rec = [&](auto&& self, std::size_t i) -> void {
    if (i == n_pred) {
      if (placed == matched) out.push_back(cur);
      return;
    }
    for (std::size_t g = 0; g < gold.size(); ++g) {
      if (used[g]) continue;
      used[g] = true;
      cur[i] = gold[g];
      ++placed;
      self(self, i + 1);
      --placed;
      used[g] = false;
    }
    cur[i] = kFresh;
    // leaving i unmatched is only allowed if the rest can still fill up
    if (n_pred - i - 1 >= matched - placed) self(self, i + 1);
  };
  rec(rec, 0);
  return out;
}

double alignment_count(std::size_t p, std::size_t g) {
  // P(max, min)
  const auto hi = std::max(p, g), lo = std::min(p, g);
  double n = 1;
  for (std::size_t i = 0; i < lo; ++i) n *= static_cast<double>(hi - i);
  return n;
}

std::vector<std::vector<std::uint32_t>> identity(const Problem& p) {
  std::vector<std::vector<std::uint32_t>> a(p.pred_idx.size());
  for (std::size_t c = 0; c < a.size(); ++c) {
    for (auto idx : p.pred_idx[c]) {
      const bool known = std::binary_search(p.gold_idx[c].begin(), p.gold_idx[c].end(), idx);
      a[c].push_back(known ? idx : kFresh);
    }
  }
  return a;
}

std::pair<std::size_t, std::vector<std::vector<std::uint32_t>>> exact_search(const Problem& p) {
  std::vector<std::size_t> classes;
  std::vector<std::vector<std::vector<std::uint32_t>>> options(p.pred_idx.size());
  auto assign = identity(p);
  for (std::size_t c = 0; c < p.pred_idx.size(); ++c) {
    if (p.pred_idx[c].empty() || p.gold_idx[c].empty()) continue;
    options[c] = alignments(p.pred_idx[c].size(), p.gold_idx[c]);
    if (options[c].size() > 1) classes.push_back(c);
    assign[c] = options[c].front();
  }
  auto best = assign;
  auto best_n = p.count(assign);
  std::vector<std::size_t> odo(classes.size(), 0);
  while (true) {
    std::size_t k = 0;
    while (k < classes.size() && ++odo[k] == options[classes[k]].size()) {
      odo[k] = 0;
      assign[classes[k]] = options[classes[k]][0];
      ++k;
    }
    if (k == classes.size()) break;
    assign[classes[k]] = options[classes[k]][odo[k]];
    const auto n = p.count(assign);
    if (n > best_n) {
      best_n = n;
      best = assign;
    }
  }
  return {best_n, best};
}

std::pair<std::size_t, std::vector<std::vector<std::uint32_t>>> greedy_search(const Problem& p) {
  auto assign = identity(p);
  auto best_n = p.count(assign);
  std::vector<std::size_t> order(p.pred_idx.size());
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(0);
  shuffle_in_place(order, rng);

  bool improved = true;
  while (improved) {
    improved = false;
    for (auto c : order) {
      auto targets = p.gold_idx[c];
      targets.push_back(kFresh);
      for (std::size_t a = 0; a < assign[c].size(); ++a) {
        for (auto t : targets) {
          if (assign[c][a] == t) continue;
          const auto old = assign[c][a];
          const auto holder = t == kFresh ? assign[c].end() : std::find(assign[c].begin(), assign[c].end(), t);
          assign[c][a] = t;
          if (holder != assign[c].end()) *holder = old;
          const auto n = p.count(assign);
          if (n > best_n) {
            best_n = n;
            improved = true;
          } else {
            if (holder != assign[c].end()) *holder = t;
            assign[c][a] = old;
          }
        }
      }
    }
  }
  return {best_n, assign};
}

SemanticModel labels_only(const SemanticModel& m) { return {m.semantic_triples, {}}; }

}  // namespace

MatchResult match_triples(const SemanticModel& gold, const SemanticModel& predicted, double exact_limit) {
  MatchResult r;
  if (gold.empty() || predicted.empty()) return r;
  const auto p = build_problem(gold, predicted);

  double space = 1;
  for (std::size_t c = 0; c < p.pred_idx.size() && space <= exact_limit; ++c) {
    space *= alignment_count(p.pred_idx[c].size(), p.gold_idx[c].size());
  }
  r.exact = space <= exact_limit;
  auto [n, assign] = r.exact ? exact_search(p) : greedy_search(p);
  r.intersection = n;
  for (std::size_t c = 0; c < assign.size(); ++c) {
    for (std::size_t i = 0; i < assign[c].size(); ++i) {
      if (assign[c][i] == kFresh) continue;
      r.mapping.emplace(ClassInstance{p.class_names[c], p.pred_idx[c][i]},
                        ClassInstance{p.class_names[c], assign[c][i]});
    }
  }
  return r;
}

Score score(const SemanticModel& gold, const SemanticModel& predicted, EvalStep step) {
  const bool lab = step == EvalStep::Labeling;
  const auto g = lab ? labels_only(gold) : gold;
  const auto q = lab ? labels_only(predicted) : predicted;
  const auto m = match_triples(g, q);
  Score s;
  s.gold_size = g.size();
  s.predicted_size = q.size();
  s.intersection = m.intersection;
  s.exact = m.exact;
  s.precision = s.predicted_size ? static_cast<double>(s.intersection) / s.predicted_size : 0.0;
  s.recall = s.gold_size ? static_cast<double>(s.intersection) / s.gold_size : 0.0;
  return s;
}

std::vector<Score> score_batch_serial(std::span<const ScoreJob> jobs) {
  std::vector<Score> out;
  out.reserve(jobs.size());
  for (const auto& j : jobs) out.push_back(score(*j.gold, *j.predicted, j.step));
  return out;
}

std::vector<Score> score_batch(std::span<const ScoreJob> jobs) {
  std::vector<Score> out(jobs.size());
  const auto n = static_cast<std::int64_t>(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) out[i] = score(*jobs[i].gold, *jobs[i].predicted, jobs[i].step);
  return out;
}

std::vector<SemanticModel> prune_batch_serial(std::span<const PruneJob> jobs) {
  std::vector<SemanticModel> out;
  out.reserve(jobs.size());
  for (const auto& j : jobs) out.push_back(prune(*j.model, *j.attributes));
  return out;
}

std::vector<SemanticModel> prune_batch(std::span<const PruneJob> jobs) {
  std::vector<SemanticModel> out(jobs.size());
  const auto n = static_cast<std::int64_t>(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) out[i] = prune(*jobs[i].model, *jobs[i].attributes);
  return out;
}

// ------------------------------------------------------------------ report

std::vector<AggregateRow> aggregate(std::span<const EvalRow> rows) {
  using K = std::tuple<std::string, std::string, std::string, std::string, int>;
  struct Acc {
    AggregateRow row;
    double p = 0, r = 0;
    std::size_t inter = 0, pred = 0, gold = 0;
  };
  std::map<K, Acc> groups;
  for (const auto& e : rows) {
    auto& a = groups[{e.dataset, e.model, e.shot, e.variant, static_cast<int>(e.step)}];
    a.row.dataset = e.dataset;
    a.row.model = e.model;
    a.row.shot = e.shot;
    a.row.variant = e.variant;
    a.row.step = e.step;
    ++a.row.sources;
    if (!e.error.empty()) ++a.row.failures;
    a.p += e.precision;
    a.r += e.recall;
    a.inter += e.intersection;
    a.pred += e.predicted_size;
    a.gold += e.gold_size;
  }
  std::vector<AggregateRow> out;
  for (auto& [_, a] : groups) {
    const auto n = static_cast<double>(a.row.sources);
    a.row.macro_precision = a.p / n;
    a.row.macro_recall = a.r / n;
    a.row.micro_precision = a.pred ? static_cast<double>(a.inter) / a.pred : 0.0;
    a.row.micro_recall = a.gold ? static_cast<double>(a.inter) / a.gold : 0.0;
    out.push_back(a.row);
  }
  return out;
}

std::vector<DepthBucket> bucket_by_depth(std::span<const EvalRow> rows,
                                         const std::map<std::string, SemanticModel>& gold) {
  std::map<std::string, std::size_t> depths;
  std::map<std::pair<int, std::size_t>, DepthBucket> buckets;
  for (const auto& e : rows) {
    const auto g = gold.find(e.source_id);
    if (g == gold.end()) continue;
    auto d = depths.find(e.source_id);
    if (d == depths.end()) d = depths.emplace(e.source_id, depth(g->second)).first;
    auto& b = buckets[{static_cast<int>(e.step), d->second}];
    b.step = e.step;
    b.depth = d->second;
    ++b.count;
    b.mean_precision += e.precision;
    b.mean_recall += e.recall;
  }
  std::vector<DepthBucket> out;
  for (auto& [_, b] : buckets) {
    b.mean_precision /= static_cast<double>(b.count);
    b.mean_recall /= static_cast<double>(b.count);
    out.push_back(b);
  }
  return out;
}

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

void sort_rows(std::vector<EvalRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const EvalRow& a, const EvalRow& b) {
    return std::tie(a.variant, a.seed, a.shot, a.source_id, a.step) <
           std::tie(b.variant, b.seed, b.shot, b.source_id, b.step);
  });
}

std::string report_csv(std::span<const EvalRow> rows) {
  std::string out =
      "dataset,model,shot,seed,variant,source_id,step,precision,recall,gold_size,predicted_size,"
      "intersection,depth,latency_ms,tokens,exact_match,error\n";
  for (const auto& r : rows) {
    out += csv_field(r.dataset) + ',' + csv_field(r.model) + ',' + csv_field(r.shot) + ',' +
           std::to_string(r.seed) + ',' + csv_field(r.variant) + ',' + csv_field(r.source_id) + ',' +
           std::string(to_string(r.step)) + ',' + fixed(r.precision, 6) + ',' + fixed(r.recall, 6) + ',' +
           std::to_string(r.gold_size) + ',' + std::to_string(r.predicted_size) + ',' +
           std::to_string(r.intersection) + ',' + std::to_string(r.depth) + ',' + fixed(r.latency_ms, 3) +
           ',' + std::to_string(r.tokens) + ',' + (r.exact_match ? "1" : "0") + ',' + csv_field(r.error) +
           '\n';
  }
  return out;
}

std::string depth_buckets_csv(std::span<const DepthBucket> buckets) {
  std::string out = "step,depth,count,mean_precision,mean_recall\n";
  for (const auto& b : buckets) {
    out += std::string(to_string(b.step)) + ',' + std::to_string(b.depth) + ',' + std::to_string(b.count) +
           ',' + fixed(b.mean_precision, 6) + ',' + fixed(b.mean_recall, 6) + '\n';
  }
  return out;
}

json aggregate_json(std::span<const AggregateRow> rows, bool micro) {
  json out = json::array();
  for (const auto& a : rows) {
    out.push_back({{"dataset", a.dataset},
                   {"model", a.model},
                   {"shot", a.shot},
                   {"variant", a.variant},
                   {"step", to_string(a.step)},
                   {"sources", a.sources},
                   {"failures", a.failures},
                   {"averaging", micro ? "micro" : "macro"},
                   {"precision", micro ? a.micro_precision : a.macro_precision},
                   {"recall", micro ? a.micro_recall : a.macro_recall},
                   {"macro_precision", a.macro_precision},
                   {"macro_recall", a.macro_recall},
                   {"micro_precision", a.micro_precision},
                   {"micro_recall", a.micro_recall}});
  }
  return out;
}

}  // namespace kpc
