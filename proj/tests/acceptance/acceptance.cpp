// Runs the acceptance criteria and prints one PASS/FAIL/SKIP line each.
// Exit status is non-zero when a gating criterion fails.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "kpc/chain.hpp"
#include "kpc/errors.hpp"
#include "kpc/eval.hpp"
#include "kpc/harness.hpp"
#include "kpc/io.hpp"
#include "kpc/mock_provider.hpp"
#include "kpc/ontology.hpp"
#include "oracles.hpp"

using namespace kpc;
namespace fs = std::filesystem;

namespace {

const std::string kFixture = KPC_FIXTURE_DIR;
const std::string kGolden = KPC_GOLDEN_DIR;

struct Outcome {
  enum Kind { Pass, Fail, Skip } kind = Pass;
  std::string detail;
};

Outcome fail(std::string why) { return {Outcome::Fail, std::move(why)}; }

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("kpc_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::fixed << v;
  return os.str();
}

// ------------------------------------------------------------------ 1

Outcome gold_oracle() {
  Stopwatch sw;
  auto c = ExperimentConfig::for_dataset(kFixture);
  c.output_dir = scratch("gold");
  c.random_states = {2023, 2024};
  c.shots = {ShotSetting::parse("one"), ShotSetting::parse("quarter"), ShotSetting::parse("half")};
  const auto r = run_experiment(c);
  const double secs = sw.seconds();

  if (r.failed_sources) return fail(std::to_string(r.failed_sources) + " failed sources");
  if (r.aggregates.size() != 6) return fail("expected 6 aggregate rows, got " + std::to_string(r.aggregates.size()));
  for (const auto& a : r.aggregates) {
    if (a.macro_precision != 1.0 || a.macro_recall != 1.0 || a.micro_precision != 1.0 || a.micro_recall != 1.0) {
      return fail(a.shot + "/" + std::string(to_string(a.step)) + " P=" + fmt(a.macro_precision) +
                  " R=" + fmt(a.macro_recall));
    }
  }
  for (const auto& row : r.rows) {
    if (row.precision != 1.0 || row.recall != 1.0) return fail("row " + row.source_id + " below 1.0");
  }
  // the written report agrees with the in-memory one
  const auto agg = nlohmann::json::parse(read_file(c.output_dir / "aggregate.json"));
  for (const auto& a : agg.at("rows")) {
    if (a.at("precision") != 1.0 || a.at("recall") != 1.0) return fail("aggregate.json below 1.0");
  }
  if (secs >= 10.0) return fail("took " + fmt(secs) + " s");
  return {Outcome::Pass, "3 shots x 2 seeds, " + std::to_string(r.rows.size()) + " rows at 1.000 in " + fmt(secs) + " s"};
}

// ------------------------------------------------------------------ 2

Outcome metric_correctness() {
  Stopwatch sw;
  std::mt19937_64 rng(555);
  for (int i = 0; i < 500; ++i) {
    const auto gold = oracle::random_model(rng);
    const auto pred = oracle::perturb(gold, rng);
    const auto expected = oracle::brute_force_intersection(gold, pred);
    const auto s = score(gold, pred, EvalStep::Modeling);
    const double p = pred.size() ? static_cast<double>(expected) / pred.size() : 0.0;
    const double r = gold.size() ? static_cast<double>(expected) / gold.size() : 0.0;
    if (s.intersection != expected || s.precision != p || s.recall != r) {
      return fail("case " + std::to_string(i) + ": " + std::to_string(s.intersection) + " vs " +
                  std::to_string(expected));
    }
  }
  const double secs = sw.seconds();
  if (secs >= 60.0) return fail("took " + fmt(secs) + " s");
  return {Outcome::Pass, "500 pairs equal to brute force in " + fmt(secs) + " s"};
}

// ------------------------------------------------------------------ 3

Outcome pruning_soundness() {
  std::mt19937_64 rng(333);
  for (int i = 0; i < 500; ++i) {
    const auto m = oracle::random_model(rng, {4, 3, 6, 3, 0.4, 0.12});
    std::set<std::string> attrs;
    for (int a = 0; a < 6; ++a) {
      if (rng() % 3) attrs.insert(oracle::attr_name(a));
    }
    const auto p = prune(m, attrs);
    const auto adj = oracle::undirected(p);
    for (const auto& n : p.nodes()) {
      if (!oracle::reaches_attribute(adj, n.render())) return fail("model " + std::to_string(i) + ": " + n.render());
    }
    if (prune(p, attrs) != p) return fail("not idempotent on model " + std::to_string(i));
    for (const auto& t : p.semantic_triples) {
      if (!m.semantic_triples.contains(t)) return fail("new semantic triple in model " + std::to_string(i));
    }
    for (const auto& t : p.internal_link_triples) {
      if (!m.internal_link_triples.contains(t)) return fail("new link in model " + std::to_string(i));
    }
  }
  return {Outcome::Pass, "500 models: reachable, idempotent, subset"};
}

// ------------------------------------------------------------------ 4

Outcome pruning_effectiveness() {
  auto c = ExperimentConfig::for_dataset(kFixture);
  c.mock.corruption[Stage::Chain2] = {0, 2, 0};
  const auto data = load_dataset(c);
  MockProvider provider(gold_script(data, c.mock));
  const auto ids = data.source_ids();
  const auto system = build_system_prompt_for(data, std::span(ids).first(1), c.record_cap);

  double on_sum = 0, off_sum = 0;
  for (const auto& id : ids) {
    const auto& table = data.tables.at(id);
    const auto on = run_chain(system, table, {true, true, false}, provider);
    const auto off = run_chain(system, table, {true, false, false}, provider);
    const auto p_on = score(data.gold.at(id), on.final_model, EvalStep::Modeling).precision;
    const auto p_off = score(data.gold.at(id), off.final_model, EvalStep::Modeling).precision;
    if (!(p_on > p_off)) return fail(id + ": " + fmt(p_on) + " <= " + fmt(p_off));
    on_sum += p_on;
    off_sum += p_off;
  }
  const auto n = static_cast<double>(ids.size());
  return {Outcome::Pass, "every source; mean modeling precision " + fmt(on_sum / n) + " > " + fmt(off_sum / n)};
}

// ------------------------------------------------------------------ 5

Outcome ablation_shape() {
  auto c = ExperimentConfig::for_dataset(kFixture);
  c.output_dir = scratch("ablation");
  c.ablation = true;
  // single-prompt answers lose triples and gain strays; chained ones only gain strays
  c.mock.corruption[Stage::Combined] = {2, 2, 0};
  c.mock.corruption[Stage::Chain2] = {0, 2, 0};
  const auto r = run_experiment(c);
  if (r.ablation.size() != 3) return fail(std::to_string(r.ablation.size()) + " configurations");
  const auto& a = r.ablation;
  if (a[0].chaining || a[0].pruning || !a[1].chaining || a[1].pruning || !a[2].chaining || !a[2].pruning) {
    return fail("unexpected configuration flags");
  }
  if (!(a[1].modeling_precision >= a[0].modeling_precision)) {
    return fail("chaining " + fmt(a[1].modeling_precision) + " < ablation " + fmt(a[0].modeling_precision));
  }
  const auto csv = read_file(c.output_dir / "ablation.csv");
  if (std::count(csv.begin(), csv.end(), '\n') != 4) return fail("ablation.csv is not header + 3 rows");
  std::string detail = "modeling P";
  for (const auto& row : a) detail += " " + row.configuration + "=" + fmt(row.modeling_precision);
  return {Outcome::Pass, detail};
}

// ------------------------------------------------------------------ 6

Table random_table(std::mt19937_64& rng) {
  static const std::vector<std::string> parts{"a", "Q", "7", ",", "\"", " ", "ü", "\n", "&", "x.y", "1e3", "\\"};
  const int n_attr = std::uniform_int_distribution<int>(1, 6)(rng);
  const int n_rows = std::uniform_int_distribution<int>(1, 6)(rng);
  std::vector<std::string> attrs;
  for (int a = 0; a < n_attr; ++a) attrs.push_back("f" + std::to_string(a));
  std::vector<Table::Row> rows;
  for (int r = 0; r < n_rows; ++r) {
    Table::Row row;
    for (int a = 0; a < n_attr; ++a) {
      if (rng() % 6 == 0) {
        row.push_back(std::string(kEmptyCell));
        continue;
      }
      std::string cell;
      for (auto k = 1 + rng() % 5; k > 0; --k) cell += parts[rng() % parts.size()];
      row.push_back(cell);
    }
    rows.push_back(row);
  }
  return Table("rt", SourceFormat::Csv, attrs, rows);
}

Outcome serialization_fidelity() {
  std::mt19937_64 rng(666);
  for (int i = 0; i < 100; ++i) {
    const auto t = random_table(rng);
    const auto back = parse_source(serialize_table(t, t.record_count()).text, SourceFormat::Json, "rt");
    if (back.attributes() != t.attributes() || back.rows() != t.rows()) return fail("table " + std::to_string(i));
  }
  for (int i = 0; i < 100; ++i) {
    const auto o = parse_ontology(oracle::random_ontology(rng).json());
    const auto s = serialize_ontology(o);
    if (parse_ontology(s) != o || serialize_ontology(parse_ontology(s)) != s) return fail("ontology " + std::to_string(i));
  }
  for (int i = 0; i < 100; ++i) {
    const auto m = oracle::random_model(rng);
    const auto s = serialize_model(m);
    if (parse_model(s) != m || serialize_model(parse_model(s)) != s) return fail("model " + std::to_string(i));
  }
  int with_sentinel = 0;
  for (const auto& [src, golden] : {std::pair{"persons.csv", "persons_cap3.json"},
                                    std::pair{"objects.xml", "objects_cap3.json"},
                                    std::pair{"productions.json", "productions_cap3.json"}}) {
    const auto table = load_source(kFixture + "/tables/" + src);
    const auto text = serialize_table(table, 3).text;
    if (text != read_file(kGolden + "/" + golden)) return fail(std::string(src) + " differs from golden file");
    if (table.record_count() <= 3 || nlohmann::json::parse(text).size() != 3) {
      return fail(std::string(src) + " does not exercise the cap");
    }
    with_sentinel += text.find("\"" + std::string(kEmptyCell) + "\"") != std::string::npos;
  }
  if (with_sentinel < 2) return fail("golden files do not show the empty-cell sentinel");
  return {Outcome::Pass, "100 tables, ontologies and models round-trip; 3 golden files byte-exact"};
}

// ------------------------------------------------------------------ 7

Outcome refinement_reasoning() {
  const auto toy = parse_ontology(R"({
    "Nodes": ["Activity -> Event", "Actor", "Person -> Actor", "Place"],
    "Properties": ["had_participant", "carried_out_by -> had_participant"],
    "Potential triples": [["Event", "had_participant", "Actor"]]})");
  if (!refinements(toy, {"Event", "had_participant", "Actor"}).contains({"Activity", "had_participant", "Actor"})) {
    return fail("toy refinement missing");
  }
  std::mt19937_64 rng(777);
  std::size_t checked = 0;
  for (int i = 0; i < 300; ++i) {
    const auto r = oracle::random_ontology(rng, 10);
    const auto o = parse_ontology(r.json());
    const auto legal = oracle::legal_triples(r);
    for (const auto& [s, _] : r.class_parent) {
      for (const auto& [p, __] : r.prop_parent) {
        for (const auto& [ob, ___] : r.class_parent) {
          if (triple_is_legal(o, s, p, ob) != legal.contains({s, p, ob})) {
            return fail("ontology " + std::to_string(i) + ": " + s + " " + p + " " + ob);
          }
          ++checked;
        }
      }
    }
  }
  return {Outcome::Pass, "toy refinement present; " + std::to_string(checked) + " triples agree with enumeration"};
}

// ------------------------------------------------------------------ 8

Outcome split_determinism() {
  std::vector<std::string> ids;
  for (int i = 1; i <= 28; ++i) ids.push_back("source_" + std::to_string(i));
  const auto half = ShotSetting::parse("half");
  const auto first = split_file(split_dataset(ids, 2023, 0.5, half), 2023, 0.5, half);
  const auto dir = scratch("split");
  fs::create_directories(dir);
  for (int run = 0; run < 10; ++run) {
    const auto s = split_dataset(ids, 2023, 0.5, half);
    if (s.test.size() != 14 || s.known.size() != 14) return fail("sizes " + std::to_string(s.test.size()));
    const auto path = dir / ("run" + std::to_string(run) + ".json");
    write_file(path, split_file(s, 2023, 0.5, half));
    if (read_file(path) != first) return fail("run " + std::to_string(run) + " differs");
  }
  // the pinned algorithm written out independently
  const auto shuffled = oracle::splitmix_shuffle(ids, 2023);
  const auto s = split_dataset(ids, 2023, 0.5, half);
  if (s.test != std::vector<std::string>(shuffled.begin() + 14, shuffled.end()) ||
      s.known != std::vector<std::string>(shuffled.begin(), shuffled.begin() + 14)) {
    return fail("split disagrees with the reference shuffle");
  }
  return {Outcome::Pass, "14 test / 14 known; 10 split files byte-identical"};
}

// ------------------------------------------------------------------ 9

// KPC_LIVE_PROVIDER names a preset (openai, anthropic, deepseek) and
// KPC_LIVE_DATASETS lists dataset directories separated by ':'.
Outcome live_mode() {
  const char* provider = std::getenv("KPC_LIVE_PROVIDER");
  const char* datasets = std::getenv("KPC_LIVE_DATASETS");
  if (!provider || !datasets) return {Outcome::Skip, "set KPC_LIVE_PROVIDER and KPC_LIVE_DATASETS to run"};
  const auto preset = ProviderConfig::preset(provider);
  const char* key = std::getenv(preset.api_key_env.c_str());
  if (!key || !*key) return {Outcome::Skip, preset.api_key_env + " not set"};

  const std::map<std::string, std::pair<double, double>> reference{{"ds_crm", {0.878, 0.876}}};
  std::string detail;
  std::stringstream list(datasets);
  for (std::string dir; std::getline(list, dir, ':');) {
    auto c = ExperimentConfig::for_dataset(dir);
    c.providers = {preset};
    c.random_states = {2023};
    c.output_dir = scratch("live_" + c.dataset_name);
    const auto r = run_experiment(c);
    double latency = 0;
    for (const auto& row : r.rows) latency += row.latency_ms;
    for (const auto& a : r.aggregates) {
      if (a.step != EvalStep::Modeling) continue;
      detail += c.dataset_name + " P=" + fmt(a.macro_precision) + " R=" + fmt(a.macro_recall);
      if (const auto it = reference.find(c.dataset_name); it != reference.end()) {
        detail += " (reference " + fmt(it->second.first) + "/" + fmt(it->second.second) + ")";
      }
    }
    detail += " mean latency " + fmt(r.rows.empty() ? 0 : latency / static_cast<double>(r.rows.size()) / 1000) + " s; ";
  }
  return {Outcome::Pass, detail};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    bool gating;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gold-oracle end-to-end", true, gold_oracle},
      {2, "metric correctness", true, metric_correctness},
      {3, "pruning soundness", true, pruning_soundness},
      {4, "pruning effectiveness", true, pruning_effectiveness},
      {5, "ablation shape", true, ablation_shape},
      {6, "serialization fidelity", true, serialization_fidelity},
      {7, "refinement reasoning", true, refinement_reasoning},
      {8, "split determinism", true, split_determinism},
      {9, "live mode", false, live_mode},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.kind == Outcome::Pass ? "PASS" : o.kind == Outcome::Skip ? "SKIP" : "FAIL";
    std::cout << tag << "  criterion " << c.id << " (" << c.name << (c.gating ? "" : ", non-gating") << "): "
              << o.detail << std::endl;
    if (o.kind == Outcome::Fail && c.gating) ++failed;
  }
  std::cout << (failed ? "acceptance: FAILED (" + std::to_string(failed) + ")" : std::string("acceptance: ok"))
            << std::endl;
  return failed ? 1 : 0;
}
