#include "kpc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>

#include "kpc/errors.hpp"
#include "kpc/http_provider.hpp"
#include "kpc/io.hpp"
#include "kpc/rng.hpp"

namespace kpc {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ------------------------------------------------------------------ shots

std::size_t ShotSetting::resolve(std::size_t n) const {
  switch (kind) {
    case Kind::One: return 1;
    case Kind::Quarter: return (n + 3) / 4;
    case Kind::Half: return n / 2;
    case Kind::Count: return count;
  }
  return 0;
}

std::string ShotSetting::label() const {
  switch (kind) {
    case Kind::One: return "one";
    case Kind::Quarter: return "quarter";
    case Kind::Half: return "half";
    case Kind::Count: return std::to_string(count);
  }
  return {};
}

ShotSetting ShotSetting::parse(std::string_view text) {
  if (text == "one") return {Kind::One, 0};
  if (text == "quarter") return {Kind::Quarter, 0};
  if (text == "half") return {Kind::Half, 0};
  if (!text.empty() && std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    const auto n = std::stoull(std::string(text));
    if (n == 0) throw ConfigError("shot count must be positive");
    return {Kind::Count, static_cast<std::size_t>(n)};
  }
  throw ConfigError("unknown shot setting '" + std::string(text) + "'");
}

ShotSetting ShotSetting::from_json(const json& j) {
  if (j.is_string()) return parse(j.get<std::string>());
  if (j.is_number_unsigned() || (j.is_number_integer() && j.get<long long>() > 0)) {
    return parse(std::to_string(j.get<long long>()));
  }
  throw ConfigError("shot must be \"one\", \"quarter\", \"half\" or a positive count");
}

// ------------------------------------------------------------------ split

Split split_dataset(std::span<const std::string> ids, std::uint64_t random_state, double test_size,
                    const ShotSetting& shot) {
  if (ids.empty()) throw ConfigError("cannot split an empty dataset");
  if (!(test_size > 0.0 && test_size < 1.0)) throw ConfigError("test_size must lie in (0, 1)");
  const auto n = ids.size();
  const auto n_test = static_cast<std::size_t>(std::llround(test_size * static_cast<double>(n)));
  if (n_test == 0) throw ConfigError("test_size leaves no test sources");

  std::vector<std::string> order(ids.begin(), ids.end());
  SplitMix64 rng(random_state);
  shuffle_in_place(order, rng);

  const auto rest = n - n_test;
  const auto k = shot.resolve(n);
  if (k > rest) {
    throw ShotTooLargeError(shot.label() + "-shot needs " + std::to_string(k) + " known sources but only " +
                            std::to_string(rest) + " remain after the test split");
  }
  Split s;
  s.known.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(rest), order.end());
  return s;
}

std::string split_file(const Split& split, std::uint64_t random_state, double test_size,
                       const ShotSetting& shot) {
  ordered_json j;
  j["prng"] = SplitMix64::kName;
  j["shuffle"] = "fisher-yates, back to front";
  j["random_state"] = random_state;
  j["test_size"] = test_size;
  j["test_rounding"] = "round half away from zero";
  j["shot"] = shot.label();
  j["shot_rounding"] = {{"one", "1"}, {"quarter", "ceil(n/4)"}, {"half", "floor(n/2)"}};
  j["known"] = split.known;
  j["test"] = split.test;
  return j.dump(2) + "\n";
}

// ------------------------------------------------------------------ config

namespace {

fs::path resolve_path(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

template <class T, class F>
std::vector<T> one_or_many(const json& j, F&& each) {
  std::vector<T> out;
  if (j.is_array()) {
    for (const auto& e : j) out.push_back(each(e));
  } else {
    out.push_back(each(j));
  }
  return out;
}

ProviderConfig provider_from(const json& j) {
  if (j.is_string()) return ProviderConfig::preset(j.get<std::string>());
  return ProviderConfig::from_json(j);
}

}  // namespace

ExperimentConfig ExperimentConfig::for_dataset(const fs::path& dir) {
  ExperimentConfig c;
  c.dataset_name = dir.filename().string();
  if (c.dataset_name.empty()) c.dataset_name = dir.parent_path().filename().string();
  c.tables_dir = dir / "tables";
  c.ontology_path = dir / "ontology.json";
  c.gold_dir = dir / "models";
  if (fs::exists(dir / "rules")) c.rules_dir = dir / "rules";
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  try {
    ExperimentConfig c;
    if (j.contains("dataset")) c = for_dataset(resolve_path(j.at("dataset").get<std::string>(), base_dir));
    auto path_key = [&](const char* key, fs::path& into) {
      if (j.contains(key)) into = resolve_path(j.at(key).get<std::string>(), base_dir);
    };
    c.dataset_name = j.value("dataset_name", c.dataset_name);
    path_key("tables", c.tables_dir);
    path_key("ontology", c.ontology_path);
    path_key("gold", c.gold_dir);
    path_key("rules", c.rules_dir);
    path_key("templates", c.templates_dir);
    path_key("output_dir", c.output_dir);
    if (j.contains("random_state")) {
      c.random_states = one_or_many<std::uint64_t>(j.at("random_state"), [](const json& e) {
        return e.get<std::uint64_t>();
      });
    }
    c.test_size = j.value("test_size", c.test_size);
    if (j.contains("shot")) c.shots = one_or_many<ShotSetting>(j.at("shot"), ShotSetting::from_json);
    c.record_cap = j.value("record_cap", c.record_cap);
    if (j.contains("providers")) c.providers = one_or_many<ProviderConfig>(j.at("providers"), provider_from);
    if (j.contains("provider")) c.providers = one_or_many<ProviderConfig>(j.at("provider"), provider_from);
    if (j.contains("chain")) c.chain = ChainConfig::from_json(j.at("chain"));
    c.ablation = j.value("ablation", c.ablation);
    c.micro = j.value("micro", c.micro);
    c.max_concurrency = j.value("max_concurrency", c.max_concurrency);
    if (j.contains("mock")) {
      const auto& m = j.at("mock");
      if (m.contains("script")) c.mock.script = resolve_path(m.at("script").get<std::string>(), base_dir);
      c.mock.seed = m.value("seed", c.mock.seed);
      if (m.contains("corruption")) c.mock.corruption = MockScript::from_json({{"corruption", m.at("corruption")}}).corruption;
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return from_json(j, path.parent_path());
}

json ExperimentConfig::to_json() const {
  json shots_j = json::array();
  for (const auto& s : shots) {
    if (s.kind == ShotSetting::Kind::Count) {
      shots_j.push_back(s.count);
    } else {
      shots_j.push_back(s.label());
    }
  }
  json providers_j = json::array();
  for (const auto& p : providers) providers_j.push_back(p.to_json());
  MockScript corr;
  corr.corruption = mock.corruption;
  json mock_j = {{"seed", mock.seed}, {"corruption", corr.to_json().at("corruption")}};
  if (!mock.script.empty()) mock_j["script"] = mock.script.generic_string();
  json j = {{"dataset_name", dataset_name},
            {"tables", tables_dir.generic_string()},
            {"ontology", ontology_path.generic_string()},
            {"gold", gold_dir.generic_string()},
            {"random_state", random_states},
            {"test_size", test_size},
            {"shot", shots_j},
            {"record_cap", record_cap},
            {"providers", providers_j},
            {"chain", chain.to_json()},
            {"ablation", ablation},
            {"micro", micro},
            {"max_concurrency", max_concurrency},
            {"mock", mock_j},
            {"output_dir", output_dir.generic_string()}};
  if (!rules_dir.empty()) j["rules"] = rules_dir.generic_string();
  if (!templates_dir.empty()) j["templates"] = templates_dir.generic_string();
  return j;
}

void ExperimentConfig::validate() const {
  if (tables_dir.empty() || ontology_path.empty() || gold_dir.empty()) {
    throw ConfigError("config needs tables, ontology and gold paths (or a dataset directory)");
  }
  if (!(test_size > 0.0 && test_size < 1.0)) throw ConfigError("test_size must lie in (0, 1)");
  if (record_cap == 0) throw ConfigError("record_cap must be positive");
  if (random_states.empty()) throw ConfigError("at least one random_state is required");
  if (shots.empty()) throw ConfigError("at least one shot setting is required");
  for (const auto& s : shots) {
    if (s.kind == ShotSetting::Kind::Count && s.count == 0) throw ConfigError("shot count must be positive");
  }
  if (providers.empty()) throw ConfigError("at least one provider is required");
  for (const auto& p : providers) p.validate();
  if (max_concurrency == 0) throw ConfigError("max_concurrency must be positive");
  if (output_dir.empty()) throw ConfigError("output_dir is empty");
}

// ------------------------------------------------------------------ dataset

std::vector<std::string> Dataset::source_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : tables) ids.push_back(id);
  return ids;
}

Dataset load_dataset(const ExperimentConfig& config) {
  for (const auto& p : {config.tables_dir, config.ontology_path, config.gold_dir}) {
    if (!fs::exists(p)) throw ConfigError("missing path: " + p.string());
  }
  Dataset d;
  d.name = config.dataset_name;
  d.ontology = parse_ontology(read_file(config.ontology_path));
  d.ontology_json = serialize_ontology(d.ontology);
  d.templates = config.templates_dir.empty() ? PromptTemplate::defaults() : PromptTemplate::load(config.templates_dir);
  if (!config.rules_dir.empty()) d.rules = Rules::load(config.rules_dir);

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(config.tables_dir)) {
    if (e.is_regular_file() && format_from_path(e.path().string())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto id = f.stem().string();
    if (d.tables.contains(id)) throw ConfigError("two tables share the source id '" + id + "'");
    d.tables.emplace(id, load_source(f.string(), id));
    const auto gold = config.gold_dir / (id + ".json");
    if (!fs::exists(gold)) throw ConfigError("no gold model for source '" + id + "' at " + gold.string());
    d.gold.emplace(id, parse_model(read_file(gold)));
  }
  if (d.tables.empty()) throw ConfigError("no tables under " + config.tables_dir.string());
  return d;
}

std::string build_system_prompt_for(const Dataset& data, std::span<const std::string> known,
                                    std::size_t record_cap) {
  std::vector<ExampleBlock> examples;
  for (const auto& id : known) {
    const auto& gold = data.gold.at(id);
    examples.push_back({serialize_table(data.tables.at(id), record_cap), serialize_labels(gold),
                        serialize_model(gold)});
  }
  return build_system_prompt(data.templates, data.ontology_json, examples, data.rules);
}

MockScript gold_script(const Dataset& data, const MockOptions& options) {
  MockScript script;
  for (const auto& [id, gold] : data.gold) script.add_gold(id, gold);
  if (!options.script.empty()) {
    json j;
    try {
      j = json::parse(read_file(options.script));
    } catch (const json::exception& e) {
      throw ConfigError(options.script.string() + ": " + e.what());
    }
    auto file = MockScript::from_json(j);
    for (auto& [key, text] : file.responses) script.responses[key] = std::move(text);
    for (auto& [stage, spec] : file.corruption) script.corruption[stage] = spec;
  }
  for (const auto& [stage, spec] : options.corruption) script.corruption[stage] = spec;
  script.seed = options.seed;
  return script;
}

std::unique_ptr<ChatProvider> make_provider(const ProviderConfig& provider, const ExperimentConfig& config,
                                            const Dataset& data) {
  if (provider.kind == ProviderKind::Mock) return std::make_unique<MockProvider>(gold_script(data, config.mock));
  auto& clock = SystemClock::instance();
  return std::make_unique<HttpChatProvider>(provider, make_httplib_transport(),
                                            std::make_shared<RateLimiter>(provider.requests_per_minute, clock),
                                            clock);
}

// ------------------------------------------------------------------ variants

std::string variant_label(const ChainConfig& c) {
  std::string s = c.chaining_enabled ? "chaining" : "ablation";
  if (c.pruning_enabled) s += "+prune";
  if (c.strict_ontology_validation) s += "+strict";
  return s;
}

std::vector<Variant> ablation_variants(const ChainConfig& base) {
  std::vector<Variant> out;
  for (auto [chaining, pruning] : {std::pair{false, false}, {true, false}, {true, true}}) {
    ChainConfig c = base;
    c.chaining_enabled = chaining;
    c.pruning_enabled = pruning;
    out.push_back({variant_label(c), c});
  }
  return out;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::string out =
      "configuration,chaining,pruning,labeling_precision,labeling_recall,modeling_precision,modeling_recall,"
      "sources\n";
  auto f = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    out += r.configuration + ',' + (r.chaining ? "1" : "0") + ',' + (r.pruning ? "1" : "0") + ',' +
           f(r.labeling_precision) + ',' + f(r.labeling_recall) + ',' + f(r.modeling_precision) + ',' +
           f(r.modeling_recall) + ',' + std::to_string(r.sources) + '\n';
  }
  return out;
}

// ------------------------------------------------------------------ runner

namespace {

std::string dir_name(std::string s) {
  for (auto& c : s) {
    if (c == '/' || c == '\\' || c == ':' || c == ' ') c = '_';
  }
  return s;
}

struct Cell {
  const Dataset* data;
  const ExperimentConfig* config;
  ChatProvider* provider;
  std::string model_label;
  std::string shot;
  std::uint64_t seed;
  const Variant* variant;
  const std::string* system_prompt;
  fs::path dir;
};

void write_transcript(const fs::path& path, const std::vector<ChatExchange>& ex) {
  std::string out;
  for (const auto& e : ex) out += e.to_json().dump() + '\n';
  write_file(path, out);
}

std::vector<EvalRow> run_source(const Cell& cell, const std::string& id) {
  const auto& gold = cell.data->gold.at(id);
  EvalRow base;
  base.dataset = cell.data->name;
  base.model = cell.model_label;
  base.shot = cell.shot;
  base.seed = cell.seed;
  base.variant = cell.variant->label;
  base.source_id = id;
  try {
    base.depth = static_cast<long>(depth(gold));
  } catch (const CyclicModelError&) {
  }
  const auto dir = cell.dir / dir_name(id);

  EvalRow lab = base, mod = base;
  lab.step = EvalStep::Labeling;
  mod.step = EvalStep::Modeling;
  auto fill = [](EvalRow& row, const Score& s) {
    row.precision = s.precision;
    row.recall = s.recall;
    row.gold_size = s.gold_size;
    row.predicted_size = s.predicted_size;
    row.intersection = s.intersection;
    row.exact_match = s.exact;
  };

  try {
    ChainEnvironment env{cell.data->templates, cell.config->record_cap, &cell.data->ontology};
    const auto result =
        run_chain(*cell.system_prompt, cell.data->tables.at(id), cell.variant->chain, *cell.provider, env);
    write_file(dir / "labels.json", serialize_labels(result.labels));
    write_file(dir / "raw_model.json", serialize_model(result.raw_model));
    write_file(dir / "final_model.json", serialize_model(result.final_model));
    write_transcript(dir / "transcript.jsonl", result.transcripts);
    if (!result.diagnostics.empty()) {
      std::string text;
      for (const auto& d : result.diagnostics) text += d + '\n';
      write_file(dir / "diagnostics.txt", text);
    }
    fill(lab, score(gold, result.labels, EvalStep::Labeling));
    fill(mod, score(gold, result.final_model, EvalStep::Modeling));
    for (auto* row : {&lab, &mod}) {
      row->latency_ms = result.timings.total_ms;
      row->tokens = result.usage.input_tokens + result.usage.output_tokens;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const AuthError&) {
    throw;
  } catch (const std::exception& e) {
    fill(lab, score(gold, {}, EvalStep::Labeling));
    fill(mod, score(gold, {}, EvalStep::Modeling));
    lab.error = mod.error = e.what();
    write_file(dir / "error.txt", std::string(e.what()) + '\n');
  }
  return {lab, mod};
}

AblationRow ablation_row(const Variant& v, std::span<const EvalRow> rows) {
  AblationRow a;
  a.configuration = v.label;
  a.chaining = v.chain.chaining_enabled;
  a.pruning = v.chain.pruning_enabled;
  std::vector<EvalRow> mine;
  for (const auto& r : rows) {
    if (r.variant == v.label) mine.push_back(r);
  }
  std::size_t nl = 0, nm = 0;
  for (const auto& r : mine) {
    if (r.step == EvalStep::Labeling) {
      a.labeling_precision += r.precision;
      a.labeling_recall += r.recall;
      ++nl;
    } else {
      a.modeling_precision += r.precision;
      a.modeling_recall += r.recall;
      ++nm;
    }
  }
  if (nl) {
    a.labeling_precision /= static_cast<double>(nl);
    a.labeling_recall /= static_cast<double>(nl);
  }
  if (nm) {
    a.modeling_precision /= static_cast<double>(nm);
    a.modeling_recall /= static_cast<double>(nm);
  }
  a.sources = nm;
  return a;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const ProviderFactory& factory) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  const auto data = load_dataset(config);
  const auto ids = data.source_ids();
  const auto& out = config.output_dir;
  fs::create_directories(out);

  const auto variants =
      config.ablation ? ablation_variants(config.chain) : std::vector<Variant>{{variant_label(config.chain), config.chain}};

  ExperimentResult res;
  json splits_meta = json::array();
  std::set<std::string> failed;

  for (const auto& pc : config.providers) {
    const auto provider = factory(pc, config, data);
    const auto model_label = pc.model_name.empty() ? std::string(to_string(pc.kind)) : pc.model_name;
    for (const auto seed : config.random_states) {
      for (const auto& shot : config.shots) {
        const auto split = split_dataset(ids, seed, config.test_size, shot);
        const auto split_name = std::to_string(seed) + "_" + shot.label() + ".json";
        write_file(out / "splits" / split_name, split_file(split, seed, config.test_size, shot));
        if (&pc == &config.providers.front()) {
          splits_meta.push_back({{"random_state", seed}, {"shot", shot.label()}, {"file", "splits/" + split_name}});
        }
        const auto system = build_system_prompt_for(data, split.known, config.record_cap);

        for (const auto& variant : variants) {
          Cell cell{&data,  &config, provider.get(), model_label, shot.label(), seed, &variant, &system,
                    out / "runs" / dir_name(model_label) / std::to_string(seed) / shot.label() / dir_name(variant.label)};
          for (const auto& id : split.test) fs::create_directories(cell.dir / dir_name(id));

          std::vector<std::vector<EvalRow>> per(split.test.size());
          std::exception_ptr fatal;
          std::mutex mu;
          const auto n = static_cast<std::int64_t>(split.test.size());
#pragma omp parallel for schedule(dynamic) num_threads(static_cast<int>(config.max_concurrency))
          for (std::int64_t i = 0; i < n; ++i) {
            try {
              per[i] = run_source(cell, split.test[i]);
            } catch (...) {
              std::lock_guard lock(mu);
              if (!fatal) fatal = std::current_exception();
            }
          }
          if (fatal) std::rethrow_exception(fatal);
          for (auto& rows : per) {
            for (auto& r : rows) {
              if (!r.error.empty()) failed.insert(r.model + "/" + std::to_string(r.seed) + "/" + r.shot + "/" + r.variant + "/" + r.source_id);
              res.rows.push_back(std::move(r));
            }
          }
        }
      }
    }
  }

  sort_rows(res.rows);
  res.failed_sources = failed.size();
  res.aggregates = aggregate(res.rows);
  res.buckets = bucket_by_depth(res.rows, data.gold);
  if (config.ablation) {
    for (const auto& v : variants) res.ablation.push_back(ablation_row(v, res.rows));
    write_file(out / "ablation.csv", ablation_csv(res.ablation));
  }

  write_file(out / "report.csv", report_csv(res.rows));
  write_file(out / "depth_buckets.csv", depth_buckets_csv(res.buckets));
  write_file(out / "aggregate.json",
             json{{"averaging", config.micro ? "micro" : "macro"},
                  {"rows", aggregate_json(res.aggregates, config.micro)}}
                     .dump(2) +
                 "\n");

  std::string rules_digest = sha256_hex(data.rules.step1 + '\0' + data.rules.step2);
  json meta = {
      {"config", config.to_json()},
      {"dataset", data.name},
      {"sources", ids},
      {"split_prng", {{"algorithm", SplitMix64::kName}, {"shuffle", "fisher-yates, back to front"}}},
      {"shot_rounding", {{"one", "1"}, {"quarter", "ceil(n/4)"}, {"half", "floor(n/2)"}}},
      {"test_rounding", "round half away from zero"},
      {"splits", splits_meta},
      {"template_sha256", data.templates.fingerprint()},
      {"rules_sha256", rules_digest},
      {"ontology_sha256", sha256_hex(data.ontology_json)},
      {"instance_matching",
       "best per-class alignment of predicted to gold instance indices; exhaustive up to 1e6 candidates, "
       "greedy hill-climb above"},
      {"averaging", config.micro ? "micro" : "macro"},
      {"variants", [&] {
         json v = json::array();
         for (const auto& x : variants) v.push_back({{"label", x.label}, {"chain", x.chain.to_json()}});
         return v;
       }()},
      {"failed_sources", res.failed_sources},
      {"wall_time_ms",
       std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count()}};
  write_file(out / "metadata.json", meta.dump(2) + "\n");
  return res;
}

}  // namespace kpc
