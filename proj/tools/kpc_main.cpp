// kpc: command-line front end for ingest, prompting, chaining and evaluation.

#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "kpc/chain.hpp"
#include "kpc/errors.hpp"
#include "kpc/eval.hpp"
#include "kpc/harness.hpp"
#include "kpc/ingest.hpp"
#include "kpc/io.hpp"
#include "kpc/ontology.hpp"
#include "kpc/prompting.hpp"
#include "kpc/semantic_model.hpp"

#ifndef KPC_DEFAULT_DATASET
#define KPC_DEFAULT_DATASET "data/fixture_crm"
#endif

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kPartial = 2;

// Options shared by the subcommands that run against a dataset.
struct RunOptions {
  std::string config;
  std::string dataset;
  std::string provider;
  std::vector<std::string> shots;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::optional<double> test_size;
  std::optional<std::size_t> record_cap;
  std::optional<std::size_t> concurrency;
  bool ablation = false;
  bool micro = false;
  bool no_chaining = false;
  bool no_pruning = false;
  bool strict = false;
  std::string mock_script;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    app->add_option("--dataset", dataset, "Dataset directory (tables/, models/, ontology.json)");
    app->add_option("--provider", provider, "Provider preset: mock, openai, deepseek, anthropic");
    app->add_option("--shot", shots, "one, quarter, half or a count");
    app->add_option("--seed", seeds, "random_state for the split");
    app->add_option("--out", out, "Output directory");
    app->add_option("--test-size", test_size, "Fraction of sources held out");
    app->add_option("--record-cap", record_cap, "Records serialized per table");
    app->add_option("--concurrency", concurrency, "Sources processed at once");
    app->add_flag("--ablation", ablation, "Run the three ablation variants");
    app->add_flag("--micro", micro, "Report pooled triple counts instead of per-source means");
    app->add_flag("--no-chaining", no_chaining, "Single combined prompt");
    app->add_flag("--no-pruning", no_pruning, "Keep unconnected instances");
    app->add_flag("--strict", strict, "Drop links the ontology does not allow");
    app->add_option("--mock-script", mock_script, "Mock responses/corruption (JSON)");
  }

  kpc::ExperimentConfig resolve() const {
    kpc::ExperimentConfig c;
    if (!config.empty()) {
      c = kpc::ExperimentConfig::load(config);
    } else {
      c = kpc::ExperimentConfig::for_dataset(dataset.empty() ? fs::path(KPC_DEFAULT_DATASET) : fs::path(dataset));
    }
    if (!config.empty() && !dataset.empty()) {
      auto d = kpc::ExperimentConfig::for_dataset(dataset);
      c.dataset_name = d.dataset_name;
      c.tables_dir = d.tables_dir;
      c.ontology_path = d.ontology_path;
      c.gold_dir = d.gold_dir;
      c.rules_dir = d.rules_dir;
    }
    if (!provider.empty()) c.providers = {kpc::ProviderConfig::preset(provider)};
    if (!shots.empty()) {
      c.shots.clear();
      for (const auto& s : shots) c.shots.push_back(kpc::ShotSetting::parse(s));
    }
    if (!seeds.empty()) c.random_states = seeds;
    if (!out.empty()) c.output_dir = out;
    if (test_size) c.test_size = *test_size;
    if (record_cap) c.record_cap = *record_cap;
    if (concurrency) c.max_concurrency = *concurrency;
    if (ablation) c.ablation = true;
    if (micro) c.micro = true;
    if (no_chaining) c.chain.chaining_enabled = false;
    if (no_pruning) c.chain.pruning_enabled = false;
    if (strict) c.chain.strict_ontology_validation = true;
    if (!mock_script.empty()) c.mock.script = mock_script;
    c.validate();
    return c;
  }
};

void print_aggregates(const kpc::ExperimentResult& r, bool micro) {
  for (const auto& a : r.aggregates) {
    std::printf("%-10s %-10s %-8s %-22s %-9s P=%.3f R=%.3f  (%zu rows, %zu failed)\n", a.dataset.c_str(),
                a.model.c_str(), a.shot.c_str(), a.variant.c_str(), std::string(kpc::to_string(a.step)).c_str(),
                micro ? a.micro_precision : a.macro_precision, micro ? a.micro_recall : a.macro_recall, a.sources,
                a.failures);
  }
}

int cmd_ingest(const std::string& input, const std::string& format, const std::string& id, std::size_t cap,
               bool all) {
  kpc::Table t = [&] {
    if (format.empty()) return kpc::load_source(input, id);
    const auto f = kpc::format_from_string(format);
    if (!f) throw kpc::ConfigError("unknown format '" + format + "'");
    return kpc::parse_source(kpc::read_file(input), *f, id.empty() ? fs::path(input).stem().string() : id);
  }();
  const auto n = all ? std::max<std::size_t>(t.record_count(), 1) : cap;
  std::cout << kpc::serialize_table(t, n).text << '\n';
  return kOk;
}

int cmd_build_prompt(const RunOptions& opts, std::size_t which) {
  const auto config = opts.resolve();
  const auto data = kpc::load_dataset(config);
  const auto ids = data.source_ids();
  const auto split = kpc::split_dataset(ids, config.random_states.front(), config.test_size, config.shots.front());
  if (which == 0) {
    std::cout << kpc::build_system_prompt_for(data, split.known, config.record_cap);
  } else {
    const auto& id = split.test.at(0);
    std::cout << kpc::build_chain1_prompt(data.templates, kpc::serialize_table(data.tables.at(id), config.record_cap));
  }
  return kOk;
}

int cmd_run(const RunOptions& opts, const std::string& source) {
  const auto config = opts.resolve();
  const auto data = kpc::load_dataset(config);
  if (!data.tables.contains(source)) throw kpc::ConfigError("unknown source '" + source + "'");
  const auto ids = data.source_ids();
  const auto split = kpc::split_dataset(ids, config.random_states.front(), config.test_size, config.shots.front());
  std::vector<std::string> known;
  for (const auto& k : split.known) {
    if (k != source) known.push_back(k);
  }
  if (known.empty()) throw kpc::ConfigError("no in-context examples left once '" + source + "' is excluded");
  const auto system = kpc::build_system_prompt_for(data, known, config.record_cap);
  const auto provider = kpc::make_provider(config.providers.front(), config, data);
  kpc::ChainEnvironment env{data.templates, config.record_cap, &data.ontology};
  const auto result = kpc::run_chain(system, data.tables.at(source), config.chain, *provider, env);

  const auto dir = config.output_dir / source;
  kpc::write_file(dir / "labels.json", kpc::serialize_labels(result.labels));
  kpc::write_file(dir / "raw_model.json", kpc::serialize_model(result.raw_model));
  kpc::write_file(dir / "final_model.json", kpc::serialize_model(result.final_model));
  std::string transcript;
  for (const auto& e : result.transcripts) transcript += e.to_json().dump() + '\n';
  kpc::write_file(dir / "transcript.jsonl", transcript);
  for (const auto& d : result.diagnostics) std::cerr << "note: " << d << '\n';

  std::cout << kpc::serialize_model(result.final_model) << "\n";
  const auto& gold = data.gold.at(source);
  for (auto step : {kpc::EvalStep::Labeling, kpc::EvalStep::Modeling}) {
    const auto s = kpc::score(gold, step == kpc::EvalStep::Labeling ? result.labels : result.final_model, step);
    std::printf("%s precision %.6f recall %.6f\n", std::string(kpc::to_string(step)).c_str(), s.precision, s.recall);
  }
  return kOk;
}

int cmd_experiment(const RunOptions& opts) {
  const auto config = opts.resolve();
  const auto r = kpc::run_experiment(config);
  print_aggregates(r, config.micro);
  if (!r.ablation.empty()) std::cout << '\n' << kpc::ablation_csv(r.ablation);
  std::cout << "results in " << config.output_dir.string() << '\n';
  return r.failed_sources ? kPartial : kOk;
}

int cmd_eval(const std::string& gold_path, const std::string& pred_path, const std::string& step) {
  const auto gold = kpc::parse_model(kpc::read_file(gold_path), {.drop_self_loops = false, .require_links = false});
  const auto pred = kpc::parse_model(kpc::read_file(pred_path), {.drop_self_loops = true, .require_links = false});
  const auto s = kpc::score(gold, pred, kpc::eval_step_from_string(step));
  std::printf("precision %.6f\nrecall %.6f\nintersection %zu\ngold %zu\npredicted %zu\n", s.precision, s.recall,
              s.intersection, s.gold_size, s.predicted_size);
  if (!s.exact) std::printf("matching greedy (search space above limit)\n");
  return kOk;
}

int cmd_lint(const std::string& model_path, const std::string& table_path, const std::string& dataset) {
  std::vector<std::pair<std::string, std::string>> pairs;  // model, table
  if (!dataset.empty()) {
    const auto c = kpc::ExperimentConfig::for_dataset(dataset);
    for (const auto& e : fs::directory_iterator(c.tables_dir)) {
      if (!kpc::format_from_path(e.path().string())) continue;
      pairs.emplace_back((c.gold_dir / (e.path().stem().string() + ".json")).string(), e.path().string());
    }
    std::sort(pairs.begin(), pairs.end());
  } else {
    if (model_path.empty() || table_path.empty()) throw kpc::ConfigError("lint-gold needs --model and --table, or --dataset");
    pairs.emplace_back(model_path, table_path);
  }
  bool errors = false;
  for (const auto& [m, t] : pairs) {
    const auto report = kpc::lint_gold(kpc::parse_model(kpc::read_file(m)), kpc::load_source(t));
    for (const auto& d : report.diagnostics) {
      std::printf("%s: %s [%s] %s: %s\n", m.c_str(), d.rule.c_str(), std::string(kpc::to_string(d.severity)).c_str(),
                  d.message.c_str(), d.offending.c_str());
      errors = errors || d.severity == kpc::Severity::Error;
    }
  }
  return errors ? kPartial : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge prompt chaining for semantic modeling"};
  app.require_subcommand(1);

  std::string input, format, id;
  std::size_t cap = kpc::kDefaultRecordCap;
  bool all = false;
  auto* ingest = app.add_subcommand("ingest", "Parse a CSV/XML/JSON source and print its unified JSON");
  ingest->add_option("input", input, "Source file")->required()->check(CLI::ExistingFile);
  ingest->add_option("--format", format, "csv, xml or json (default: from extension)");
  ingest->add_option("--id", id, "Source id");
  ingest->add_option("--cap", cap, "Records to print")->check(CLI::PositiveNumber);
  ingest->add_flag("--all", all, "Print every record");

  std::string onto_path;
  auto* ser_onto = app.add_subcommand("serialize-ontology", "Print the ontology as prompt JSON");
  ser_onto->add_option("ontology", onto_path, "Ontology JSON")->required()->check(CLI::ExistingFile);

  RunOptions prompt_opts;
  bool chain1 = false;
  auto* build_prompt = app.add_subcommand("build-prompt", "Print the assembled system prompt");
  prompt_opts.attach(build_prompt);
  build_prompt->add_flag("--chain1", chain1, "Print the Chain1 prompt of the first test source instead");

  RunOptions run_opts;
  std::string source;
  auto* run = app.add_subcommand("run", "Run one source through the chain");
  run_opts.attach(run);
  run->add_option("--source", source, "Source id")->required();

  RunOptions exp_opts;
  auto* experiment = app.add_subcommand("experiment", "Run the split/shot/provider matrix and write reports");
  exp_opts.attach(experiment);

  std::string gold_path, pred_path, step = "modeling";
  auto* eval = app.add_subcommand("eval", "Score a predicted model against a gold model");
  eval->add_option("--gold", gold_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--pred", pred_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--step", step)->check(CLI::IsMember({"labeling", "modeling"}));

  std::string lint_model, lint_table, lint_dataset;
  auto* lint = app.add_subcommand("lint-gold", "Check gold models against their tables");
  lint->add_option("--model", lint_model)->check(CLI::ExistingFile);
  lint->add_option("--table", lint_table)->check(CLI::ExistingFile);
  lint->add_option("--dataset", lint_dataset)->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*ingest) return cmd_ingest(input, format, id, cap, all);
    if (*ser_onto) {
      std::cout << kpc::serialize_ontology(kpc::parse_ontology(kpc::read_file(onto_path)));
      return kOk;
    }
    if (*build_prompt) return cmd_build_prompt(prompt_opts, chain1 ? 1 : 0);
    if (*run) return cmd_run(run_opts, source);
    if (*experiment) return cmd_experiment(exp_opts);
    if (*eval) return cmd_eval(gold_path, pred_path, step);
    if (*lint) return cmd_lint(lint_model, lint_table, lint_dataset);
  } catch (const kpc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const kpc::AuthError& e) {
    std::cerr << "auth error: " << e.what() << '\n';
    return kConfigError;
  } catch (const kpc::ProviderError& e) {
    std::cerr << "provider error: " << e.what() << '\n';
    return kPartial;
  } catch (const kpc::NoAnswerError& e) {
    std::cerr << "no answer: " << e.what() << '\n';
    return kPartial;
  } catch (const kpc::Step1ParseError& e) {
    std::cerr << e.what() << '\n';
    return kPartial;
  } catch (const kpc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return kOk;
}
