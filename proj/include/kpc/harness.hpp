#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kpc/chain.hpp"
#include "kpc/eval.hpp"
#include "kpc/llm.hpp"
#include "kpc/mock_provider.hpp"
#include "kpc/ontology.hpp"
#include "kpc/prompting.hpp"

namespace kpc {

// one | quarter | half | explicit count of known examples.
struct ShotSetting {
  enum class Kind { One, Quarter, Half, Count };
  Kind kind = Kind::Half;
  std::size_t count = 0;  // Kind::Count only

  // 1, ceil(n/4), floor(n/2) or `count`, for a dataset of n sources.
  std::size_t resolve(std::size_t n) const;
  std::string label() const;

  static ShotSetting parse(std::string_view text);  // "one", "quarter", "half" or digits
  static ShotSetting from_json(const nlohmann::json& j);
  friend bool operator==(const ShotSetting&, const ShotSetting&) = default;
};

struct Split {
  std::vector<std::string> known;  // in-context examples, in shuffled order
  std::vector<std::string> test;   // in shuffled order

  friend bool operator==(const Split&, const Split&) = default;
};

// Shuffles `ids` with SplitMix64(random_state) and a back-to-front
// Fisher-Yates pass. The last round(test_size * n) items are the test set;
// the known examples are the first shot.resolve(n) of the rest.
// Throws ConfigError on an empty list or test_size outside (0, 1) and
// ShotTooLargeError when the rest is too small.
Split split_dataset(std::span<const std::string> ids, std::uint64_t random_state, double test_size,
                    const ShotSetting& shot);

// Persisted form of a split, including the PRNG and rounding conventions.
std::string split_file(const Split& split, std::uint64_t random_state, double test_size,
                       const ShotSetting& shot);

struct MockOptions {
  std::filesystem::path script;  // optional; overrides the gold answers it names
  std::map<Stage, CorruptionSpec> corruption;
  std::uint64_t seed = 2023;
};

struct ExperimentConfig {
  std::string dataset_name;
  std::filesystem::path tables_dir;
  std::filesystem::path ontology_path;
  std::filesystem::path gold_dir;
  std::filesystem::path rules_dir;      // optional: step1.txt, step2.txt
  std::filesystem::path templates_dir;  // optional: replaces the built-in templates
  std::vector<std::uint64_t> random_states{2023, 2024};
  double test_size = 0.5;
  std::vector<ShotSetting> shots{ShotSetting{}};
  std::size_t record_cap = kDefaultRecordCap;
  std::vector<ProviderConfig> providers{ProviderConfig{}};
  ChainConfig chain;
  bool ablation = false;  // run the three Table-7 style variants instead of `chain`
  bool micro = false;     // report pooled means as the headline numbers
  std::size_t max_concurrency = 4;
  MockOptions mock;
  std::filesystem::path output_dir = "kpc_out";

  // "dataset" names a directory holding tables/, models/, ontology.json and
  // optionally rules/; explicit "tables", "ontology", "gold", "rules" keys
  // override those. Relative paths resolve against `base_dir`.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  // Defaults pointed at a dataset directory laid out as above.
  static ExperimentConfig for_dataset(const std::filesystem::path& dir);
  nlohmann::json to_json() const;

  // Throws ConfigError.
  void validate() const;
};

// Everything read from disk for one experiment.
struct Dataset {
  std::string name;
  Ontology ontology;
  std::string ontology_json;  // serialized for the system prompt
  std::map<std::string, Table> tables;
  std::map<std::string, SemanticModel> gold;
  Rules rules;
  PromptTemplate templates;

  std::vector<std::string> source_ids() const;
};

// Throws ConfigError when a table has no gold model or a path is missing.
Dataset load_dataset(const ExperimentConfig& config);

std::string build_system_prompt_for(const Dataset& data, std::span<const std::string> known,
                                    std::size_t record_cap);

using ProviderFactory =
    std::function<std::unique_ptr<ChatProvider>(const ProviderConfig&, const ExperimentConfig&, const Dataset&)>;

// Mock: gold answers for every source, then the script file and corruption
// from `config.mock`. Others: HTTP provider on the system clock.
std::unique_ptr<ChatProvider> make_provider(const ProviderConfig& provider, const ExperimentConfig& config,
                                            const Dataset& data);

MockScript gold_script(const Dataset& data, const MockOptions& options);

struct Variant {
  std::string label;
  ChainConfig chain;
};

std::string variant_label(const ChainConfig& c);
// Ablation, +Chaining, +Chaining+Prune.
std::vector<Variant> ablation_variants(const ChainConfig& base);

struct AblationRow {
  std::string configuration;
  bool chaining = false;
  bool pruning = false;
  double labeling_precision = 0, labeling_recall = 0;
  double modeling_precision = 0, modeling_recall = 0;
  std::size_t sources = 0;
};

std::string ablation_csv(std::span<const AblationRow> rows);

struct ExperimentResult {
  std::vector<EvalRow> rows;  // sorted
  std::vector<AggregateRow> aggregates;
  std::vector<DepthBucket> buckets;
  std::vector<AblationRow> ablation;  // empty unless config.ablation
  std::size_t failed_sources = 0;
};

// Runs every (provider, seed, shot, variant) cell and writes report.csv,
// aggregate.json, depth_buckets.csv, ablation.csv (ablation mode),
// metadata.json, splits/ and per-source artifacts under config.output_dir.
// Per-source failures land in the report; ConfigError and AuthError abort.
ExperimentResult run_experiment(const ExperimentConfig& config, const ProviderFactory& factory = make_provider);

}  // namespace kpc
