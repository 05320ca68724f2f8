#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kpc/semantic_model.hpp"

namespace kpc {

enum class EvalStep { Labeling, Modeling };

std::string_view to_string(EvalStep s);
EvalStep eval_step_from_string(std::string_view s);

// Predicted instances are aligned to gold instances of the same class before
// triples are compared. A predicted instance either takes a distinct gold
// index or stays unmatched (it then matches nothing).
struct MatchResult {
  std::size_t intersection = 0;
  std::map<ClassInstance, ClassInstance> mapping;  // predicted -> gold; unmatched omitted
  bool exact = true;                               // false when the greedy search ran
};

// Above this many candidate alignments the greedy search is used.
inline constexpr double kExactSearchLimit = 1e6;

// `exact_limit` is exposed so tests can force the greedy path with 0.
MatchResult match_triples(const SemanticModel& gold, const SemanticModel& predicted,
                          double exact_limit = kExactSearchLimit);

struct Score {
  double precision = 0.0;
  double recall = 0.0;
  std::size_t gold_size = 0;
  std::size_t predicted_size = 0;
  std::size_t intersection = 0;
  bool exact = true;
};

// Labeling keeps only semantic triples on both sides. An empty prediction has
// precision 0, an empty gold recall 0.
Score score(const SemanticModel& gold, const SemanticModel& predicted, EvalStep step);

// ------------------------------------------------------------ batch kernels

struct ScoreJob {
  const SemanticModel* gold = nullptr;
  const SemanticModel* predicted = nullptr;
  EvalStep step = EvalStep::Modeling;
};

// OpenMP over jobs; results in job order.
std::vector<Score> score_batch(std::span<const ScoreJob> jobs);
std::vector<Score> score_batch_serial(std::span<const ScoreJob> jobs);

struct PruneJob {
  const SemanticModel* model = nullptr;
  const std::set<std::string>* attributes = nullptr;
};

std::vector<SemanticModel> prune_batch(std::span<const PruneJob> jobs);
std::vector<SemanticModel> prune_batch_serial(std::span<const PruneJob> jobs);

// ------------------------------------------------------------------ report

struct EvalRow {
  std::string dataset;
  std::string model;  // provider model name
  std::string shot;
  std::uint64_t seed = 0;
  std::string variant;  // chain configuration label
  std::string source_id;
  EvalStep step = EvalStep::Modeling;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t gold_size = 0;
  std::size_t predicted_size = 0;
  std::size_t intersection = 0;
  long depth = -1;  // -1 when the gold model has no depth
  double latency_ms = 0.0;
  std::uint64_t tokens = 0;
  bool exact_match = true;
  std::string error;  // empty on success
};

// Per (dataset, model, shot, variant, step) over every row, seeds pooled.
struct AggregateRow {
  std::string dataset;
  std::string model;
  std::string shot;
  std::string variant;
  EvalStep step = EvalStep::Modeling;
  std::size_t sources = 0;
  std::size_t failures = 0;
  double macro_precision = 0.0;  // unweighted mean of per-source values
  double macro_recall = 0.0;
  double micro_precision = 0.0;  // pooled triple counts
  double micro_recall = 0.0;
};

std::vector<AggregateRow> aggregate(std::span<const EvalRow> rows);

struct DepthBucket {
  EvalStep step = EvalStep::Modeling;
  std::size_t depth = 0;
  std::size_t count = 0;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
};

// Groups rows by depth of their source's gold model. Rows whose source has no
// gold entry are skipped. Throws CyclicModelError.
std::vector<DepthBucket> bucket_by_depth(std::span<const EvalRow> rows,
                                         const std::map<std::string, SemanticModel>& gold);

std::string report_csv(std::span<const EvalRow> rows);
std::string depth_buckets_csv(std::span<const DepthBucket> buckets);
// `micro` picks which mean is reported as "precision"/"recall"; both are
// always present under their own keys.
nlohmann::json aggregate_json(std::span<const AggregateRow> rows, bool micro = false);

// Orders rows by (variant, seed, shot, source_id, step).
void sort_rows(std::vector<EvalRow>& rows);

}  // namespace kpc
