// SPDX-License-Identifier: Apache-2.0
//
// Accuracy metrics and the multi-seed experiment runner.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "semlink/common.hpp"
#include "semlink/linking.hpp"
#include "semlink/seq2seq.hpp"

namespace semlink::eval {

/// Positions 0..max(|pred|,|gold|)-1 are compared; a position matches only
/// when both sides hold the same token there. Score = matches / max length.
double token_accuracy(const Tokens& pred, const Tokens& gold);

/// 1 iff the sequences are identical, length included.
double sequence_accuracy(const Tokens& pred, const Tokens& gold);

struct Scores {
  double token_acc = 0.0;
  double seq_acc = 0.0;
  std::size_t count = 0;
};

/// Dataset-level means. Throws Usage on a size mismatch or an empty
/// reference sequence.
Scores score(const std::vector<Tokens>& predictions, const std::vector<Tokens>& gold);

/// Metric definitions written at the top of every report.
extern const char* const kTokenAccuracyDefinition;
extern const char* const kSequenceAccuracyDefinition;

enum class Dataset { Scan, Sql };
enum class PlanScheme { None, Inductive, Deductive, EntityAug };
enum class Protocol { Linking, Pool };

struct ExperimentPlan {
  std::string id = "plan";
  Dataset dataset = Dataset::Scan;
  std::string corpus;  // text-to-SQL corpus file, Sql only
  std::string preset;  // geo | adv, Sql only
  PlanScheme scheme = PlanScheme::Inductive;
  linking::Level level = linking::Level::Standard;
  Protocol protocol = Protocol::Linking;
  std::size_t num_primitives = 4;
  std::size_t variants_per_primitive = 10;
  std::size_t samples_per_variant = linking::kAllSamples;  // pool protocol k
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
  /// Pool protocol at k = 1: these variants are taught by their variant rule
  /// alone instead of a sampled composition.
  std::vector<std::string> rule_variants;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  nn::ModelConfig model = nn::ModelConfig::desk();
  std::size_t eval_subsample = 5000;  // 0 evaluates the full test set
  std::uint64_t eval_seed = 0;
  std::string output = "runs";

  /// Throws Usage on a violated invariant.
  void validate() const;

  std::string to_json() const;
  /// Keys absent from `text` keep the values of `base`. "model" overlays the
  /// desk configuration (or the preset it names).
  static ExperimentPlan merge_json(ExperimentPlan base, const std::string& text);
  static ExperimentPlan from_json(const std::string& text);
};

/// Sweep file: {"defaults": {...}, "plans": [{...}, ...]}; each plan
/// overlays the defaults. A bare JSON array of plans is also accepted.
std::vector<ExperimentPlan> parse_sweep(const std::string& text);
std::vector<ExperimentPlan> load_sweep(const std::filesystem::path& path);
ExperimentPlan load_plan(const std::filesystem::path& path);

struct PreparedData {
  std::vector<Sample> train;
  std::vector<Sample> test;      // full test set
  std::vector<Sample> eval_set;  // seeded subsample of test, or all of it
  std::string meta_json;         // builder counts
};

/// Builds the train/test data a plan describes. Deterministic.
PreparedData prepare(const ExperimentPlan& plan);

struct SeedRun {
  std::uint64_t seed = 0;
  nn::MetricsRecord test;   // evaluation on the eval set; loss is gold-fed
  double train_loss = 0.0;  // last epoch
  double train_seq_acc = 0.0;  // greedy, on up to eval_subsample training samples
  double wall_clock_s = 0.0;
};

struct AggregateReport {
  ExperimentPlan plan;
  std::vector<SeedRun> runs;
  double mean_token_acc = 0.0, std_token_acc = 0.0;
  double mean_seq_acc = 0.0, std_seq_acc = 0.0;
  std::size_t train_size = 0, test_size = 0, eval_size = 0;
  std::string data_meta;  // JSON
  double wall_clock_s = 0.0;

  /// Deterministic report body, numbers at 4 decimals. Wall-clock and the
  /// output directory are kept out of it; see timing_json().
  std::string to_json() const;
  std::string timing_json() const;
};

/// Rounds to 4 decimal places.
double round4(double x);

/// Mean and sample standard deviation (0 for a single value).
std::pair<double, double> mean_std(const std::vector<double>& xs);

using Progress = std::function<void(const std::string&)>;

/// Trains one model per seed, evaluates, writes under <output>/<id>/:
/// train.tsv, eval.tsv, seed_<s>.ckpt, seed_<s>.pred.tsv,
/// seed_<s>.metrics.jsonl, report.json and timing.json.
/// Errors are rethrown tagged with the failing seed.
AggregateReport run_experiment(const ExperimentPlan& plan, const Progress& progress = {});

struct SweepOutcome {
  std::string plan_id;
  std::optional<AggregateReport> report;
  std::string error;  // empty on success
  ErrorKind error_kind = ErrorKind::Usage;
};

/// Runs every plan (up to `jobs` at once) and writes `table_path` (CSV) and,
/// when any plan failed, a failures.json beside it. Successful plans are
/// always reported.
std::vector<SweepOutcome> sweep(const std::vector<ExperimentPlan>& plans, int jobs,
                                const std::filesystem::path& table_path,
                                const Progress& progress = {});

std::string sweep_table_csv(const std::vector<SweepOutcome>& outcomes);

}  // namespace semlink::eval
