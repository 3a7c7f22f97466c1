#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bfel/adversary.h"
#include "bfel/compression.h"
#include "bfel/consensus.h"
#include "bfel/dataset.h"
#include "bfel/ledger.h"
#include "bfel/model.h"
#include "bfel/netsim.h"

namespace bfel {

enum class Scenario { kFel, kFelGcs, kBfelGcs };
std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

struct FederationConfig {
  std::uint32_t tasks = 2;
  std::uint32_t workers_per_task = 10;
  std::uint32_t miners_per_task = 11;
  std::uint32_t candidate_miners = 22;
  std::uint32_t votes_per_worker = 3;
  std::uint32_t buyers = 1;
  std::uint64_t deposit = 100;
  std::uint64_t min_deposit = 10;
  std::uint64_t model_price = 1000;
  std::uint32_t anchor_period = 5;
  std::uint32_t slash_rounds = 3;
};

struct DatasetConfig {
  std::string source = "blobs";  // blobs | csv | mnist
  BlobsSpec blobs;
  std::string path;    // csv
  std::string images;  // mnist IDX images
  std::string labels;  // mnist IDX labels
  std::size_t limit = 10000;
};

struct TrainingConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 128;
  std::uint32_t epochs = 1000;  // global rounds
  ModelKind model = ModelKind::kMlp;
  std::size_t hidden = 64;
  double output_init_std = 0.01;
  DatasetConfig dataset;
  double train_fraction = 0.7;
  std::size_t verification_samples = 500;
};

struct ExperimentConfig {
  Scenario scenario = Scenario::kBfelGcs;
  std::uint64_t seed = 1;
  FederationConfig federation;
  TrainingConfig training;
  CompressionConfig compression;
  double theta = 0.05;
  CostModel cost;
  AttackConfig attack;
  std::vector<std::string> fault_rules;  // fault-script lines

  // Throws ConfigError naming the offending field.
  void validate() const;
  FaultScript fault_script() const;
};

// Strict parser: unknown keys, wrong types and out-of-range values raise
// ConfigError. Missing keys take their defaults. A relative `fault_script`
// path resolves against `base_dir`.
ExperimentConfig parse_config(const std::string& json_text,
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
// Canonical form; parse_config(config_to_json(c)) reproduces c.
std::string config_to_json(const ExperimentConfig& config);
// Sets a dotted config path (or the alias `rho`) to a JSON literal.
ExperimentConfig with_override(const ExperimentConfig& config, const std::string& key,
                               const std::string& json_value);

// Everything deterministic about one task that replay needs.
struct TaskData {
  ModelSpec spec;
  Dataset train;
  Dataset test;
  Dataset verification;
  std::vector<Dataset> shards;  // per worker, before any label flip
  std::vector<std::uint64_t> batch_seeds;
  std::vector<std::string> worker_ids;
  ModelParameters initial;
};

Dataset load_source_dataset(const ExperimentConfig& config, std::uint32_t task);
TaskData build_task_data(const ExperimentConfig& config, std::uint32_t task);
std::string task_prefix(std::uint32_t task);  // "t1-"
std::string training_chain_id(std::uint32_t task);

struct MetricsRow {
  std::uint32_t task = 1;
  std::uint32_t round = 0;
  double global_test_accuracy = 0.0;
  std::uint64_t bytes_this_round = 0;
  std::uint64_t cumulative_bytes = 0;
  double compression_ratio = 0.0;
  double exposure_ratio = 0.0;
  std::uint32_t qualified_count = 0;
  std::uint32_t slashed_count = 0;
  std::int64_t simulated_time_ms = 0;
};

std::string metrics_to_csv(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> metrics_from_csv(const std::string& text);

// Per-round detail kept in memory for oracles.
struct RoundLog {
  std::uint32_t task = 1;
  std::uint32_t round = 0;
  ModelParameters global_before;
  std::vector<LocalUpdate> updates;  // all received, ascending worker id
  bool committed = false;
  std::vector<std::string> qualified;  // ids in the committed block / aggregate
  std::vector<std::string> leaders;    // one per attempt
  std::vector<std::string> slashed;    // slashed during this round
};

struct TaskResult {
  std::uint32_t task = 1;
  double final_accuracy = 0.0;
  Digest final_model{};
  ModelParameters final_params;
  std::int64_t simulated_time_ms = 0;
  std::uint64_t transmitted_entries = 0;
  std::uint64_t worker_rounds = 0;
  std::uint32_t committed_rounds = 0;
  std::vector<std::string> poisoned_workers;
  std::vector<std::string> byzantine_miners;
  std::vector<std::string> slashed_miners;
  std::size_t poisoned_committed = 0;
};

struct RunResult {
  ExperimentConfig config;
  std::vector<MetricsRow> metrics;
  std::vector<TaskResult> tasks;
  std::vector<TraceRecord> trace;
  std::vector<Chain> chains;  // training chains, then main, then trading
  std::vector<RoundLog> rounds;
  std::string authority_json;
  double final_accuracy = 0.0;  // mean over tasks
  std::uint64_t total_bytes = 0;
  std::uint64_t settlement_bytes = 0;
  std::int64_t simulated_time_ms = 0;
  double compression_ratio = 0.0;
  double exposure_ratio = 0.0;
  Digest trace_digest{};

  std::string summary_line() const;
  std::string summary_json() const;
};

struct RunOptions {
  bool keep_round_logs = false;
};

// Executes the scenario in the event simulator. Throws ConfigError,
// InputError (dataset) or FederationHalt.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});
// Writes config.json, metrics.csv, trace.csv, summary.json, and for ledger
// scenarios chains/ and authority.json.
void write_artifacts(const RunResult& result, const std::filesystem::path& run_dir);

struct SweepRow {
  std::string value;
  double final_accuracy = 0.0;
  double compression_ratio = 0.0;
  double exposure_ratio = 0.0;
  std::uint64_t total_bytes = 0;
  std::int64_t simulated_time_ms = 0;
};

std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::string& parameter,
                            const std::vector<std::string>& values,
                            const std::filesystem::path& out_dir);
std::string sweep_to_csv(const std::string& parameter, const std::vector<SweepRow>& rows);

struct VerifyCheck {
  std::string name;
  bool ok = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  bool ok() const;
  std::string to_text() const;
};

struct VerifyOptions {
  // Skip model replay and accuracy recomputation.
  bool fast = false;
};

VerifyReport verify_artifacts(const std::filesystem::path& run_dir,
                              const VerifyOptions& options = {});

}  // namespace bfel
