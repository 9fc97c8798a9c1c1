#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedlpa/aggregate.hpp"
#include "fedlpa/dataset.hpp"
#include "fedlpa/laplace.hpp"
#include "fedlpa/nn.hpp"
#include "fedlpa/partition.hpp"

namespace fedlpa {

enum class InitMode {
  kShared,       // every client starts from the same parameters
  kIndependent,  // one seeded draw per client
};

InitMode parse_init_mode(std::string_view name);
std::string init_mode_name(InitMode mode);

enum class DpTarget { kData, kPayload };

DpTarget parse_dp_target(std::string_view name);

struct DpSettings {
  double epsilon = 8.0;
  DpTarget target = DpTarget::kData;
  // Required for kPayload; there is no default bound on parameter sensitivity.
  std::optional<double> sensitivity;
};

struct ExperimentConfig {
  DatasetId dataset = DatasetId::kFashionMnist;
  MlpArchitecture architecture = MlpArchitecture({784, 256, 64, 10});
  // client_count lives here; the seed is replaced per experiment seed.
  PartitionSpec partition;
  TrainConfig train;
  double lambda = 0.001;
  std::size_t factor_batch = 256;
  FisherLabels fisher_labels = FisherLabels::kEmpirical;
  // Scale each client's A and B by its share of the samples before summing.
  bool weight_by_samples = false;
  SolverConfig solver;
  std::vector<Method> methods = {Method::kFedLpa, Method::kFedAvg};
  InitMode init = InitMode::kShared;
  std::optional<DpSettings> dp;
  std::vector<std::uint64_t> seeds = {0};
  std::size_t workers = 1;
  // Progress lines; silent when empty.
  std::function<void(const std::string&)> log;

  std::size_t client_count() const { return partition.client_count; }
  // Throws InputError on an unusable combination.
  void validate() const;
};

// Everything the clients produce for one seed and round.
struct ClientArtifacts {
  Partition partition;
  std::vector<ModelParams> trained;
  // Parameters as sent to the server; noised copies of `trained` under payload DP.
  std::vector<ModelParams> uploaded;
  std::vector<ClientPayload> payloads;      // when a Kronecker method is requested
  std::vector<DiagonalPayload> diagonal;    // when diag_fisher is requested
  std::vector<double> local_accuracy;       // each local model on the test set
  double train_seconds = 0.0;
  double payload_seconds = 0.0;
};

// Shards (or reuses `partition`), trains every client from `inits` (one per
// client) and builds the payloads the configured methods need. Clients run on
// cfg.workers threads; results do not depend on the thread count.
ClientArtifacts run_clients(const ExperimentConfig& cfg, const TrainTestSplit& data,
                            std::uint64_t seed, std::size_t round,
                            const std::vector<ModelParams>& inits,
                            const Partition* partition = nullptr);

// Starting parameters of each client for round 1.
std::vector<ModelParams> initial_models(const ExperimentConfig& cfg, std::uint64_t seed);

struct AggregateOutcome {
  ModelParams model;
  SolverTrace trace;  // fedlpa only
  double seconds = 0.0;
};

AggregateOutcome aggregate(Method method, const ClientArtifacts& clients,
                           const ExperimentConfig& cfg);

struct MethodResult {
  Method method = Method::kFedAvg;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;  // set when !ok
  double accuracy = 0.0;
  std::size_t solver_steps = 0;
  std::vector<double> layer_final_objective;
  SolverTrace trace;  // fedlpa only
  CommunicationCost communication;
  double seconds = 0.0;  // aggregation + evaluation
  ModelParams model;
};

struct SeedSummary {
  std::uint64_t seed = 0;
  std::vector<std::size_t> shard_sizes;
  std::vector<std::string> shard_classes;
  std::vector<int> dropped_classes;
  std::vector<double> local_accuracy;
  double partition_seconds = 0.0;
  double train_seconds = 0.0;
  double payload_seconds = 0.0;
};

struct ExperimentReport {
  std::string dataset;
  std::string partition;   // "dir" or "classes"
  double beta_or_k = 0.0;
  std::size_t clients = 0;
  std::size_t epochs = 0;
  std::vector<MethodResult> results;  // seed-major, methods in config order
  std::vector<SeedSummary> seeds;

  bool all_ok() const;
  std::vector<const MethodResult*> for_method(Method method) const;
};

// Shard, train, upload, aggregate with every configured method and evaluate,
// once per seed. Deterministic in the config. Aggregator failures are recorded
// per (method, seed); client-side failures propagate with the phase named.
ExperimentReport run_one_shot(const ExperimentConfig& cfg, const TrainTestSplit& data);

struct RoundSeries {
  Method first_method = Method::kFedLpa;
  Method subsequent_method = Method::kFedAvg;
  std::uint64_t seed = 0;
  std::vector<double> accuracy;  // one per completed round
};

// Round 1 aggregates with `first`; later rounds start every client from the
// previous global model, retrain on the same shards and aggregate with
// `subsequent`. Round 1 reproduces run_one_shot exactly.
std::vector<RoundSeries> run_multi_round(const ExperimentConfig& cfg, const TrainTestSplit& data,
                                         std::size_t rounds, Method first, Method subsequent);

}  // namespace fedlpa
