#include "fedlpa/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <thread>

#include "fedlpa/errors.hpp"
#include "fedlpa/privacy.hpp"
#include "fedlpa/random.hpp"

namespace fedlpa {

namespace {

// Stream tags for derive_seed.
enum SeedStream : std::uint64_t {
  kPartitionStream = 1,
  kInitStream = 2,
  kTrainStream = 3,
  kDpDataStream = 4,
  kDpPayloadStream = 5,
  kFactorStream = 6,
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Runs fn(0..n-1) on up to `workers` threads; the first exception wins.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  const std::size_t threads = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

bool needs_kronecker(const std::vector<Method>& methods) {
  return std::any_of(methods.begin(), methods.end(), [](Method m) {
    return m == Method::kFedLpa || m == Method::kExpectationApproximation || m == Method::kOracle;
  });
}

bool needs_diagonal(const std::vector<Method>& methods) {
  return std::find(methods.begin(), methods.end(), Method::kDiagonalFisher) != methods.end();
}

bool payload_dp(const ExperimentConfig& cfg) {
  return cfg.dp && cfg.dp->target == DpTarget::kPayload;
}

void say(const ExperimentConfig& cfg, const std::string& line) {
  if (cfg.log) cfg.log(line);
}

[[noreturn]] void rethrow_in_phase(const std::string& phase) {
  try {
    throw;
  } catch (const PartitionError& e) {
    throw PartitionError(phase + ": " + e.what());
  } catch (const InputError& e) {
    throw InputError(phase + ": " + e.what());
  } catch (const SingularityError& e) {
    throw SingularityError(phase + ": " + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError(phase + ": " + e.what());
  } catch (const Error& e) {
    throw Error(phase + ": " + e.what());
  }
}

std::vector<double> sample_weights(const ClientArtifacts& clients) {
  std::vector<double> w;
  for (const auto& shard : clients.partition.shards) w.push_back(static_cast<double>(shard.size()));
  return w;
}

}  // namespace

InitMode parse_init_mode(std::string_view name) {
  if (name == "shared") return InitMode::kShared;
  if (name == "independent") return InitMode::kIndependent;
  throw InputError("unknown init mode '" + std::string(name) + "' (expected shared or independent)");
}

std::string init_mode_name(InitMode mode) {
  return mode == InitMode::kShared ? "shared" : "independent";
}

DpTarget parse_dp_target(std::string_view name) {
  if (name == "data") return DpTarget::kData;
  if (name == "payload") return DpTarget::kPayload;
  throw InputError("unknown DP target '" + std::string(name) + "' (expected data or payload)");
}

void ExperimentConfig::validate() const {
  if (partition.client_count < 1) throw InputError("client count must be >= 1");
  if (methods.empty()) throw InputError("at least one method is required");
  if (seeds.empty()) throw InputError("at least one seed is required");
  if (!(lambda >= 0.0)) throw InputError("lambda must be >= 0");
  if (train.batch_size < 1) throw InputError("batch size must be >= 1");
  if (!(train.lr > 0.0)) throw InputError("learning rate must be > 0");
  if (const auto* d = std::get_if<DirichletSplit>(&partition.mode); d && !(d->beta > 0.0)) {
    throw InputError("beta must be > 0");
  }
  if (dp) {
    if (!(dp->epsilon > 0.0)) throw InputError("DP epsilon must be > 0");
    if (dp->target == DpTarget::kPayload && !(dp->sensitivity && *dp->sensitivity > 0.0)) {
      throw InputError("payload DP needs a positive sensitivity");
    }
  }
}

std::vector<ModelParams> initial_models(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::vector<ModelParams> out;
  const std::size_t k_count = cfg.client_count();
  if (cfg.init == InitMode::kShared) {
    const ModelParams shared = init_params(cfg.architecture, derive_seed(seed, {kInitStream}));
    out.assign(k_count, shared);
  } else {
    for (std::size_t k = 0; k < k_count; ++k) {
      out.push_back(init_params(cfg.architecture, derive_seed(seed, {kInitStream, k + 1})));
    }
  }
  return out;
}

ClientArtifacts run_clients(const ExperimentConfig& cfg, const TrainTestSplit& data,
                            std::uint64_t seed, std::size_t round,
                            const std::vector<ModelParams>& inits, const Partition* partition) {
  const std::size_t k_count = cfg.client_count();
  if (inits.size() != k_count) {
    throw InputError("run_clients: " + std::to_string(inits.size()) + " initial models for " +
                     std::to_string(k_count) + " clients");
  }
  ClientArtifacts out;
  if (partition) {
    out.partition = *partition;
  } else {
    try {
      PartitionSpec spec = cfg.partition;
      spec.seed = derive_seed(seed, {kPartitionStream});
      out.partition = make_partition(data.train.labels(), data.train.class_count(), spec);
    } catch (const Error&) {
      rethrow_in_phase("partition (seed " + std::to_string(seed) + ")");
    }
    for (int c : out.partition.dropped_classes) {
      say(cfg, "warning: class " + std::to_string(c) + " assigned to no client; its samples are unused");
    }
  }

  const bool kron = needs_kronecker(cfg.methods);
  const bool diag = needs_diagonal(cfg.methods);
  out.trained.resize(k_count);
  out.local_accuracy.resize(k_count);
  std::vector<ModelParams> uploaded(k_count);
  std::vector<std::optional<ClientPayload>> payloads(k_count);
  std::vector<std::optional<DiagonalPayload>> diagonal(k_count);
  std::vector<double> train_s(k_count, 0.0);
  std::vector<double> payload_s(k_count, 0.0);

  parallel_for(k_count, cfg.workers, [&](std::size_t k) {
    const std::string phase = "client " + std::to_string(k) + " (seed " + std::to_string(seed) +
                              ", round " + std::to_string(round + 1) + ")";
    try {
      LabeledDataset local = data.train.subset(out.partition.shards[k]);
      if (cfg.dp && cfg.dp->target == DpTarget::kData) {
        local = dp_noise_data(local, cfg.dp->epsilon, derive_seed(seed, {kDpDataStream, k}));
      }
      auto t0 = Clock::now();
      out.trained[k] = train_local(inits[k], local, cfg.train,
                                   derive_seed(seed, {kTrainStream, k, round}));
      train_s[k] = seconds_since(t0);
      out.local_accuracy[k] = evaluate(out.trained[k], data.test, cfg.train.activation);

      t0 = Clock::now();
      std::optional<ClientPayload> payload;
      if (kron || payload_dp(cfg)) {
        FactorOptions fo;
        fo.lambda = cfg.lambda;
        fo.batch_size = cfg.factor_batch;
        fo.activation = cfg.train.activation;
        fo.labels = cfg.fisher_labels;
        fo.sample_seed = derive_seed(seed, {kFactorStream, k, round});
        payload = build_payload(k, out.trained[k], estimate_factors(out.trained[k], local, fo),
                                local.size());
        if (payload_dp(cfg)) {
          payload = dp_noise_payload(*payload, cfg.dp->epsilon, *cfg.dp->sensitivity,
                                     derive_seed(seed, {kDpPayloadStream, k, round}));
        }
      }
      uploaded[k] = payload ? payload->params() : out.trained[k];
      if (kron) payloads[k] = std::move(payload);
      if (diag) {
        DiagonalPrecision precision = diagonal_fisher(out.trained[k], local, cfg.lambda,
                                                      cfg.train.activation, cfg.factor_batch);
        if (payload_dp(cfg)) {
          Rng rng(derive_seed(seed, {kDpPayloadStream, k, round, 1}));
          const double scale = *cfg.dp->sensitivity / cfg.dp->epsilon;
          for (Matrix& m : precision.layers) {
            for (Eigen::Index i = 0; i < m.size(); ++i) {
              m.data()[i] = std::max(m.data()[i] + rng.laplace(scale), cfg.lambda);
            }
          }
        }
        diagonal[k] = DiagonalPayload{uploaded[k], std::move(precision)};
      }
      payload_s[k] = seconds_since(t0);
    } catch (const Error&) {
      rethrow_in_phase(phase);
    }
  });

  for (std::size_t k = 0; k < k_count; ++k) {
    if (payloads[k]) out.payloads.push_back(std::move(*payloads[k]));
    if (diagonal[k]) out.diagonal.push_back(std::move(*diagonal[k]));
    out.train_seconds += train_s[k];
    out.payload_seconds += payload_s[k];
  }
  out.uploaded = std::move(uploaded);
  return out;
}

AggregateOutcome aggregate(Method method, const ClientArtifacts& clients,
                           const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  AggregateOutcome out;
  auto kron_payloads = [&] {
    if (clients.payloads.empty()) {
      throw InputError(method_name(method) + " needs Kronecker payloads that were not built");
    }
    if (!cfg.weight_by_samples) return clients.payloads;
    double total = 0.0;
    for (const ClientPayload& p : clients.payloads) total += static_cast<double>(p.sample_count());
    std::vector<ClientPayload> scaled;
    for (const ClientPayload& p : clients.payloads) {
      scaled.push_back(p.with_scaled_factors(static_cast<double>(p.sample_count()) / total));
    }
    return scaled;
  };
  switch (method) {
    case Method::kFedAvg:
      out.model = weighted_average(clients.uploaded, sample_weights(clients));
      break;
    case Method::kFedLpa: {
      const std::vector<ClientPayload> payloads = kron_payloads();
      SolveResult r = fedlpa_solve(build_state(payloads), payloads, cfg.solver);
      out.model = std::move(r.params);
      out.trace = std::move(r.trace);
      break;
    }
    case Method::kExpectationApproximation:
      out.model = ea_solve(build_state(kron_payloads()));
      break;
    case Method::kOracle:
      out.model = oracle_solve(kron_payloads());
      break;
    case Method::kDiagonalFisher:
      if (clients.diagonal.empty()) throw InputError("diag_fisher payloads were not built");
      out.model = diag_fisher_solve(clients.diagonal);
      break;
  }
  out.seconds = seconds_since(t0);
  return out;
}

bool ExperimentReport::all_ok() const {
  return std::all_of(results.begin(), results.end(), [](const MethodResult& r) { return r.ok; });
}

std::vector<const MethodResult*> ExperimentReport::for_method(Method method) const {
  std::vector<const MethodResult*> out;
  for (const MethodResult& r : results) {
    if (r.method == method) out.push_back(&r);
  }
  return out;
}

ExperimentReport run_one_shot(const ExperimentConfig& cfg, const TrainTestSplit& data) {
  cfg.validate();
  ExperimentReport report;
  report.dataset = dataset_name(cfg.dataset);
  if (const auto* d = std::get_if<DirichletSplit>(&cfg.partition.mode)) {
    report.partition = "dir";
    report.beta_or_k = d->beta;
  } else {
    report.partition = "classes";
    report.beta_or_k =
        static_cast<double>(std::get<ClassCountSplit>(cfg.partition.mode).classes_per_client);
  }
  report.clients = cfg.client_count();
  report.epochs = cfg.train.epochs;

  for (std::uint64_t seed : cfg.seeds) {
    say(cfg, "seed " + std::to_string(seed) + ": training " + std::to_string(cfg.client_count()) +
                 " clients");
    const auto t0 = Clock::now();
    const ClientArtifacts clients = run_clients(cfg, data, seed, 0, initial_models(cfg, seed));
    SeedSummary summary;
    summary.seed = seed;
    summary.dropped_classes = clients.partition.dropped_classes;
    summary.local_accuracy = clients.local_accuracy;
    summary.train_seconds = clients.train_seconds;
    summary.payload_seconds = clients.payload_seconds;
    summary.partition_seconds = seconds_since(t0) - clients.train_seconds - clients.payload_seconds;
    const auto counts =
        shard_class_counts(clients.partition, data.train.labels(), data.train.class_count());
    for (std::size_t k = 0; k < counts.size(); ++k) {
      summary.shard_sizes.push_back(clients.partition.shards[k].size());
      summary.shard_classes.push_back(describe_shard(counts[k]));
    }
    report.seeds.push_back(std::move(summary));

    for (Method method : cfg.methods) {
      MethodResult r;
      r.method = method;
      r.seed = seed;
      r.communication = communication_cost(cfg.architecture, method);
      const auto m0 = Clock::now();
      try {
        AggregateOutcome agg = aggregate(method, clients, cfg);
        r.accuracy = evaluate(agg.model, data.test, cfg.train.activation);
        r.solver_steps = agg.trace.total_steps();
        for (const LayerTrace& t : agg.trace.layers) {
          r.layer_final_objective.push_back(t.final_objective());
        }
        r.model = std::move(agg.model);
        r.trace = std::move(agg.trace);
        r.ok = true;
      } catch (const Error& e) {
        r.error = e.what();
      }
      r.seconds = seconds_since(m0);
      say(cfg, "seed " + std::to_string(seed) + " " + method_name(method) + ": " +
                   (r.ok ? "accuracy " + std::to_string(r.accuracy) : "failed: " + r.error));
      report.results.push_back(std::move(r));
    }
  }
  return report;
}

std::vector<RoundSeries> run_multi_round(const ExperimentConfig& cfg, const TrainTestSplit& data,
                                         std::size_t rounds, Method first, Method subsequent) {
  cfg.validate();
  if (rounds < 1) throw InputError("rounds must be >= 1");
  std::vector<RoundSeries> out;
  for (std::uint64_t seed : cfg.seeds) {
    RoundSeries series{first, subsequent, seed, {}};
    ExperimentConfig round_cfg = cfg;
    round_cfg.methods = {first};
    ClientArtifacts clients = run_clients(round_cfg, data, seed, 0, initial_models(cfg, seed));
    const Partition partition = clients.partition;
    ModelParams global = aggregate(first, clients, round_cfg).model;
    series.accuracy.push_back(evaluate(global, data.test, cfg.train.activation));
    say(cfg, "seed " + std::to_string(seed) + " round 1 (" + method_name(first) +
                 "): accuracy " + std::to_string(series.accuracy.back()));
    round_cfg.methods = {subsequent};
    for (std::size_t round = 1; round < rounds; ++round) {
      const std::vector<ModelParams> inits(cfg.client_count(), global);
      clients = run_clients(round_cfg, data, seed, round, inits, &partition);
      global = aggregate(subsequent, clients, round_cfg).model;
      series.accuracy.push_back(evaluate(global, data.test, cfg.train.activation));
      say(cfg, "seed " + std::to_string(seed) + " round " + std::to_string(round + 1) + " (" +
                   method_name(subsequent) + "): accuracy " + std::to_string(series.accuracy.back()));
    }
    out.push_back(std::move(series));
  }
  return out;
}

}  // namespace fedlpa
