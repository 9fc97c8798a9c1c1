#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace fedlpa {

// Per class, client shares come from one Dirichlet(beta, ..., beta) draw.
struct DirichletSplit {
  double beta = 0.5;
  // Clients already holding >= N/K samples get no share of later classes
  // (classes are dealt in label order). Keeps shard sizes comparable, as in
  // the usual non-IID benchmark code.
  bool cap_full_clients = true;
};

// Every client holds samples of k classes.
struct ClassCountSplit {
  std::size_t classes_per_client = 2;
};

struct PartitionSpec {
  std::variant<DirichletSplit, ClassCountSplit> mode = DirichletSplit{};
  std::size_t client_count = 10;
  std::uint64_t seed = 0;
  std::size_t min_size = 1;  // Dirichlet only
};

struct Partition {
  // Ascending sample indices per client.
  std::vector<std::vector<std::size_t>> shards;
  // Classes no client was assigned to (#C=k only). Their samples are unused.
  std::vector<int> dropped_classes;
  std::size_t attempts = 1;
};

inline constexpr std::size_t kMaxDirichletAttempts = 100;

// Resamples the whole draw with a fresh sub-seed while any client ends up
// with fewer than `min_size` samples. Throws PartitionError after
// kMaxDirichletAttempts failures, InputError on beta <= 0 or K == 0.
Partition partition_dirichlet(std::span<const int> labels, int class_count,
                              std::size_t client_count, double beta, std::uint64_t seed,
                              std::size_t min_size = 1, bool cap_full_clients = false);

// Client i gets class i mod C plus k-1 further distinct random classes; each
// class is then split near-equally among the clients holding it.
// Throws InputError unless 1 <= k <= class_count and K >= 1.
Partition partition_classcount(std::span<const int> labels, int class_count,
                               std::size_t client_count, std::size_t classes_per_client,
                               std::uint64_t seed);

Partition make_partition(std::span<const int> labels, int class_count, const PartitionSpec& spec);

// counts[client][class]
std::vector<std::vector<std::size_t>> shard_class_counts(const Partition& partition,
                                                         std::span<const int> labels,
                                                         int class_count);

// "{4: 2, 5: 12}" style listing of one client's non-zero class counts.
std::string describe_shard(std::span<const std::size_t> class_counts);

// client_id,class,count with one row per non-zero count.
void write_manifest_csv(std::ostream& out, const Partition& partition,
                        std::span<const int> labels, int class_count);

std::string describe_spec(const PartitionSpec& spec);

}  // namespace fedlpa
