#include "fedlpa/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fedlpa/errors.hpp"
#include "fedlpa/random.hpp"

namespace fedlpa {

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(std::span<const int> labels,
                                                       int class_count) {
  if (class_count < 1) throw InputError("partition: class_count must be >= 1");
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(class_count));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= class_count) {
      throw InputError("partition: label " + std::to_string(labels[i]) + " at index " +
                       std::to_string(i) + " outside [0, " + std::to_string(class_count) + ")");
    }
    out[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  return out;
}

// Dirichlet(beta) proportions via normalized Gamma draws, in log space.
// Entries with eligible[k] == false are zeroed before normalizing.
std::vector<double> dirichlet(std::size_t n, double beta, Rng& rng,
                              const std::vector<bool>& eligible) {
  std::vector<double> logs(n);
  for (double& v : logs) v = rng.log_gamma_variate(beta);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    if (eligible[k]) top = std::max(top, logs[k]);
  }
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    logs[k] = eligible[k] ? std::exp(logs[k] - top) : 0.0;
    total += logs[k];
  }
  for (double& v : logs) v /= total;
  return logs;
}

void sort_shards(Partition& p) {
  for (auto& s : p.shards) std::sort(s.begin(), s.end());
}

}  // namespace

Partition partition_dirichlet(std::span<const int> labels, int class_count,
                              std::size_t client_count, double beta, std::uint64_t seed,
                              std::size_t min_size, bool cap_full_clients) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InputError("partition: beta must be > 0");
  if (client_count < 1) throw InputError("partition: client count must be >= 1");
  const std::vector<std::vector<std::size_t>> by_class = indices_by_class(labels, class_count);

  for (std::size_t attempt = 0; attempt < kMaxDirichletAttempts; ++attempt) {
    Rng rng(derive_seed(seed, {attempt}));
    Partition p;
    p.shards.resize(client_count);
    p.attempts = attempt + 1;
    for (const std::vector<std::size_t>& members : by_class) {
      std::vector<std::size_t> idx = members;
      rng.shuffle(std::span<std::size_t>(idx));
      std::vector<bool> eligible(client_count, true);
      if (cap_full_clients) {
        // Someone is always below the mean while samples remain undealt.
        const double mean = static_cast<double>(labels.size()) / static_cast<double>(client_count);
        for (std::size_t k = 0; k < client_count; ++k) {
          eligible[k] = static_cast<double>(p.shards[k].size()) < mean;
        }
      }
      const std::vector<double> share = dirichlet(client_count, beta, rng, eligible);
      const double n = static_cast<double>(idx.size());
      // Rounding leftovers go to the last eligible client, never a capped one.
      std::size_t last = client_count - 1;
      while (last > 0 && !eligible[last]) --last;
      double cumulative = 0.0;
      std::size_t begin = 0;
      for (std::size_t k = 0; k < client_count; ++k) {
        cumulative += share[k];
        std::size_t end = k == last
                              ? idx.size()
                              : std::min(idx.size(), static_cast<std::size_t>(cumulative * n));
        end = std::max(end, begin);
        p.shards[k].insert(p.shards[k].end(), idx.begin() + static_cast<std::ptrdiff_t>(begin),
                           idx.begin() + static_cast<std::ptrdiff_t>(end));
        begin = end;
      }
    }
    const bool ok = std::all_of(p.shards.begin(), p.shards.end(),
                                [&](const auto& s) { return s.size() >= min_size; });
    if (ok) {
      sort_shards(p);
      return p;
    }
  }
  throw PartitionError("Dirichlet partition: no draw gave every one of " +
                       std::to_string(client_count) + " clients at least " +
                       std::to_string(min_size) + " samples in " +
                       std::to_string(kMaxDirichletAttempts) + " attempts (beta=" +
                       std::to_string(beta) + ")");
}

Partition partition_classcount(std::span<const int> labels, int class_count,
                               std::size_t client_count, std::size_t classes_per_client,
                               std::uint64_t seed) {
  if (client_count < 1) throw InputError("partition: client count must be >= 1");
  if (classes_per_client < 1 || classes_per_client > static_cast<std::size_t>(class_count)) {
    throw InputError("partition: classes per client must be in [1, " +
                     std::to_string(class_count) + "]");
  }
  const std::vector<std::vector<std::size_t>> by_class = indices_by_class(labels, class_count);
  const auto n_classes = static_cast<std::size_t>(class_count);
  Rng rng(seed);

  std::vector<std::vector<std::size_t>> holders(n_classes);
  for (std::size_t client = 0; client < client_count; ++client) {
    std::vector<std::size_t> pool;
    const std::size_t first = client % n_classes;
    for (std::size_t c = 0; c < n_classes; ++c) {
      if (c != first) pool.push_back(c);
    }
    rng.shuffle(std::span<std::size_t>(pool));
    holders[first].push_back(client);
    for (std::size_t j = 0; j + 1 < classes_per_client; ++j) holders[pool[j]].push_back(client);
  }

  Partition p;
  p.shards.resize(client_count);
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (holders[c].empty()) {
      p.dropped_classes.push_back(static_cast<int>(c));
      continue;
    }
    std::vector<std::size_t> idx = by_class[c];
    rng.shuffle(std::span<std::size_t>(idx));
    // First (n mod h) holders get one extra sample.
    const std::size_t h = holders[c].size();
    const std::size_t base = idx.size() / h;
    const std::size_t extra = idx.size() % h;
    std::size_t begin = 0;
    for (std::size_t j = 0; j < h; ++j) {
      const std::size_t take = base + (j < extra ? 1 : 0);
      auto& shard = p.shards[holders[c][j]];
      shard.insert(shard.end(), idx.begin() + static_cast<std::ptrdiff_t>(begin),
                   idx.begin() + static_cast<std::ptrdiff_t>(begin + take));
      begin += take;
    }
  }
  sort_shards(p);
  return p;
}

Partition make_partition(std::span<const int> labels, int class_count, const PartitionSpec& spec) {
  if (const auto* d = std::get_if<DirichletSplit>(&spec.mode)) {
    return partition_dirichlet(labels, class_count, spec.client_count, d->beta, spec.seed,
                               spec.min_size, d->cap_full_clients);
  }
  const auto& c = std::get<ClassCountSplit>(spec.mode);
  return partition_classcount(labels, class_count, spec.client_count, c.classes_per_client,
                              spec.seed);
}

std::vector<std::vector<std::size_t>> shard_class_counts(const Partition& partition,
                                                         std::span<const int> labels,
                                                         int class_count) {
  std::vector<std::vector<std::size_t>> counts(
      partition.shards.size(), std::vector<std::size_t>(static_cast<std::size_t>(class_count), 0));
  for (std::size_t k = 0; k < partition.shards.size(); ++k) {
    for (std::size_t i : partition.shards[k]) {
      if (i >= labels.size()) throw InputError("partition: shard index out of range");
      ++counts[k][static_cast<std::size_t>(labels[i])];
    }
  }
  return counts;
}

std::string describe_shard(std::span<const std::size_t> class_counts) {
  std::ostringstream out;
  out << '{';
  bool first = true;
  for (std::size_t c = 0; c < class_counts.size(); ++c) {
    if (class_counts[c] == 0) continue;
    if (!first) out << ", ";
    out << c << ": " << class_counts[c];
    first = false;
  }
  out << '}';
  return out.str();
}

void write_manifest_csv(std::ostream& out, const Partition& partition,
                        std::span<const int> labels, int class_count) {
  out << "client_id,class,count\n";
  const auto counts = shard_class_counts(partition, labels, class_count);
  for (std::size_t k = 0; k < counts.size(); ++k) {
    for (std::size_t c = 0; c < counts[k].size(); ++c) {
      if (counts[k][c] > 0) out << k << ',' << c << ',' << counts[k][c] << '\n';
    }
  }
}

std::string describe_spec(const PartitionSpec& spec) {
  std::ostringstream out;
  if (const auto* d = std::get_if<DirichletSplit>(&spec.mode)) {
    out << "dir(beta=" << d->beta << (d->cap_full_clients ? "" : ", uncapped") << ")";
  } else {
    out << "#C=" << std::get<ClassCountSplit>(spec.mode).classes_per_client;
  }
  return out.str();
}

}  // namespace fedlpa
