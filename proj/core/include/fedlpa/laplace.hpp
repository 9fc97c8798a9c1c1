#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedlpa/dataset.hpp"
#include "fedlpa/linalg.hpp"
#include "fedlpa/nn.hpp"

namespace fedlpa {

// Layer-wise Kronecker-factored precision A (x) B of one client's Laplace
// posterior, with
//   A = E[a a^T] + pi * sqrt(lambda) * I      (dim s_{l-1}+1)
//   B = E[b b^T] + sqrt(lambda) / pi * I      (dim s_l)
struct LayerPosterior {
  SymmetricPsdMatrix a_factor;
  SymmetricPsdMatrix b_factor;
  double pi = 1.0;
  double lambda = 0.0;

  friend bool operator==(const LayerPosterior&, const LayerPosterior&) = default;
};

// Undamped second moments of one layer.
struct FactorMoments {
  SymmetricPsdMatrix activation;  // E[a a^T]
  SymmetricPsdMatrix gradient;    // E[b b^T]
};

enum class FisherLabels {
  kEmpirical,     // true labels
  kModelSampled,  // labels drawn from the model's predictive distribution
};

enum class DampingSplit {
  kNormBalanced,  // pi = sqrt((tr A / dim A) / (tr B / dim B))
  kUnit,          // pi = 1
};

struct FactorOptions {
  double lambda = 0.001;
  std::size_t batch_size = 256;
  FisherLabels labels = FisherLabels::kEmpirical;
  DampingSplit split = DampingSplit::kNormBalanced;
  Activation activation = Activation::kRelu;
  std::uint64_t sample_seed = 0;  // used by kModelSampled only
};

// One full pass over `data` accumulating per-sample means of a a^T and b b^T.
// Throws InputError on an empty dataset.
std::vector<FactorMoments> collect_moments(const ModelParams& params, const LabeledDataset& data,
                                           const FactorOptions& options = {});

double damping_split(const FactorMoments& moments, DampingSplit split);

LayerPosterior damp(const FactorMoments& moments, double lambda, DampingSplit split);

// collect_moments followed by damp for every layer. Throws InputError on an
// empty dataset or a negative lambda.
std::vector<LayerPosterior> estimate_factors(const ModelParams& params,
                                             const LabeledDataset& data,
                                             const FactorOptions& options = {});

// Everything one client uploads: M_l, A_l, B_l per layer plus |D_k|.
class ClientPayload {
 public:
  ClientPayload() = default;

  std::uint64_t client_id() const { return client_id_; }
  const ModelParams& params() const { return params_; }
  const std::vector<LayerPosterior>& posteriors() const { return posteriors_; }
  const LayerPosterior& posterior(std::size_t l) const { return posteriors_[l]; }
  std::uint64_t sample_count() const { return sample_count_; }
  const MlpArchitecture& architecture() const { return params_.architecture(); }

  // Multiplies every A and B factor by `weight` (sample-count weighting).
  ClientPayload with_scaled_factors(double weight) const;

  friend bool operator==(const ClientPayload&, const ClientPayload&) = default;

 private:
  friend ClientPayload build_payload(std::uint64_t, ModelParams, std::vector<LayerPosterior>,
                                     std::uint64_t);
  std::uint64_t client_id_ = 0;
  ModelParams params_;
  std::vector<LayerPosterior> posteriors_;
  std::uint64_t sample_count_ = 0;
};

// Throws DimensionError if the factor dims disagree with the parameters and
// InputError if sample_count is zero.
ClientPayload build_payload(std::uint64_t client_id, ModelParams params,
                            std::vector<LayerPosterior> posteriors, std::uint64_t sample_count);

// Per-parameter precision (1/|D|) sum_s g_s^2 + lambda, laid out like the
// layer matrices.
struct DiagonalPrecision {
  std::vector<Matrix> layers;
};

DiagonalPrecision diagonal_fisher(const ModelParams& params, const LabeledDataset& data,
                                  double lambda, Activation activation = Activation::kRelu,
                                  std::size_t batch_size = 256);

struct DiagonalPayload {
  ModelParams params;
  DiagonalPrecision precision;
};

}  // namespace fedlpa
