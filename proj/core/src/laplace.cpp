#include "fedlpa/laplace.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedlpa/errors.hpp"
#include "fedlpa/random.hpp"

namespace fedlpa {

namespace {

constexpr double kTraceFloor = 1e-12;

template <typename Visit>
void for_each_batch(const LabeledDataset& data, std::size_t batch_size, Visit&& visit) {
  const std::size_t step = std::max<std::size_t>(batch_size, 1);
  for (std::size_t start = 0; start < data.size(); start += step) {
    const auto count = static_cast<Eigen::Index>(std::min(step, data.size() - start));
    visit(data.features().middleRows(static_cast<Eigen::Index>(start), count),
          std::span<const int>(data.labels().data() + start, static_cast<std::size_t>(count)));
  }
}

std::vector<int> sample_labels(const ModelParams& params, const Matrix& inputs,
                               Activation activation, Rng& rng) {
  const Matrix p = softmax(forward(params, inputs, activation).logits);
  std::vector<int> labels(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double u = rng.uniform();
    double cumulative = 0.0;
    Eigen::Index c = 0;
    for (; c + 1 < p.cols(); ++c) {
      cumulative += p(i, c);
      if (u < cumulative) break;
    }
    labels[static_cast<std::size_t>(i)] = static_cast<int>(c);
  }
  return labels;
}

}  // namespace

std::vector<FactorMoments> collect_moments(const ModelParams& params, const LabeledDataset& data,
                                           const FactorOptions& options) {
  if (data.empty()) throw InputError("collect_moments: empty dataset");
  const std::size_t n_layers = params.layer_count();
  std::vector<Matrix> a_sum(n_layers);
  std::vector<Matrix> b_sum(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto cols = static_cast<Eigen::Index>(params.architecture().layer_cols(l));
    const auto rows = static_cast<Eigen::Index>(params.architecture().layer_rows(l));
    a_sum[l] = Matrix::Zero(cols, cols);
    b_sum[l] = Matrix::Zero(rows, rows);
  }
  Rng rng(options.sample_seed);
  for_each_batch(data, options.batch_size, [&](const auto& inputs, std::span<const int> labels) {
    const Matrix batch = inputs;
    std::vector<int> sampled;
    if (options.labels == FisherLabels::kModelSampled) {
      sampled = sample_labels(params, batch, options.activation, rng);
      labels = sampled;
    }
    const BackwardResult br = backward(params, batch, labels, options.activation);
    for (std::size_t l = 0; l < n_layers; ++l) {
      const Matrix& a = br.trace.activations[l];
      const Matrix& b = br.trace.preact_grads[l];
      a_sum[l].noalias() += a.transpose() * a;
      b_sum[l].noalias() += b.transpose() * b;
    }
  });
  const double inv_n = 1.0 / static_cast<double>(data.size());
  std::vector<FactorMoments> out;
  out.reserve(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    out.push_back({SymmetricPsdMatrix::from_symmetric_part(a_sum[l] * inv_n),
                   SymmetricPsdMatrix::from_symmetric_part(b_sum[l] * inv_n)});
  }
  return out;
}

double damping_split(const FactorMoments& moments, DampingSplit split) {
  if (split == DampingSplit::kUnit) return 1.0;
  const double a_trace = moments.activation.trace();
  const double b_trace = moments.gradient.trace();
  if (a_trace <= kTraceFloor || b_trace <= kTraceFloor) return 1.0;
  const double a_mean = a_trace / static_cast<double>(moments.activation.dim());
  const double b_mean = b_trace / static_cast<double>(moments.gradient.dim());
  return std::sqrt(a_mean / b_mean);
}

LayerPosterior damp(const FactorMoments& moments, double lambda, DampingSplit split) {
  if (lambda < 0.0) throw InputError("lambda must be >= 0");
  const double pi = damping_split(moments, split);
  const double root = std::sqrt(lambda);
  return {moments.activation.plus_diagonal(pi * root),
          moments.gradient.plus_diagonal(root / pi), pi, lambda};
}

std::vector<LayerPosterior> estimate_factors(const ModelParams& params,
                                             const LabeledDataset& data,
                                             const FactorOptions& options) {
  if (options.lambda < 0.0) throw InputError("lambda must be >= 0");
  if (data.empty()) throw InputError("estimate_factors: empty dataset");
  std::vector<LayerPosterior> out;
  for (const FactorMoments& m : collect_moments(params, data, options)) {
    out.push_back(damp(m, options.lambda, options.split));
  }
  return out;
}

ClientPayload build_payload(std::uint64_t client_id, ModelParams params,
                            std::vector<LayerPosterior> posteriors, std::uint64_t sample_count) {
  if (sample_count < 1) throw InputError("payload sample_count must be >= 1");
  if (posteriors.size() != params.layer_count()) {
    throw DimensionError("payload: " + std::to_string(posteriors.size()) +
                         " posteriors for " + std::to_string(params.layer_count()) + " layers");
  }
  const MlpArchitecture& arch = params.architecture();
  for (std::size_t l = 0; l < posteriors.size(); ++l) {
    if (posteriors[l].a_factor.dim() != arch.layer_cols(l) ||
        posteriors[l].b_factor.dim() != arch.layer_rows(l)) {
      throw DimensionError("payload layer " + std::to_string(l) + ": factors " +
                           std::to_string(posteriors[l].a_factor.dim()) + "/" +
                           std::to_string(posteriors[l].b_factor.dim()) + " vs weights " +
                           std::to_string(arch.layer_rows(l)) + "x" +
                           std::to_string(arch.layer_cols(l)));
    }
  }
  ClientPayload p;
  p.client_id_ = client_id;
  p.params_ = std::move(params);
  p.posteriors_ = std::move(posteriors);
  p.sample_count_ = sample_count;
  return p;
}

ClientPayload ClientPayload::with_scaled_factors(double weight) const {
  std::vector<LayerPosterior> scaled = posteriors_;
  for (LayerPosterior& lp : scaled) {
    lp.a_factor = lp.a_factor.scaled(weight);
    lp.b_factor = lp.b_factor.scaled(weight);
  }
  return build_payload(client_id_, params_, std::move(scaled), sample_count_);
}

DiagonalPrecision diagonal_fisher(const ModelParams& params, const LabeledDataset& data,
                                  double lambda, Activation activation, std::size_t batch_size) {
  if (data.empty()) throw InputError("diagonal_fisher: empty dataset");
  if (lambda < 0.0) throw InputError("lambda must be >= 0");
  DiagonalPrecision out;
  for (const Matrix& w : params.layers()) out.layers.push_back(Matrix::Zero(w.rows(), w.cols()));
  for_each_batch(data, batch_size, [&](const auto& inputs, std::span<const int> labels) {
    const BackwardResult br = backward(params, Matrix(inputs), labels, activation);
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
      // The per-sample gradient of layer l is b a^T, so its square is (b*b)(a*a)^T.
      const Matrix a2 = br.trace.activations[l].cwiseAbs2();
      const Matrix b2 = br.trace.preact_grads[l].cwiseAbs2();
      out.layers[l].noalias() += b2.transpose() * a2;
    }
  });
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (Matrix& m : out.layers) m = (m * inv_n).array() + lambda;
  return out;
}

}  // namespace fedlpa
