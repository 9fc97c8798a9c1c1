#include "fedlpa/privacy.hpp"

#include <cmath>

#include "fedlpa/errors.hpp"
#include "fedlpa/random.hpp"

namespace fedlpa {

namespace {

void add_noise(Matrix& m, double scale, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += rng.laplace(scale);
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || std::isnan(v)) throw InputError(std::string(what) + " must be > 0");
}

}  // namespace

LabeledDataset dp_noise_data(const LabeledDataset& data, double epsilon, std::uint64_t seed) {
  require_positive(epsilon, "DP epsilon");
  Rng rng(seed);
  Matrix features = data.features();
  add_noise(features, 1.0 / epsilon, rng);
  return LabeledDataset(std::move(features), data.labels(), data.class_count());
}

ClientPayload dp_noise_payload(const ClientPayload& payload, double epsilon, double sensitivity,
                               std::uint64_t seed) {
  require_positive(epsilon, "DP epsilon");
  require_positive(sensitivity, "DP sensitivity");
  const double scale = sensitivity / epsilon;
  Rng rng(seed);
  std::vector<Matrix> layers = payload.params().layers();
  std::vector<LayerPosterior> posteriors = payload.posteriors();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    add_noise(layers[l], scale, rng);
    Matrix a = posteriors[l].a_factor.matrix();
    Matrix b = posteriors[l].b_factor.matrix();
    add_noise(a, scale, rng);
    add_noise(b, scale, rng);
    posteriors[l].a_factor = SymmetricPsdMatrix::from_symmetric_part(a);
    posteriors[l].b_factor = SymmetricPsdMatrix::from_symmetric_part(b);
  }
  return build_payload(payload.client_id(),
                       ModelParams(payload.architecture(), std::move(layers)),
                       std::move(posteriors), payload.sample_count());
}

}  // namespace fedlpa
