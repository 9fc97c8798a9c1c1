#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedlpa/dataset.hpp"
#include "fedlpa/linalg.hpp"

namespace fedlpa {

// Layer widths [s0, s1, ..., sL]; sL is the number of classes.
class MlpArchitecture {
 public:
  MlpArchitecture() = default;
  explicit MlpArchitecture(std::vector<std::size_t> widths);
  // "784-256-64-10"
  static MlpArchitecture parse(std::string_view dashed);

  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t layer_count() const { return widths_.size() - 1; }
  std::size_t input_width() const { return widths_.front(); }
  std::size_t class_count() const { return widths_.back(); }

  // Homogeneous weight matrix of layer l (0-based) is s_{l+1} x (s_l + 1).
  std::size_t layer_rows(std::size_t l) const { return widths_[l + 1]; }
  std::size_t layer_cols(std::size_t l) const { return widths_[l] + 1; }

  std::size_t parameter_count() const;
  std::string to_string() const;

  friend bool operator==(const MlpArchitecture&, const MlpArchitecture&) = default;

 private:
  std::vector<std::size_t> widths_;
};

// Per-layer weights with the bias folded in as the last column.
class ModelParams {
 public:
  ModelParams() = default;
  // Throws DimensionError on a shape mismatch, InputError on non-finite values.
  ModelParams(MlpArchitecture arch, std::vector<Matrix> layers);
  static ModelParams zeros(const MlpArchitecture& arch);

  const MlpArchitecture& architecture() const { return arch_; }
  std::size_t layer_count() const { return layers_.size(); }
  const Matrix& layer(std::size_t l) const { return layers_[l]; }
  const std::vector<Matrix>& layers() const { return layers_; }
  // In-place updates; callers must preserve shapes.
  std::vector<Matrix>& mutable_layers() { return layers_; }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.arch_ == b.arch_ && a.layers_ == b.layers_;
  }

 private:
  MlpArchitecture arch_;
  std::vector<Matrix> layers_;
};

enum class Activation { kRelu, kTanh };

Activation parse_activation(std::string_view name);

// Fan-in scaled uniform weights U(-1/sqrt(s_{l-1}), 1/sqrt(s_{l-1})), zero
// biases. Deterministic in `seed`.
ModelParams init_params(const MlpArchitecture& arch, std::uint64_t seed);

struct ForwardPass {
  Matrix logits;
  // Homogeneous input of each layer: batch x (s_{l-1}+1), last column all ones.
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre_activations;
};

// The nonlinearity is applied after every layer except the last.
ForwardPass forward(const ModelParams& params, const Matrix& inputs,
                    Activation activation = Activation::kRelu);

// Row-wise, max-shifted.
Matrix softmax(const Matrix& logits);

// Per-sample raw material of the Kronecker factors.
struct BatchTrace {
  std::vector<Matrix> activations;   // a_hat_{l-1}, batch x (s_{l-1}+1)
  std::vector<Matrix> preact_grads;  // b_hat_l, batch x s_l, d(-log p(y|x))/dz_l
  Vector losses;                     // -log p(y|x) per sample
};

struct BackwardResult {
  std::vector<Matrix> gradients;  // batch mean, same shapes as the layers
  BatchTrace trace;
  double mean_loss() const { return trace.losses.mean(); }
};

// Softmax cross-entropy gradients. Throws InputError for labels outside
// [0, s_L) and DimensionError for a wrong input width.
BackwardResult backward(const ModelParams& params, const Matrix& inputs,
                        std::span<const int> labels, Activation activation = Activation::kRelu);

enum class Optimizer { kSgd, kAdam };

Optimizer parse_optimizer(std::string_view name);

struct TrainConfig {
  std::size_t epochs = 200;
  double lr = 0.001;
  std::size_t batch_size = 64;
  double momentum = 0.0;
  Optimizer optimizer = Optimizer::kSgd;
  Activation activation = Activation::kRelu;
};

struct TrainLog {
  std::vector<double> epoch_losses;  // mean minibatch loss per epoch
};

// Mini-batch training with a fresh shuffle each epoch drawn from `seed`.
// Throws InputError on an empty dataset.
ModelParams train_local(const ModelParams& init, const LabeledDataset& data,
                        const TrainConfig& config, std::uint64_t seed,
                        TrainLog* log = nullptr);

// Argmax class per sample, ties to the lowest class index.
std::vector<int> predict(const ModelParams& params, const Matrix& inputs,
                         Activation activation = Activation::kRelu);

// Fraction of argmax-correct predictions. Throws InputError on empty data.
double evaluate(const ModelParams& params, const LabeledDataset& data,
                Activation activation = Activation::kRelu);

}  // namespace fedlpa
