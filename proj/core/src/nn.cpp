#include "fedlpa/nn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "fedlpa/errors.hpp"
#include "fedlpa/random.hpp"

namespace fedlpa {

MlpArchitecture::MlpArchitecture(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2) {
    throw InputError("architecture needs at least an input and an output width");
  }
  for (std::size_t w : widths_) {
    if (w < 1) throw InputError("architecture widths must be >= 1");
  }
}

MlpArchitecture MlpArchitecture::parse(std::string_view dashed) {
  std::vector<std::size_t> widths;
  std::size_t start = 0;
  while (start <= dashed.size()) {
    const std::size_t end = std::min(dashed.find('-', start), dashed.size());
    const std::string_view token = dashed.substr(start, end - start);
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (token.empty() || ec != std::errc() || ptr != token.data() + token.size()) {
      throw InputError("bad architecture '" + std::string(dashed) +
                       "', expected dash-separated widths such as 784-256-64-10");
    }
    widths.push_back(value);
    start = end + 1;
  }
  return MlpArchitecture(std::move(widths));
}

std::size_t MlpArchitecture::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layer_count(); ++l) n += layer_rows(l) * layer_cols(l);
  return n;
}

std::string MlpArchitecture::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < widths_.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(widths_[i]);
  }
  return s;
}

ModelParams::ModelParams(MlpArchitecture arch, std::vector<Matrix> layers)
    : arch_(std::move(arch)), layers_(std::move(layers)) {
  if (layers_.size() != arch_.layer_count()) {
    throw DimensionError("model has " + std::to_string(layers_.size()) +
                         " layers, architecture " + arch_.to_string() + " needs " +
                         std::to_string(arch_.layer_count()));
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (static_cast<std::size_t>(layers_[l].rows()) != arch_.layer_rows(l) ||
        static_cast<std::size_t>(layers_[l].cols()) != arch_.layer_cols(l)) {
      throw DimensionError("layer " + std::to_string(l) + " is " +
                           std::to_string(layers_[l].rows()) + "x" +
                           std::to_string(layers_[l].cols()) + ", expected " +
                           std::to_string(arch_.layer_rows(l)) + "x" +
                           std::to_string(arch_.layer_cols(l)));
    }
    require_finite(layers_[l], "model parameters");
  }
}

ModelParams ModelParams::zeros(const MlpArchitecture& arch) {
  std::vector<Matrix> layers;
  for (std::size_t l = 0; l < arch.layer_count(); ++l) {
    layers.push_back(Matrix::Zero(static_cast<Eigen::Index>(arch.layer_rows(l)),
                                  static_cast<Eigen::Index>(arch.layer_cols(l))));
  }
  return ModelParams(arch, std::move(layers));
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw InputError("unknown activation '" + std::string(name) + "'");
}

Optimizer parse_optimizer(std::string_view name) {
  if (name == "sgd") return Optimizer::kSgd;
  if (name == "adam") return Optimizer::kAdam;
  throw InputError("unknown optimizer '" + std::string(name) + "'");
}

ModelParams init_params(const MlpArchitecture& arch, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Matrix> layers;
  for (std::size_t l = 0; l < arch.layer_count(); ++l) {
    const auto rows = static_cast<Eigen::Index>(arch.layer_rows(l));
    const auto cols = static_cast<Eigen::Index>(arch.layer_cols(l));
    const double bound = 1.0 / std::sqrt(static_cast<double>(arch.widths()[l]));
    Matrix w = Matrix::Zero(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j + 1 < cols; ++j) w(i, j) = rng.uniform(-bound, bound);
    }
    layers.push_back(std::move(w));
  }
  return ModelParams(arch, std::move(layers));
}

namespace {

Matrix homogeneous(const Matrix& x) {
  Matrix h(x.rows(), x.cols() + 1);
  h.leftCols(x.cols()) = x;
  h.col(x.cols()).setOnes();
  return h;
}

void apply_activation(Matrix& z, Activation activation) {
  if (activation == Activation::kRelu) {
    z = z.cwiseMax(0.0);
  } else {
    z = z.array().tanh().matrix();
  }
}

// Multiplies `delta` in place by the activation derivative at `pre`.
void apply_activation_grad(Matrix& delta, const Matrix& pre, Activation activation) {
  if (activation == Activation::kRelu) {
    delta = (pre.array() > 0.0).select(delta, 0.0);
  } else {
    delta.array() *= 1.0 - pre.array().tanh().square();
  }
}

void check_width(const ModelParams& params, const Matrix& inputs) {
  if (static_cast<std::size_t>(inputs.cols()) != params.architecture().input_width()) {
    throw DimensionError("input width " + std::to_string(inputs.cols()) + " vs architecture " +
                         params.architecture().to_string());
  }
}

}  // namespace

ForwardPass forward(const ModelParams& params, const Matrix& inputs, Activation activation) {
  check_width(params, inputs);
  ForwardPass pass;
  const std::size_t n_layers = params.layer_count();
  pass.inputs.reserve(n_layers);
  pass.pre_activations.reserve(n_layers);
  Matrix current = homogeneous(inputs);
  for (std::size_t l = 0; l < n_layers; ++l) {
    Matrix z = current * params.layer(l).transpose();
    pass.inputs.push_back(std::move(current));
    if (l + 1 < n_layers) {
      Matrix a = z;
      apply_activation(a, activation);
      current = homogeneous(a);
    }
    pass.pre_activations.push_back(std::move(z));
  }
  pass.logits = pass.pre_activations.back();
  return pass;
}

Matrix softmax(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

BackwardResult backward(const ModelParams& params, const Matrix& inputs,
                        std::span<const int> labels, Activation activation) {
  if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
    throw DimensionError("backward: " + std::to_string(inputs.rows()) + " inputs vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const auto classes = static_cast<int>(params.architecture().class_count());
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw InputError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) +
                       ")");
    }
  }
  ForwardPass pass = forward(params, inputs, activation);
  const Eigen::Index n = inputs.rows();
  const std::size_t n_layers = params.layer_count();

  BackwardResult result;
  BatchTrace& trace = result.trace;
  trace.losses.resize(n);
  Matrix delta(n, pass.logits.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto z = pass.logits.row(i);
    const double m = z.maxCoeff();
    const double lse = m + std::log((z.array() - m).exp().sum());
    delta.row(i) = (z.array() - lse).exp();
    const int y = labels[static_cast<std::size_t>(i)];
    trace.losses(i) = lse - z(y);
    delta(i, y) -= 1.0;
  }

  trace.preact_grads.resize(n_layers);
  result.gradients.resize(n_layers);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t l = n_layers; l-- > 0;) {
    result.gradients[l].noalias() = inv_n * (delta.transpose() * pass.inputs[l]);
    if (l > 0) {
      const Matrix& w = params.layer(l);
      Matrix prev = delta * w.leftCols(w.cols() - 1);
      apply_activation_grad(prev, pass.pre_activations[l - 1], activation);
      trace.preact_grads[l] = std::move(delta);
      delta = std::move(prev);
    } else {
      trace.preact_grads[l] = std::move(delta);
    }
  }
  trace.activations = std::move(pass.inputs);
  return result;
}

ModelParams train_local(const ModelParams& init, const LabeledDataset& data,
                        const TrainConfig& config, std::uint64_t seed, TrainLog* log) {
  if (data.empty()) throw InputError("train_local: empty dataset");
  if (config.batch_size == 0) throw InputError("train_local: batch size must be >= 1");
  if (data.dim() != init.architecture().input_width()) {
    throw DimensionError("train_local: data width " + std::to_string(data.dim()) +
                         " vs architecture " + init.architecture().to_string());
  }
  ModelParams params = init;
  if (config.epochs == 0) return params;

  Rng rng(seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto& layers = params.mutable_layers();
  std::vector<Matrix> velocity;
  std::vector<Matrix> second_moment;
  for (const Matrix& w : layers) {
    velocity.push_back(Matrix::Zero(w.rows(), w.cols()));
    if (config.optimizer == Optimizer::kAdam) {
      second_moment.push_back(Matrix::Zero(w.rows(), w.cols()));
    }
  }
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  std::uint64_t step = 0;

  const Matrix& features = data.features();
  Matrix batch;
  std::vector<int> batch_labels;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - start);
      batch.resize(static_cast<Eigen::Index>(count), features.cols());
      batch_labels.resize(count);
      for (std::size_t r = 0; r < count; ++r) {
        batch.row(static_cast<Eigen::Index>(r)) =
            features.row(static_cast<Eigen::Index>(order[start + r]));
        batch_labels[r] = data.labels()[order[start + r]];
      }
      BackwardResult br = backward(params, batch, batch_labels, config.activation);
      loss_sum += br.mean_loss();
      ++batches;
      ++step;
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const Matrix& g = br.gradients[l];
        if (config.optimizer == Optimizer::kSgd) {
          if (config.momentum == 0.0) {
            layers[l].noalias() -= config.lr * g;
          } else {
            velocity[l] = config.momentum * velocity[l] + g;
            layers[l].noalias() -= config.lr * velocity[l];
          }
        } else {
          velocity[l] = kBeta1 * velocity[l] + (1.0 - kBeta1) * g;
          second_moment[l] =
              kBeta2 * second_moment[l] + (1.0 - kBeta2) * g.cwiseProduct(g);
          const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
          const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
          layers[l].array() -= config.lr * (velocity[l].array() / c1) /
                               ((second_moment[l].array() / c2).sqrt() + kEps);
        }
      }
    }
    if (log) log->epoch_losses.push_back(loss_sum / static_cast<double>(batches));
  }
  for (const Matrix& w : layers) require_finite(w, "trained parameters");
  return params;
}

std::vector<int> predict(const ModelParams& params, const Matrix& inputs,
                         Activation activation) {
  constexpr Eigen::Index kChunk = 2048;
  std::vector<int> out(static_cast<std::size_t>(inputs.rows()));
  for (Eigen::Index start = 0; start < inputs.rows(); start += kChunk) {
    const Eigen::Index count = std::min(kChunk, inputs.rows() - start);
    const Matrix logits = forward(params, inputs.middleRows(start, count), activation).logits;
    for (Eigen::Index i = 0; i < count; ++i) {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < logits.cols(); ++c) {
        if (logits(i, c) > logits(i, best)) best = c;
      }
      out[static_cast<std::size_t>(start + i)] = static_cast<int>(best);
    }
  }
  return out;
}

double evaluate(const ModelParams& params, const LabeledDataset& data, Activation activation) {
  if (data.empty()) throw InputError("evaluate: empty dataset");
  const std::vector<int> predicted = predict(params, data.features(), activation);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == data.labels()[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace fedlpa
