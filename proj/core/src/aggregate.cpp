#include "fedlpa/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <string>

#include "fedlpa/random.hpp"

namespace fedlpa {

namespace {

// Summation order is fixed by client id so that reordering the payload list
// cannot change any floating point result.
std::vector<std::size_t> canonical_order(std::span<const ClientPayload> payloads) {
  std::vector<std::size_t> order(payloads.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return payloads[a].client_id() < payloads[b].client_id();
  });
  return order;
}

void require_consistent(std::span<const ClientPayload> payloads, const char* who) {
  if (payloads.empty()) throw InputError(std::string(who) + ": no payloads");
  const MlpArchitecture& arch = payloads.front().architecture();
  for (std::size_t k = 1; k < payloads.size(); ++k) {
    if (!(payloads[k].architecture() == arch)) {
      throw InputError(std::string(who) + ": payload " + std::to_string(k) + " has architecture " +
                       payloads[k].architecture().to_string() + ", expected " + arch.to_string());
    }
  }
}

double half_sq_norm(const Matrix& r) { return 0.5 * r.squaredNorm(); }

double dot(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

Matrix ea_layer(const LayerAggregate& agg, double scale) {
  const Matrix left = solve_spd(agg.b_sum, agg.z_sum);
  return scale * solve_spd(agg.a_sum, Matrix(left.transpose())).transpose();
}

Matrix fedavg_layer(std::span<const ClientPayload> payloads, std::size_t layer) {
  double total = 0.0;
  for (const ClientPayload& p : payloads) total += static_cast<double>(p.sample_count());
  Matrix out = Matrix::Zero(payloads.front().params().layer(layer).rows(),
                            payloads.front().params().layer(layer).cols());
  for (std::size_t k : canonical_order(payloads)) {
    out += (static_cast<double>(payloads[k].sample_count()) / total) * payloads[k].params().layer(layer);
  }
  return out;
}

struct StopRule {
  double tolerance;
  std::size_t patience;
  std::size_t small = 0;

  // Feeds one accepted step; true once the run should stop.
  bool done(double before, double after) {
    if (after <= 0.0) return true;
    const double rel = (before - after) / before;
    if (rel >= 0.0 && rel < tolerance) {
      return ++small >= patience;
    }
    small = 0;
    return false;
  }
};

double lipschitz_estimate(const LayerQuadratic& q, std::size_t iterations) {
  Rng rng(0x4c495053ULL);
  Matrix v(q.rows(), q.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = rng.normal();
  v /= v.norm();
  double estimate = 0.0;
  for (std::size_t i = 0; i < std::max<std::size_t>(iterations, 1); ++i) {
    const Matrix w = q.apply(q.apply(v));
    estimate = dot(v, w);
    const double n = w.norm();
    if (n == 0.0) break;
    v = w / n;
  }
  return estimate;
}

Matrix gradient_descent(const LayerQuadratic& q, const Matrix& start, const SolverConfig& cfg,
                        LayerTrace& trace) {
  Matrix x = start;
  Matrix r = q.target() - q.apply(x);
  double j = half_sq_norm(r);
  Matrix g = -q.apply(r);
  trace.iterations.push_back({0, j, g.norm(), 0.0});
  if (j == 0.0) {
    trace.converged = true;
    return x;
  }
  const bool automatic = !cfg.step_size.has_value();
  double step = 0.0;
  if (automatic) {
    const double lipschitz = lipschitz_estimate(q, cfg.power_iterations);
    if (!(lipschitz > 0.0)) {
      trace.converged = true;
      return x;
    }
    step = 1.0 / lipschitz;
  } else {
    step = *cfg.step_size;
  }

  StopRule stop{cfg.tolerance, std::max<std::size_t>(cfg.patience, 1)};
  std::size_t increases = 0;
  std::size_t accepted = 0;
  for (std::size_t attempt = 0; attempt < cfg.max_iterations; ++attempt) {
    Matrix x_next = x - step * g;
    Matrix r_next = q.target() - q.apply(x_next);
    const double j_next = half_sq_norm(r_next);
    if (!(j_next <= j)) {
      if (++increases >= cfg.divergence_limit) {
        throw SolverError("solver diverged: objective rose " + std::to_string(increases) +
                              " consecutive times at step " + std::to_string(step),
                          trace);
      }
      if (automatic) {
        step *= 0.5;
        continue;
      }
    } else {
      increases = 0;
    }
    x = std::move(x_next);
    r = std::move(r_next);
    g = -q.apply(r);
    const double before = j;
    j = j_next;
    trace.iterations.push_back({++accepted, j, g.norm(), step});
    if (stop.done(before, j)) {
      trace.converged = true;
      break;
    }
  }
  return x;
}

// Conjugate residual iteration on the SPD operator M -> sum_k B_k M A_k. It
// minimizes the residual norm, and hence J, over a growing Krylov space, so J
// is non-increasing in exact arithmetic. Any roundoff uptick ends the run at
// the previous iterate.
Matrix conjugate_residual(const LayerQuadratic& q, const Matrix& start, const SolverConfig& cfg,
                          LayerTrace& trace) {
  constexpr std::size_t kRefresh = 50;
  Matrix x = start;
  Matrix r = q.target() - q.apply(x);
  double j = half_sq_norm(r);
  Matrix ar = q.apply(r);
  trace.iterations.push_back({0, j, ar.norm(), 0.0});
  if (j == 0.0) {
    trace.converged = true;
    return x;
  }
  Matrix p = r;
  Matrix ap = ar;
  double rar = dot(r, ar);
  StopRule stop{cfg.tolerance, std::max<std::size_t>(cfg.patience, 1)};
  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    const double apap = ap.squaredNorm();
    if (!(rar > 0.0) || !(apap > 0.0)) {
      trace.converged = true;
      break;
    }
    const double alpha = rar / apap;
    x.noalias() += alpha * p;
    if (it % kRefresh == 0) {
      r = q.target() - q.apply(x);
    } else {
      r.noalias() -= alpha * ap;
    }
    const double j_next = half_sq_norm(r);
    if (!(j_next <= j)) {
      x.noalias() -= alpha * p;
      trace.converged = true;
      break;
    }
    ar = q.apply(r);
    const double rar_next = dot(r, ar);
    const double beta = rar_next / rar;
    rar = rar_next;
    p = r + beta * p;
    ap = ar + beta * ap;
    const double before = j;
    j = j_next;
    trace.iterations.push_back({it, j, ar.norm(), alpha});
    if (stop.done(before, j)) {
      trace.converged = true;
      break;
    }
  }
  return x;
}

}  // namespace

AggregationState build_state(std::span<const ClientPayload> payloads) {
  require_consistent(payloads, "build_state");
  const std::vector<std::size_t> order = canonical_order(payloads);
  AggregationState state;
  state.architecture = payloads.front().architecture();
  state.client_count = payloads.size();
  for (std::size_t l = 0; l < state.architecture.layer_count(); ++l) {
    const ClientPayload& first = payloads[order.front()];
    LayerAggregate agg{first.posterior(l).a_factor, first.posterior(l).b_factor,
                       sandwich(first.posterior(l).b_factor.matrix(), first.params().layer(l),
                                first.posterior(l).a_factor.matrix())};
    for (std::size_t i = 1; i < order.size(); ++i) {
      const ClientPayload& p = payloads[order[i]];
      agg.a_sum += p.posterior(l).a_factor;
      agg.b_sum += p.posterior(l).b_factor;
      agg.z_sum += sandwich(p.posterior(l).b_factor.matrix(), p.params().layer(l),
                            p.posterior(l).a_factor.matrix());
    }
    state.layers.push_back(std::move(agg));
  }
  return state;
}

LayerQuadratic::LayerQuadratic(std::span<const ClientPayload> payloads, std::size_t layer,
                               Matrix target)
    : target_(std::move(target)) {
  require_consistent(payloads, "LayerQuadratic");
  if (layer >= payloads.front().params().layer_count()) {
    throw DimensionError("LayerQuadratic: no layer " + std::to_string(layer));
  }
  const MlpArchitecture& arch = payloads.front().architecture();
  if (static_cast<std::size_t>(target_.rows()) != arch.layer_rows(layer) ||
      static_cast<std::size_t>(target_.cols()) != arch.layer_cols(layer)) {
    throw DimensionError("LayerQuadratic: target shape does not match layer " +
                         std::to_string(layer));
  }
  for (std::size_t k : canonical_order(payloads)) {
    a_.push_back(&payloads[k].posterior(layer).a_factor.matrix());
    b_.push_back(&payloads[k].posterior(layer).b_factor.matrix());
  }
}

Matrix LayerQuadratic::apply(const Matrix& m) const {
  Matrix out = Matrix::Zero(m.rows(), m.cols());
  Matrix bm(m.rows(), m.cols());
  for (std::size_t k = 0; k < a_.size(); ++k) {
    bm.noalias() = *b_[k] * m;
    out.noalias() += bm * *a_[k];
  }
  return out;
}

double LayerQuadratic::objective(const Matrix& m) const { return half_sq_norm(apply(m) - target_); }

Matrix LayerQuadratic::gradient(const Matrix& m) const { return apply(apply(m) - target_); }

SolverMethod parse_solver_method(std::string_view name) {
  if (name == "cr" || name == "conjugate-residual") return SolverMethod::kConjugateResidual;
  if (name == "gd" || name == "gradient-descent") return SolverMethod::kGradientDescent;
  throw InputError("unknown solver method '" + std::string(name) + "' (expected cr or gd)");
}

SolverInit parse_solver_init(std::string_view name) {
  if (name == "ea") return SolverInit::kExpectationApproximation;
  if (name == "fedavg") return SolverInit::kFedAvg;
  if (name == "zeros") return SolverInit::kZeros;
  throw InputError("unknown solver init '" + std::string(name) + "' (expected ea, fedavg or zeros)");
}

std::size_t SolverTrace::total_steps() const {
  std::size_t n = 0;
  for (const LayerTrace& t : layers) n += t.steps();
  return n;
}

Matrix minimize_layer(const LayerQuadratic& quadratic, const Matrix& start,
                      const SolverConfig& config, LayerTrace& trace) {
  if (config.max_iterations < 1) throw InputError("solver: max_iterations must be >= 1");
  if (!(config.tolerance > 0.0)) throw InputError("solver: tolerance must be > 0");
  if (config.step_size && !(*config.step_size > 0.0)) {
    throw InputError("solver: step size must be > 0");
  }
  trace = {};
  switch (config.method) {
    case SolverMethod::kGradientDescent:
      return gradient_descent(quadratic, start, config, trace);
    case SolverMethod::kConjugateResidual:
      return conjugate_residual(quadratic, start, config, trace);
  }
  throw InputError("solver: bad method");
}

SolveResult fedlpa_solve(const AggregationState& state, std::span<const ClientPayload> payloads,
                         const SolverConfig& config) {
  require_consistent(payloads, "fedlpa_solve");
  if (!(payloads.front().architecture() == state.architecture) ||
      state.layers.size() != state.architecture.layer_count() ||
      state.client_count != payloads.size()) {
    throw InputError("fedlpa_solve: aggregation state does not match the payloads");
  }
  const std::size_t n_layers = state.layers.size();
  std::vector<Matrix> layers(n_layers);
  SolverTrace trace;
  trace.layers.resize(n_layers);

  auto solve_one = [&](std::size_t l) {
    Matrix start;
    switch (config.init) {
      case SolverInit::kExpectationApproximation:
        start = ea_layer(state.layers[l], static_cast<double>(state.client_count));
        break;
      case SolverInit::kFedAvg:
        start = fedavg_layer(payloads, l);
        break;
      case SolverInit::kZeros:
        start = Matrix::Zero(state.layers[l].z_sum.rows(), state.layers[l].z_sum.cols());
        break;
    }
    const LayerQuadratic q(payloads, l, state.layers[l].z_sum);
    layers[l] = minimize_layer(q, start, config, trace.layers[l]);
  };

  if (config.parallel_layers && n_layers > 1) {
    std::vector<std::future<void>> jobs;
    for (std::size_t l = 0; l < n_layers; ++l) {
      jobs.push_back(std::async(std::launch::async, solve_one, l));
    }
    for (auto& job : jobs) job.get();
  } else {
    for (std::size_t l = 0; l < n_layers; ++l) solve_one(l);
  }
  return {ModelParams(state.architecture, std::move(layers)), std::move(trace)};
}

ModelParams oracle_solve(std::span<const ClientPayload> payloads, std::size_t max_kron_dim) {
  require_consistent(payloads, "oracle_solve");
  const MlpArchitecture& arch = payloads.front().architecture();
  for (std::size_t l = 0; l < arch.layer_count(); ++l) {
    const std::size_t n = arch.layer_rows(l) * arch.layer_cols(l);
    if (n > max_kron_dim) {
      throw RefusalError("oracle_solve: layer " + std::to_string(l) + " Kronecker dimension " +
                         std::to_string(n) + " exceeds cap " + std::to_string(max_kron_dim));
    }
  }
  const AggregationState state = build_state(payloads);
  const std::vector<std::size_t> order = canonical_order(payloads);
  std::vector<Matrix> layers;
  for (std::size_t l = 0; l < arch.layer_count(); ++l) {
    const auto n = static_cast<Eigen::Index>(arch.layer_rows(l) * arch.layer_cols(l));
    Matrix h = Matrix::Zero(n, n);
    for (std::size_t k : order) {
      h += kron(payloads[k].posterior(l).a_factor.matrix(),
                payloads[k].posterior(l).b_factor.matrix());
    }
    const Vector mu = solve_spd(SymmetricPsdMatrix::from_symmetric_part(h), vec(state.layers[l].z_sum));
    layers.push_back(unvec(mu, arch.layer_rows(l), arch.layer_cols(l)));
  }
  return ModelParams(arch, std::move(layers));
}

ModelParams ea_solve(const AggregationState& state) {
  std::vector<Matrix> layers;
  for (const LayerAggregate& agg : state.layers) layers.push_back(ea_layer(agg, 1.0));
  return ModelParams(state.architecture, std::move(layers));
}

ModelParams fedavg_solve(std::span<const ClientPayload> payloads) {
  require_consistent(payloads, "fedavg_solve");
  std::vector<Matrix> layers;
  for (std::size_t l = 0; l < payloads.front().params().layer_count(); ++l) {
    layers.push_back(fedavg_layer(payloads, l));
  }
  return ModelParams(payloads.front().architecture(), std::move(layers));
}

ModelParams weighted_average(std::span<const ModelParams> models, std::span<const double> weights) {
  if (models.empty()) throw InputError("weighted_average: no models");
  if (models.size() != weights.size()) {
    throw InputError("weighted_average: " + std::to_string(models.size()) + " models but " +
                     std::to_string(weights.size()) + " weights");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("weighted_average: negative weight");
    total += w;
  }
  if (!(total > 0.0)) throw InputError("weighted_average: weights sum to zero");
  const MlpArchitecture& arch = models.front().architecture();
  // Averaging copies of one model must return it bit for bit, which the
  // rounded weighted sum does not guarantee.
  std::size_t first = 0;
  while (!(weights[first] > 0.0)) ++first;
  bool all_same = true;
  for (std::size_t k = first + 1; k < models.size() && all_same; ++k) {
    all_same = !(weights[k] > 0.0) || models[k] == models[first];
  }
  if (all_same && models[first].architecture() == arch) {
    for (const ModelParams& m : models) {
      if (!(m.architecture() == arch)) throw InputError("weighted_average: architecture mismatch");
    }
    return models[first];
  }
  std::vector<Matrix> layers;
  for (std::size_t l = 0; l < arch.layer_count(); ++l) {
    Matrix acc = Matrix::Zero(models.front().layer(l).rows(), models.front().layer(l).cols());
    for (std::size_t k = 0; k < models.size(); ++k) {
      if (!(models[k].architecture() == arch)) {
        throw InputError("weighted_average: architecture mismatch at model " + std::to_string(k));
      }
      if (weights[k] > 0.0) acc += (weights[k] / total) * models[k].layer(l);
    }
    layers.push_back(std::move(acc));
  }
  return ModelParams(arch, std::move(layers));
}

ModelParams diag_fisher_solve(std::span<const DiagonalPayload> payloads) {
  if (payloads.empty()) throw InputError("diag_fisher_solve: no payloads");
  const MlpArchitecture& arch = payloads.front().params.architecture();
  std::vector<Matrix> layers;
  for (std::size_t l = 0; l < arch.layer_count(); ++l) {
    Matrix weighted = Matrix::Zero(arch.layer_rows(l), arch.layer_cols(l));
    Matrix precision = Matrix::Zero(arch.layer_rows(l), arch.layer_cols(l));
    for (const DiagonalPayload& p : payloads) {
      if (!(p.params.architecture() == arch) || p.precision.layers.size() != arch.layer_count() ||
          p.precision.layers[l].rows() != weighted.rows() ||
          p.precision.layers[l].cols() != weighted.cols()) {
        throw InputError("diag_fisher_solve: payload shape mismatch");
      }
      weighted.array() += p.precision.layers[l].array() * p.params.layer(l).array();
      precision += p.precision.layers[l];
    }
    if (!(precision.array() > 0.0).all()) {
      throw SingularityError("diag_fisher_solve: zero total precision in layer " +
                             std::to_string(l));
    }
    layers.push_back(weighted.cwiseQuotient(precision));
  }
  return ModelParams(arch, std::move(layers));
}

void write_trace_csv(std::ostream& out, const LayerTrace& trace) {
  out << "iteration,objective,gradient_norm,step_size\n";
  out.precision(17);
  for (const SolverIterate& it : trace.iterations) {
    out << it.iteration << ',' << it.objective << ',' << it.gradient_norm << ',' << it.step_size
        << '\n';
  }
}

Method parse_method(std::string_view name) {
  if (name == "fedlpa") return Method::kFedLpa;
  if (name == "fedavg") return Method::kFedAvg;
  if (name == "ea") return Method::kExpectationApproximation;
  if (name == "diag_fisher") return Method::kDiagonalFisher;
  if (name == "oracle") return Method::kOracle;
  throw InputError("unknown method '" + std::string(name) +
                   "' (expected fedlpa, fedavg, ea, diag_fisher or oracle)");
}

std::string method_name(Method method) {
  switch (method) {
    case Method::kFedLpa: return "fedlpa";
    case Method::kFedAvg: return "fedavg";
    case Method::kExpectationApproximation: return "ea";
    case Method::kDiagonalFisher: return "diag_fisher";
    case Method::kOracle: return "oracle";
  }
  return "?";
}

CommunicationCost communication_cost(const MlpArchitecture& arch, Method method) {
  CommunicationCost c;
  c.parameter_floats = arch.parameter_count();
  for (std::size_t l = 0; l < arch.layer_count(); ++l) {
    const std::uint64_t a = arch.layer_cols(l);
    const std::uint64_t b = arch.layer_rows(l);
    c.factor_floats_full += a * a + b * b;
    c.factor_floats_upper += upper_triangle_size(a) + upper_triangle_size(b);
  }
  switch (method) {
    case Method::kFedAvg:
      c.upload_floats = c.parameter_floats;
      break;
    case Method::kDiagonalFisher:
      c.upload_floats = 2 * c.parameter_floats;
      break;
    case Method::kFedLpa:
    case Method::kExpectationApproximation:
    case Method::kOracle:
      c.upload_floats = c.parameter_floats + c.factor_floats_upper;
      break;
  }
  c.upload_bytes_f64 = 8 * c.upload_floats;
  c.upload_bytes_f32 = 4 * c.upload_floats;
  c.ratio_to_fedavg =
      static_cast<double>(c.upload_floats) / static_cast<double>(c.parameter_floats);
  return c;
}

}  // namespace fedlpa
