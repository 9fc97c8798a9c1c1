#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedlpa/errors.hpp"
#include "fedlpa/laplace.hpp"
#include "fedlpa/linalg.hpp"
#include "fedlpa/nn.hpp"

namespace fedlpa {

// Per-layer server sums:  A_bar = sum_k A_k,  B_bar = sum_k B_k,
// Z_bar = sum_k B_k M_k A_k.
struct LayerAggregate {
  SymmetricPsdMatrix a_sum;
  SymmetricPsdMatrix b_sum;
  Matrix z_sum;
};

struct AggregationState {
  MlpArchitecture architecture;
  std::vector<LayerAggregate> layers;
  std::size_t client_count = 0;
};

// Throws InputError on an empty list or mismatched architectures.
AggregationState build_state(std::span<const ClientPayload> payloads);

// The per-layer quadratic
//   J(M) = 1/2 || sum_k B_k M A_k - Z_bar ||_F^2
// whose minimizer is vec(M) = (sum_k A_k (x) B_k)^{-1} vec(Z_bar). Every A_k and
// B_k is symmetric, so grad J = sum_j B_j R A_j with R the residual matrix.
class LayerQuadratic {
 public:
  LayerQuadratic(std::span<const ClientPayload> payloads, std::size_t layer, Matrix target);

  // sum_k B_k M A_k
  Matrix apply(const Matrix& m) const;
  double objective(const Matrix& m) const;
  Matrix gradient(const Matrix& m) const;
  const Matrix& target() const { return target_; }
  std::size_t rows() const { return static_cast<std::size_t>(target_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(target_.cols()); }

 private:
  std::vector<const Matrix*> a_;
  std::vector<const Matrix*> b_;
  Matrix target_;
};

enum class SolverMethod {
  kConjugateResidual,  // Krylov minimization of the residual norm
  kGradientDescent,    // fixed or 1/L step gradient descent
};

// kExpectationApproximation starts from K * ea_solve, i.e. the approximation
// sum_k A_k (x) B_k ~ A_bar (x) B_bar / K, which is exact for identical clients.
enum class SolverInit { kExpectationApproximation, kFedAvg, kZeros };

SolverMethod parse_solver_method(std::string_view name);
SolverInit parse_solver_init(std::string_view name);

struct SolverConfig {
  std::size_t max_iterations = 10000;
  // Gradient descent only. Empty means 1/L with L from power iteration.
  std::optional<double> step_size;
  // Stop once the relative objective decrease stays below this for
  // `patience` consecutive iterations.
  double tolerance = 1e-7;
  std::size_t patience = 3;
  SolverInit init = SolverInit::kExpectationApproximation;
  SolverMethod method = SolverMethod::kConjugateResidual;
  std::size_t power_iterations = 20;
  // Consecutive objective increases tolerated before giving up.
  std::size_t divergence_limit = 10;
  bool parallel_layers = true;
};

struct SolverIterate {
  std::size_t iteration = 0;
  double objective = 0.0;
  double gradient_norm = 0.0;
  double step_size = 0.0;
};

struct LayerTrace {
  std::vector<SolverIterate> iterations;  // entry 0 is the starting point
  bool converged = false;

  double initial_objective() const { return iterations.front().objective; }
  double final_objective() const { return iterations.back().objective; }
  std::size_t steps() const { return iterations.empty() ? 0 : iterations.size() - 1; }
};

struct SolverTrace {
  std::vector<LayerTrace> layers;
  std::size_t total_steps() const;
};

// Objective blew up under the configured step. Carries the trace so far.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, LayerTrace trace)
      : Error(what), trace_(std::move(trace)) {}
  const LayerTrace& trace() const { return trace_; }

 private:
  LayerTrace trace_;
};

struct SolveResult {
  ModelParams params;
  SolverTrace trace;
};

// Minimizes J layer by layer from the configured starting point.
SolveResult fedlpa_solve(const AggregationState& state, std::span<const ClientPayload> payloads,
                         const SolverConfig& config = {});

// Single-layer entry point used by fedlpa_solve.
Matrix minimize_layer(const LayerQuadratic& quadratic, const Matrix& start,
                      const SolverConfig& config, LayerTrace& trace);

inline constexpr std::size_t kOracleMaxKronDim = 4096;

// Builds sum_k A_k (x) B_k explicitly and solves it by Cholesky. Refuses
// (RefusalError) layers whose Kronecker dimension exceeds `max_kron_dim`;
// SingularityError if the system is not positive definite.
ModelParams oracle_solve(std::span<const ClientPayload> payloads,
                         std::size_t max_kron_dim = kOracleMaxKronDim);

// Expectation approximation M = B_bar^{-1} Z_bar A_bar^{-1} on the plain sums,
// via two SPD solves. Exact for K = 1; for K identical clients it returns M/K,
// since (sum A) (x) (sum B) counts every cross term.
ModelParams ea_solve(const AggregationState& state);

// Sample-count weighted parameter average.
ModelParams fedavg_solve(std::span<const ClientPayload> payloads);
// Throws InputError if weights are negative or sum to zero.
ModelParams weighted_average(std::span<const ModelParams> models, std::span<const double> weights);

// Elementwise precision-weighted average (sum_k f_k)^{-1} sum_k f_k mu_k.
// Throws SingularityError where the total precision is zero.
ModelParams diag_fisher_solve(std::span<const DiagonalPayload> payloads);

// CSV with header iteration,objective,gradient_norm,step_size.
void write_trace_csv(std::ostream& out, const LayerTrace& trace);

enum class Method { kFedLpa, kFedAvg, kExpectationApproximation, kDiagonalFisher, kOracle };

Method parse_method(std::string_view name);
std::string method_name(Method method);

// Floats in one client-to-server message.
struct CommunicationCost {
  std::uint64_t parameter_floats = 0;
  std::uint64_t factor_floats_full = 0;   // sum of n^2 over all A and B
  std::uint64_t factor_floats_upper = 0;  // sum of n(n+1)/2, what the wire carries
  std::uint64_t upload_floats = 0;        // for the requested method
  std::uint64_t upload_bytes_f64 = 0;
  std::uint64_t upload_bytes_f32 = 0;
  double ratio_to_fedavg = 1.0;
};

CommunicationCost communication_cost(const MlpArchitecture& arch, Method method);

}  // namespace fedlpa
