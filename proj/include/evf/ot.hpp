#pragma once

// Cosine-distance costs between token sets, the IPOT proximal-point solver,
// the trace alignment loss and a brute-force LP oracle for tiny problems.

#include <cstddef>
#include <vector>

#include "evf/tensor.hpp"

namespace evf {

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> v);

  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  Tensor to_tensor() const;
  static Matrix from_tensor(const Tensor& t);
};

struct CostMatrix {
  Matrix values;
  std::size_t zero_norm_rows = 0;  // rows or columns replaced by distance 1
};

struct TransportPlan {
  Matrix plan;
  std::vector<double> a;
  std::vector<double> b;
  double ot_cost = 0.0;
  std::vector<double> cost_trace;  // ot_cost after every outer iteration (ipot only)
};

struct IpotParams {
  double beta = 0.5;
  std::size_t outer_iters = 50;
  std::size_t inner_iters = 1;
};

// C[i][j] = 1 - <a_i, v_j> / (|a_i| |v_j|). Rows of either input with zero
// norm get distance 1 to everything and a warning on stderr.
CostMatrix cosine_cost(const Matrix& eeg, const Matrix& video);
// Differentiable version for training; zero-norm rows give distance 1 with
// no gradient.
Tensor cosine_cost(const Tensor& eeg, const Tensor& video);

std::vector<double> uniform_marginal(std::size_t n);

// Throws ContractError unless a, b are nonnegative and sum to 1 (1e-9),
// NumericError when exp(-C/beta) is not finite. The returned plan is
// rounded onto the feasible set so both marginals hold to rounding error.
TransportPlan ipot(const Matrix& cost, const std::vector<double>& a, const std::vector<double>& b,
                   const IpotParams& params = {});

// sum_ij C[i][j] T[i][j]
double trace_cost(const Matrix& cost, const Matrix& plan);
double ot_loss(const TransportPlan& plan, const Matrix& cost, double lambda);
// lambda * tr(C^T T) with T treated as a constant.
Tensor ot_loss(const Matrix& plan, const Tensor& cost, double lambda);

// Exact transportation LP optimum by enumerating spanning-tree bases.
// Throws ContractError when rows * cols > 16.
TransportPlan exact_ot_oracle(const Matrix& cost, const std::vector<double>& a, const std::vector<double>& b);

// Largest |row sum - a_i| or |column sum - b_j|.
double marginal_error(const Matrix& plan, const std::vector<double>& a, const std::vector<double>& b);

}  // namespace evf
