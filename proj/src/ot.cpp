#include "evf/ot.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include "evf/errors.hpp"

namespace evf {
namespace {

void check_marginal(const std::vector<double>& m, std::size_t n, const char* name) {
  if (m.size() != n) {
    throw ContractError(std::string("ipot: marginal ") + name + " has length " + std::to_string(m.size()) +
                        ", expected " + std::to_string(n));
  }
  double s = 0.0;
  for (double x : m) {
    if (!(x >= 0.0)) throw ContractError(std::string("ipot: marginal ") + name + " has a negative entry");
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-9) {
    std::ostringstream os;
    os << "ipot: marginal " << name << " sums to " << s << ", expected 1";
    throw ContractError(os.str());
  }
}

[[noreturn]] void kernel_failure(double beta, const char* what) {
  std::ostringstream os;
  os << "ipot: " << what << " with beta = " << beta << "; increase beta or rescale the cost";
  throw NumericError(os.str());
}

double log_sum_exp(const double* x, std::size_t n, std::size_t stride) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, x[i * stride]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i * stride] - mx);
  return mx + std::log(s);
}

// Projects a nonnegative matrix onto the transport polytope U(a, b).
void round_to_feasible(Matrix& t, const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = t.rows, m = t.cols;
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < m; ++j) r += t(i, j);
    if (r > a[i]) {
      const double s = a[i] / r;
      for (std::size_t j = 0; j < m; ++j) t(i, j) *= s;
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += t(i, j);
    if (c > b[j]) {
      const double s = b[j] / c;
      for (std::size_t i = 0; i < n; ++i) t(i, j) *= s;
    }
  }
  std::vector<double> ea(n), eb(m);
  double l1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < m; ++j) r += t(i, j);
    ea[i] = std::max(0.0, a[i] - r);
    l1 += ea[i];
  }
  for (std::size_t j = 0; j < m; ++j) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += t(i, j);
    eb[j] = std::max(0.0, b[j] - c);
  }
  if (l1 <= 0.0) return;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) t(i, j) += ea[i] * eb[j] / l1;
}

}  // namespace

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
  if (values.size() != r * c) throw DimensionError("matrix: value count does not match shape");
}

Tensor Matrix::to_tensor() const { return Tensor({rows, cols}, values); }

Matrix Matrix::from_tensor(const Tensor& t) {
  if (t.rank() != 2) throw DimensionError("matrix: expected a 2-D tensor, got " + shape_str(t.shape()));
  auto d = t.data();
  return Matrix(t.dim(0), t.dim(1), std::vector<double>(d.begin(), d.end()));
}

CostMatrix cosine_cost(const Matrix& eeg, const Matrix& video) {
  if (eeg.cols != video.cols) {
    throw DimensionError("cosine_cost: feature dims differ (" + std::to_string(eeg.cols) + " vs " +
                         std::to_string(video.cols) + ")");
  }
  auto norms = [](const Matrix& x) {
    std::vector<double> n(x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < x.cols; ++k) s += x(i, k) * x(i, k);
      n[i] = std::sqrt(s);
    }
    return n;
  };
  const auto na = norms(eeg), nv = norms(video);
  CostMatrix out;
  out.values = Matrix(eeg.rows, video.rows, 1.0);
  for (double x : na) out.zero_norm_rows += x == 0.0;
  for (double x : nv) out.zero_norm_rows += x == 0.0;
  for (std::size_t i = 0; i < eeg.rows; ++i) {
    if (na[i] == 0.0) continue;
    for (std::size_t j = 0; j < video.rows; ++j) {
      if (nv[j] == 0.0) continue;
      double dot = 0.0;
      for (std::size_t k = 0; k < eeg.cols; ++k) dot += eeg(i, k) * video(j, k);
      out.values(i, j) = 1.0 - dot / (na[i] * nv[j]);
    }
  }
  if (out.zero_norm_rows > 0) {
    std::cerr << "warning: cosine_cost: " << out.zero_norm_rows
              << " zero-norm token(s); using distance 1 for their pairs\n";
  }
  return out;
}

Tensor cosine_cost(const Tensor& eeg, const Tensor& video) {
  return affine(matmul_nt(row_normalize(eeg), row_normalize(video)), -1.0, 1.0);
}

std::vector<double> uniform_marginal(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

double trace_cost(const Matrix& cost, const Matrix& plan) {
  if (cost.rows != plan.rows || cost.cols != plan.cols) throw DimensionError("trace_cost: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < cost.values.size(); ++i) s += cost.values[i] * plan.values[i];
  return s;
}

double marginal_error(const Matrix& plan, const std::vector<double>& a, const std::vector<double>& b) {
  double err = 0.0;
  for (std::size_t i = 0; i < plan.rows; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < plan.cols; ++j) r += plan(i, j);
    err = std::max(err, std::abs(r - a[i]));
  }
  for (std::size_t j = 0; j < plan.cols; ++j) {
    double c = 0.0;
    for (std::size_t i = 0; i < plan.rows; ++i) c += plan(i, j);
    err = std::max(err, std::abs(c - b[j]));
  }
  return err;
}

TransportPlan ipot(const Matrix& cost, const std::vector<double>& a, const std::vector<double>& b,
                   const IpotParams& params) {
  const std::size_t n = cost.rows, m = cost.cols;
  if (n == 0 || m == 0) throw ContractError("ipot: empty cost matrix");
  check_marginal(a, n, "a");
  check_marginal(b, m, "b");
  if (!(params.beta > 0.0)) kernel_failure(params.beta, "beta must be positive");
  for (double c : cost.values) {
    if (!std::isfinite(c)) kernel_failure(params.beta, "non-finite cost entry");
  }
  const double cmin = *std::min_element(cost.values.begin(), cost.values.end());

  TransportPlan out;
  out.a = a;
  out.b = b;
  out.plan = Matrix(n, m);
  Matrix& t = out.plan;

  if (cmin / params.beta > 30.0) {
    // Log-domain iteration on log T, log u, log v.
    Matrix log_t(n, m, 0.0), log_q(n, m);
    std::vector<double> log_u(n, 0.0), log_v(m, std::log(1.0 / static_cast<double>(m)));
    std::vector<double> buf(std::max(n, m));
    for (std::size_t it = 0; it < params.outer_iters; ++it) {
      for (std::size_t k = 0; k < n * m; ++k) log_q.values[k] = -cost.values[k] / params.beta + log_t.values[k];
      for (std::size_t inner = 0; inner < params.inner_iters; ++inner) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < m; ++j) buf[j] = log_q(i, j) + log_v[j];
          log_u[i] = std::log(a[i]) - log_sum_exp(buf.data(), m, 1);
        }
        for (std::size_t j = 0; j < m; ++j) {
          for (std::size_t i = 0; i < n; ++i) buf[i] = log_q(i, j) + log_u[i];
          log_v[j] = std::log(b[j]) - log_sum_exp(buf.data(), n, 1);
        }
      }
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) log_t(i, j) = log_u[i] + log_q(i, j) + log_v[j];
      for (std::size_t k = 0; k < n * m; ++k) t.values[k] = std::exp(log_t.values[k]);
      Matrix r = t;
      round_to_feasible(r, a, b);
      out.cost_trace.push_back(trace_cost(cost, r));
    }
  } else {
    Matrix g(n, m), q(n, m);
    for (std::size_t k = 0; k < n * m; ++k) {
      g.values[k] = std::exp(-cost.values[k] / params.beta);
      if (!std::isfinite(g.values[k])) kernel_failure(params.beta, "non-finite kernel exp(-C/beta)");
    }
    std::fill(t.values.begin(), t.values.end(), 1.0);
    std::vector<double> u(n, 1.0), v(m, 1.0 / static_cast<double>(m));
    for (std::size_t it = 0; it < params.outer_iters; ++it) {
      for (std::size_t k = 0; k < n * m; ++k) q.values[k] = g.values[k] * t.values[k];
      for (std::size_t inner = 0; inner < params.inner_iters; ++inner) {
        for (std::size_t i = 0; i < n; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += q(i, j) * v[j];
          u[i] = a[i] / s;
        }
        for (std::size_t j = 0; j < m; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < n; ++i) s += q(i, j) * u[i];
          v[j] = b[j] / s;
        }
      }
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) t(i, j) = u[i] * q(i, j) * v[j];
      for (double x : t.values) {
        if (!std::isfinite(x)) kernel_failure(params.beta, "scaling produced a non-finite plan");
      }
      Matrix r = t;
      round_to_feasible(r, a, b);
      out.cost_trace.push_back(trace_cost(cost, r));
    }
    if (params.outer_iters == 0) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) t(i, j) = a[i] * b[j];
    }
  }
  round_to_feasible(t, a, b);
  out.ot_cost = trace_cost(cost, t);
  return out;
}

double ot_loss(const TransportPlan& plan, const Matrix& cost, double lambda) {
  return lambda * trace_cost(cost, plan.plan);
}

Tensor ot_loss(const Matrix& plan, const Tensor& cost, double lambda) {
  if (cost.rank() != 2 || cost.dim(0) != plan.rows || cost.dim(1) != plan.cols) {
    throw DimensionError("ot_loss: plan " + std::to_string(plan.rows) + "x" + std::to_string(plan.cols) +
                         " does not match cost " + shape_str(cost.shape()));
  }
  return scale(sum(mul(cost, plan.to_tensor())), lambda);
}

TransportPlan exact_ot_oracle(const Matrix& cost, const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = cost.rows, m = cost.cols;
  if (n * m > 16) {
    throw ContractError("exact_ot_oracle: " + std::to_string(n) + "x" + std::to_string(m) +
                        " exceeds the 16-cell enumeration cap");
  }
  if (n == 0 || m == 0) throw ContractError("exact_ot_oracle: empty cost matrix");
  check_marginal(a, n, "a");
  check_marginal(b, m, "b");
  const std::size_t cells = n * m;
  const std::size_t basis = n + m - 1;

  TransportPlan best;
  best.a = a;
  best.b = b;
  best.ot_cost = std::numeric_limits<double>::infinity();

  // Visit every `basis`-subset of cells via a bitmask; each spanning tree of
  // the bipartite row/column graph is a basis of the transportation LP.
  for (std::uint32_t mask = 0; mask < (1u << cells); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != basis) continue;
    std::vector<std::size_t> parent(n + m);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    bool tree = true;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t k = 0; k < cells && tree; ++k) {
      if (!(mask >> k & 1u)) continue;
      const std::size_t i = k / m, j = k % m;
      const std::size_t ri = find(i), rj = find(n + j);
      if (ri == rj) tree = false;
      parent[ri] = rj;
      edges.emplace_back(i, j);
    }
    if (!tree) continue;

    // Leaf peeling: a node of degree one fixes the flow on its only edge.
    std::vector<double> supply(n + m);
    for (std::size_t i = 0; i < n; ++i) supply[i] = a[i];
    for (std::size_t j = 0; j < m; ++j) supply[n + j] = b[j];
    std::vector<bool> used(edges.size(), false);
    Matrix plan(n, m);
    bool feasible = true;
    for (std::size_t step = 0; step < edges.size() && feasible; ++step) {
      std::vector<int> degree(n + m, 0);
      for (std::size_t e = 0; e < edges.size(); ++e) {
        if (used[e]) continue;
        ++degree[edges[e].first];
        ++degree[n + edges[e].second];
      }
      std::size_t pick = edges.size();
      bool row_leaf = false;
      for (std::size_t e = 0; e < edges.size() && pick == edges.size(); ++e) {
        if (used[e]) continue;
        if (degree[edges[e].first] == 1) {
          pick = e;
          row_leaf = true;
        } else if (degree[n + edges[e].second] == 1) {
          pick = e;
        }
      }
      const auto [i, j] = edges[pick];
      const double flow = row_leaf ? supply[i] : supply[n + j];
      if (flow < -1e-12) feasible = false;
      plan(i, j) = std::max(flow, 0.0);
      supply[i] -= flow;
      supply[n + j] -= flow;
      used[pick] = true;
    }
    if (!feasible) continue;
    const double c = trace_cost(cost, plan);
    if (c < best.ot_cost) {
      best.ot_cost = c;
      best.plan = plan;
    }
  }
  return best;
}

}  // namespace evf
