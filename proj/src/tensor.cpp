#include "evf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "evf/errors.hpp"
#include "evf/fft.hpp"

namespace evf {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

namespace {

thread_local bool g_grad_enabled = true;

Tensor make_result(Shape shape, std::vector<double> value, std::vector<NodePtr> inputs,
                   std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool rg = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) {
      if (in->consumed) {
        throw ContractError("op input belongs to a graph that was already differentiated");
      }
      rg = rg || in->requires_grad;
    }
  }
  if (rg) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(bw);
  }
  return Tensor::from_node(std::move(node));
}

const NodePtr& need(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
  return t.node();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t r, const char* op) {
  if (t.rank() != r) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                         shape_str(t.shape()));
  }
}

std::size_t norm_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw DimensionError(std::string(op) + ": axis out of range");
  return static_cast<std::size_t>(a);
}

// outer x n x inner decomposition of a shape around `axis`.
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit sp;
  for (std::size_t i = 0; i < axis; ++i) sp.outer *= s[i];
  sp.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) sp.inner *= s[i];
  return sp;
}

}  // namespace

std::vector<double>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor(Shape shape, bool requires_grad) {
  node_ = std::make_shared<Node>();
  node_->value.assign(shape_numel(shape), 0.0);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor: shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) { return Tensor({}, {v}, requires_grad); }

Tensor Tensor::randn(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::uniform(Shape shape, double bound, Rng& rng, bool requires_grad) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from_node(std::shared_ptr<Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const { return need(*this, "shape")->shape; }

std::size_t Tensor::dim(std::size_t i) const {
  const Shape& s = shape();
  if (i >= s.size()) throw DimensionError("dim: axis " + std::to_string(i) + " out of range for " + shape_str(s));
  return s[i];
}

std::size_t Tensor::numel() const { return need(*this, "numel")->value.size(); }

std::span<const double> Tensor::data() const { return need(*this, "data")->value; }

std::span<double> Tensor::mutable_data() { return need(*this, "mutable_data")->value; }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item: tensor has shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return data()[r * shape().back() + c]; }

bool Tensor::requires_grad() const { return need(*this, "requires_grad")->requires_grad; }

void Tensor::set_requires_grad(bool on) { need(*this, "set_requires_grad")->requires_grad = on; }

bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return need(*this, "grad")->grad; }

std::span<double> Tensor::mutable_grad() { return need(*this, "mutable_grad")->grad_buffer(); }

void Tensor::zero_grad() {
  if (defined()) node_->grad.clear();
}

Tensor Tensor::detach() const { return Tensor(shape(), need(*this, "detach")->value, false); }

void Tensor::assign(std::span<const double> values) {
  auto& v = need(*this, "assign")->value;
  if (values.size() != v.size()) throw DimensionError("assign: size mismatch");
  std::copy(values.begin(), values.end(), v.begin());
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// ---- backward --------------------------------------------------------------

void backward(const Tensor& loss) {
  const NodePtr& root = need(loss, "backward");
  if (root->value.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_str(root->shape));
  }
  if (root->consumed) {
    throw ContractError("backward: graph was already differentiated; rebuild the forward pass");
  }
  if (!root->requires_grad) {
    throw ContractError("backward: loss does not depend on any tensor with requires_grad");
  }

  // Iterative post-order DFS; `order` ends up inputs-before-outputs.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }

  // Interior nodes are single-use: drop closures and buffers so the graph
  // can be freed while leaves keep their accumulated gradients.
  for (Node* n : order) {
    if (n->backward) {
      n->backward = nullptr;
      n->inputs.clear();
      n->grad.clear();
      n->grad.shrink_to_fit();
      n->consumed = true;
    }
  }
}

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    const double sign[2] = {1.0, -1.0};
    for (std::size_t k = 0; k < 2; ++k) {
      auto& in = self.inputs[k];
      if (!in->requires_grad) continue;
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[k] * self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    auto& a_ = self.inputs[0];
    auto& b_ = self.inputs[1];
    if (a_->requires_grad) {
      auto& g = a_->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * b_->value[i];
    }
    if (b_->requires_grad) {
      auto& g = b_->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * a_->value[i];
    }
  });
}

Tensor affine(const Tensor& x, double alpha, double beta) {
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * xv[i] + beta;
  return make_result(x.shape(), std::move(out), {x.node()}, [alpha](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += alpha * self.grad[i];
  });
}

Tensor scale(const Tensor& x, double alpha) { return affine(x, alpha, 0.0); }

Tensor square(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * xv[i];
  return make_result(x.shape(), std::move(out), {x.node()}, [](Node& self) {
    auto& in = self.inputs[0];
    auto& g = in->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * in->value[i] * self.grad[i];
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() == 0 || bias.numel() != x.shape().back()) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " +
                         shape_str(x.shape()));
  }
  const std::size_t n = bias.numel();
  std::vector<double> out(x.data().begin(), x.data().end());
  auto bv = bias.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
  return make_result(x.shape(), std::move(out), {x.node(), bias.node()}, [n](Node& self) {
    auto& x_ = self.inputs[0];
    auto& b_ = self.inputs[1];
    if (x_->requires_grad) {
      auto& g = x_->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (b_->requires_grad) {
      auto& g = b_->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
    }
  });
}

Tensor gelu(const Tensor& x) {
  static const double c = std::sqrt(2.0 / std::numbers::pi);
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(c * (v + kGeluCoeff * v * v * v)));
  }
  return make_result(x.shape(), std::move(out), {x.node()}, [](Node& self) {
    auto& in = self.inputs[0];
    auto& g = in->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = in->value[i];
      const double t = std::tanh(c * (v + kGeluCoeff * v * v * v));
      const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * kGeluCoeff * v * v);
      g[i] += d * self.grad[i];
    }
  });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = keep(rng) ? keep_scale : 0.0;
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  return make_result(x.shape(), std::move(out), {x.node()}, [mask = std::move(mask)](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += mask[i] * self.grad[i];
  });
}

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& x) {
  auto xv = x.data();
  const double s = std::accumulate(xv.begin(), xv.end(), 0.0);
  return make_result({}, {s}, {x.node()}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (double& gi : g) gi += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mean_rows(const Tensor& x) {
  require_rank(x, 2, "mean_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (m == 0) throw DimensionError("mean_rows: no rows");
  std::vector<double> out(n, 0.0);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += xv[i * n + j];
  for (double& v : out) v /= static_cast<double>(m);
  return make_result({1, n}, std::move(out), {x.node()}, [m, n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j] * inv;
  });
}

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    auto& a_ = self.inputs[0];
    auto& b_ = self.inputs[1];
    const double* g = self.grad.data();
    if (a_->requires_grad) {
      auto& ga = a_->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = b_->value.data() + p * n;
          const double* grow = g + i * n;
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          ga[i * k + p] += s;
        }
    }
    if (b_->requires_grad) {
      auto& gb = b_->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = a_->value[i * k + p];
          if (aip == 0.0) continue;
          double* gbrow = gb.data() + p * n;
          const double* grow = g + i * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_nt: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  }
  std::vector<double> out(m * n, 0.0);
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += av[i * k + p] * bv[j * k + p];
      out[i * n + j] = s;
    }
  return make_result({m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    auto& a_ = self.inputs[0];
    auto& b_ = self.inputs[1];
    const double* g = self.grad.data();
    if (a_->requires_grad) {
      auto& ga = a_->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double gij = g[i * n + j];
          if (gij == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * b_->value[j * k + p];
        }
    }
    if (b_->requires_grad) {
      auto& gb = b_->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double gij = g[i * n + j];
          if (gij == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gij * a_->value[i * k + p];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  auto av = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_result({n, m}, std::move(out), {a.node()}, [m, n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

// ---- normalization / probabilities -----------------------------------------

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = norm_axis(axis, x.rank(), "softmax");
  const AxisSplit sp = split_axis(x.shape(), ax);
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.n * sp.inner + in;
      double mx = -INFINITY;
      for (std::size_t i = 0; i < sp.n; ++i) mx = std::max(mx, xv[base + i * sp.inner]);
      double z = 0.0;
      for (std::size_t i = 0; i < sp.n; ++i) {
        const double e = std::exp(xv[base + i * sp.inner] - mx);
        out[base + i * sp.inner] = e;
        z += e;
      }
      for (std::size_t i = 0; i < sp.n; ++i) out[base + i * sp.inner] /= z;
    }
  Tensor result = make_result(x.shape(), std::move(out), {x.node()}, nullptr);
  if (result.requires_grad()) {
    // The closure needs the output values, which live on the result node.
    Node* self_ptr = result.node().get();
    self_ptr->backward = [sp](Node& self) {
      auto& g = self.inputs[0]->grad_buffer();
      const auto& y = self.value;
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t in = 0; in < sp.inner; ++in) {
          const std::size_t base = o * sp.n * sp.inner + in;
          double dot = 0.0;
          for (std::size_t i = 0; i < sp.n; ++i) dot += self.grad[base + i * sp.inner] * y[base + i * sp.inner];
          for (std::size_t i = 0; i < sp.n; ++i) {
            const std::size_t idx = base + i * sp.inner;
            g[idx] += y[idx] * (self.grad[idx] - dot);
          }
        }
    };
  }
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, int axis, double eps) {
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t ax = norm_axis(axis, x.rank(), "layer_norm");
  const AxisSplit sp = split_axis(x.shape(), ax);
  if (gain.numel() != sp.n || bias.numel() != sp.n) {
    throw DimensionError("layer_norm: gain/bias must have " + std::to_string(sp.n) + " entries");
  }
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(sp.outer * sp.inner);
  auto xv = x.data();
  auto gv = gain.data();
  auto bv = bias.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.n * sp.inner + in;
      double mu = 0.0;
      for (std::size_t i = 0; i < sp.n; ++i) mu += xv[base + i * sp.inner];
      mu /= static_cast<double>(sp.n);
      double var = 0.0;
      for (std::size_t i = 0; i < sp.n; ++i) {
        const double d = xv[base + i * sp.inner] - mu;
        var += d * d;
      }
      var /= static_cast<double>(sp.n);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[o * sp.inner + in] = is;
      for (std::size_t i = 0; i < sp.n; ++i) {
        const std::size_t idx = base + i * sp.inner;
        xhat[idx] = (xv[idx] - mu) * is;
        out[idx] = gv[i] * xhat[idx] + bv[i];
      }
    }
  return make_result(
      x.shape(), std::move(out), {x.node(), gain.node(), bias.node()},
      [sp, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        auto& x_ = self.inputs[0];
        auto& g_ = self.inputs[1];
        auto& b_ = self.inputs[2];
        const double n = static_cast<double>(sp.n);
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t in = 0; in < sp.inner; ++in) {
            const std::size_t base = o * sp.n * sp.inner + in;
            if (g_->requires_grad) {
              auto& gg = g_->grad_buffer();
              for (std::size_t i = 0; i < sp.n; ++i) gg[i] += self.grad[base + i * sp.inner] * xhat[base + i * sp.inner];
            }
            if (b_->requires_grad) {
              auto& gb = b_->grad_buffer();
              for (std::size_t i = 0; i < sp.n; ++i) gb[i] += self.grad[base + i * sp.inner];
            }
            if (x_->requires_grad) {
              auto& gx = x_->grad_buffer();
              double m1 = 0.0, m2 = 0.0;
              for (std::size_t i = 0; i < sp.n; ++i) {
                const std::size_t idx = base + i * sp.inner;
                const double gh = self.grad[idx] * g_->value[i];
                m1 += gh;
                m2 += gh * xhat[idx];
              }
              m1 /= n;
              m2 /= n;
              const double is = inv_std[o * sp.inner + in];
              for (std::size_t i = 0; i < sp.n; ++i) {
                const std::size_t idx = base + i * sp.inner;
                const double gh = self.grad[idx] * g_->value[i];
                gx[idx] += is * (gh - m1 - xhat[idx] * m2);
              }
            }
          }
      });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  if (labels.size() != b) throw DimensionError("cross_entropy: label count does not match batch");
  if (b == 0) throw DimensionError("cross_entropy: empty batch");
  std::vector<double> probs(b * k);
  std::vector<int> lab(labels.begin(), labels.end());
  auto lv = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (lab[i] < 0 || static_cast<std::size_t>(lab[i]) >= k) {
      throw ContractError("cross_entropy: label " + std::to_string(lab[i]) + " outside [0, " +
                          std::to_string(k) + ")");
    }
    double mx = -INFINITY;
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, lv[i * k + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(lv[i * k + j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = std::exp(lv[i * k + j] - lse);
    total += lse - lv[i * k + static_cast<std::size_t>(lab[i])];
  }
  total /= static_cast<double>(b);
  return make_result({}, {total}, {logits.node()},
                     [b, k, probs = std::move(probs), lab = std::move(lab)](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       const double s = self.grad[0] / static_cast<double>(b);
                       for (std::size_t i = 0; i < b; ++i)
                         for (std::size_t j = 0; j < k; ++j) {
                           const double onehot = static_cast<int>(j) == lab[i] ? 1.0 : 0.0;
                           g[i * k + j] += s * (probs[i * k + j] - onehot);
                         }
                     });
}

Tensor row_normalize(const Tensor& x, double eps) {
  require_rank(x, 2, "row_normalize");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * n, 0.0);
  std::vector<double> norms(m, 0.0);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += xv[i * n + j] * xv[i * n + j];
    norms[i] = std::sqrt(s);
    if (norms[i] < eps) continue;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] / norms[i];
  }
  Tensor result = make_result({m, n}, std::move(out), {x.node()}, nullptr);
  if (result.requires_grad()) {
    result.node()->backward = [m, n, eps, norms = std::move(norms)](Node& self) {
      auto& g = self.inputs[0]->grad_buffer();
      const auto& y = self.value;
      for (std::size_t i = 0; i < m; ++i) {
        if (norms[i] < eps) continue;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * y[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          g[i * n + j] += (self.grad[i * n + j] - y[i * n + j] * dot) / norms[i];
      }
    };
  }
  return result;
}

// ---- structural ------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x.node()}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw DimensionError("concat: no inputs");
  for (const auto& t : xs) require_rank(t, 2, "concat");
  std::vector<NodePtr> inputs;
  inputs.reserve(xs.size());
  for (const auto& t : xs) inputs.push_back(t.node());
  if (axis == 0) {
    const std::size_t n = xs[0].dim(1);
    std::size_t m = 0;
    for (const auto& t : xs) {
      if (t.dim(1) != n) throw DimensionError("concat rows: column mismatch " + shape_str(t.shape()));
      m += t.dim(0);
    }
    std::vector<double> out;
    out.reserve(m * n);
    for (const auto& t : xs) out.insert(out.end(), t.data().begin(), t.data().end());
    return make_result({m, n}, std::move(out), std::move(inputs), [](Node& self) {
      std::size_t off = 0;
      for (auto& in : self.inputs) {
        if (in->requires_grad) {
          auto& g = in->grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[off + i];
        }
        off += in->value.size();
      }
    });
  }
  if (axis == 1) {
    const std::size_t m = xs[0].dim(0);
    std::size_t n = 0;
    std::vector<std::size_t> widths;
    for (const auto& t : xs) {
      if (t.dim(0) != m) throw DimensionError("concat cols: row mismatch " + shape_str(t.shape()));
      widths.push_back(t.dim(1));
      n += t.dim(1);
    }
    std::vector<double> out(m * n);
    std::size_t col = 0;
    for (std::size_t t = 0; t < xs.size(); ++t) {
      auto v = xs[t].data();
      for (std::size_t i = 0; i < m; ++i)
        std::copy_n(v.data() + i * widths[t], widths[t], out.data() + i * n + col);
      col += widths[t];
    }
    return make_result({m, n}, std::move(out), std::move(inputs),
                       [m, n, widths = std::move(widths)](Node& self) {
                         std::size_t col = 0;
                         for (std::size_t t = 0; t < self.inputs.size(); ++t) {
                           auto& in = self.inputs[t];
                           if (in->requires_grad) {
                             auto& g = in->grad_buffer();
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < widths[t]; ++j)
                                 g[i * widths[t] + j] += self.grad[i * n + col + j];
                           }
                           col += widths[t];
                         }
                       });
  }
  throw DimensionError("concat: axis must be 0 or 1");
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  require_rank(x, 2, "gather_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * n);
  auto xv = x.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= m) throw DimensionError("gather_rows: index " + std::to_string(idx[r]) + " out of range");
    std::copy_n(xv.data() + idx[r] * n, n, out.data() + r * n);
  }
  const std::size_t rows = idx.size();
  return make_result({rows, n}, std::move(out), {x.node()}, [n, idx = std::move(idx)](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) g[idx[r] * n + j] += self.grad[r * n + j];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank(x, 2, "slice_cols");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (start + count > n) throw DimensionError("slice_cols: range exceeds " + shape_str(x.shape()));
  std::vector<double> out(m * count);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i) std::copy_n(xv.data() + i * n + start, count, out.data() + i * count);
  return make_result({m, count}, std::move(out), {x.node()}, [m, n, start, count](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * n + start + j] += self.grad[i * count + j];
  });
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank(x, 2, "slice_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (start + count > m) throw DimensionError("slice_rows: range exceeds " + shape_str(x.shape()));
  std::vector<double> out(x.data().begin() + start * n, x.data().begin() + (start + count) * n);
  return make_result({count, n}, std::move(out), {x.node()}, [n, start](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[start * n + i] += self.grad[i];
  });
}

// ---- signal ----------------------------------------------------------------

Tensor conv1d(const Tensor& x, const Tensor& kernels, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ContractError("conv1d: stride must be positive");
  if (x.rank() != 2 && x.rank() != 3) throw DimensionError("conv1d: input must be [C x L] or [B x C x L]");
  require_rank(kernels, 3, "conv1d");
  const bool batched = x.rank() == 3;
  const std::size_t batch = batched ? x.dim(0) : 1;
  const std::size_t cin = x.dim(batched ? 1 : 0);
  const std::size_t len = x.dim(batched ? 2 : 1);
  const std::size_t cout = kernels.dim(0), kk = kernels.dim(2);
  if (kernels.dim(1) != cin) {
    throw DimensionError("conv1d: kernel channels " + shape_str(kernels.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  if (kk > len + 2 * padding) {
    throw DimensionError("conv1d: kernel length " + std::to_string(kk) + " exceeds padded input length " +
                         std::to_string(len + 2 * padding));
  }
  const std::size_t lout = (len + 2 * padding - kk) / stride + 1;
  std::vector<double> out(batch * cout * lout, 0.0);
  auto xv = x.data();
  auto wv = kernels.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* xrow = xv.data() + (b * cin + ci) * len;
        const double* w = wv.data() + (co * cin + ci) * kk;
        double* orow = out.data() + (b * cout + co) * lout;
        for (std::size_t t = 0; t < lout; ++t) {
          double s = 0.0;
          for (std::size_t k = 0; k < kk; ++k) {
            const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(padding);
            if (p >= 0 && p < static_cast<std::ptrdiff_t>(len)) s += w[k] * xrow[p];
          }
          orow[t] += s;
        }
      }
  Shape oshape = batched ? Shape{batch, cout, lout} : Shape{cout, lout};
  return make_result(std::move(oshape), std::move(out), {x.node(), kernels.node()},
                     [=](Node& self) {
                       auto& x_ = self.inputs[0];
                       auto& w_ = self.inputs[1];
                       std::vector<double>* gx = x_->requires_grad ? &x_->grad_buffer() : nullptr;
                       std::vector<double>* gw = w_->requires_grad ? &w_->grad_buffer() : nullptr;
                       for (std::size_t b = 0; b < batch; ++b)
                         for (std::size_t co = 0; co < cout; ++co)
                           for (std::size_t ci = 0; ci < cin; ++ci) {
                             const std::size_t xoff = (b * cin + ci) * len;
                             const std::size_t woff = (co * cin + ci) * kk;
                             const double* grow = self.grad.data() + (b * cout + co) * lout;
                             for (std::size_t t = 0; t < lout; ++t) {
                               const double gt = grow[t];
                               if (gt == 0.0) continue;
                               for (std::size_t k = 0; k < kk; ++k) {
                                 const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(t * stride + k) -
                                                          static_cast<std::ptrdiff_t>(padding);
                                 if (p < 0 || p >= static_cast<std::ptrdiff_t>(len)) continue;
                                 if (gx) (*gx)[xoff + p] += gt * w_->value[woff + k];
                                 if (gw) (*gw)[woff + k] += gt * x_->value[xoff + p];
                               }
                             }
                           }
                     });
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& weights) {
  require_rank(x, 2, "depthwise_conv1d");
  require_rank(weights, 2, "depthwise_conv1d");
  const std::size_t t_len = x.dim(0), d = x.dim(1), kk = weights.dim(0);
  if (weights.dim(1) != d) {
    throw DimensionError("depthwise_conv1d: weights " + shape_str(weights.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  if (kk % 2 == 0) throw ConfigError("depthwise_conv1d: kernel length must be odd");
  if (t_len < kk) {
    throw ContractError("depthwise_conv1d: sequence length " + std::to_string(t_len) + " shorter than kernel " +
                        std::to_string(kk));
  }
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(kk / 2);
  std::vector<double> out(t_len * d, 0.0);
  auto xv = x.data();
  auto wv = weights.data();
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t k = 0; k < kk; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len)) continue;
      for (std::size_t j = 0; j < d; ++j) out[t * d + j] += wv[k * d + j] * xv[src * d + j];
    }
  return make_result({t_len, d}, std::move(out), {x.node(), weights.node()}, [=](Node& self) {
    auto& x_ = self.inputs[0];
    auto& w_ = self.inputs[1];
    std::vector<double>* gx = x_->requires_grad ? &x_->grad_buffer() : nullptr;
    std::vector<double>* gw = w_->requires_grad ? &w_->grad_buffer() : nullptr;
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t k = 0; k < kk; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len)) continue;
        for (std::size_t j = 0; j < d; ++j) {
          const double g = self.grad[t * d + j];
          if (gx) (*gx)[src * d + j] += g * w_->value[k * d + j];
          if (gw) (*gw)[k * d + j] += g * x_->value[src * d + j];
        }
      }
  });
}

Tensor rfft_magnitude(const Tensor& x) {
  if (x.rank() != 1 && x.rank() != 2) throw DimensionError("rfft_magnitude: input must be [L] or [M x L]");
  const std::size_t len = x.shape().back();
  if (!fft::is_power_of_two(len)) {
    throw ConfigError("rfft_magnitude: length " + std::to_string(len) + " is not a power of two");
  }
  const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
  const std::size_t bins = len / 2 + 1;
  std::vector<double> out(rows * bins);
  std::vector<std::complex<double>> spectra(rows * bins);
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    auto spec = fft::rfft(xv.subspan(r * len, len));
    for (std::size_t k = 0; k < bins; ++k) {
      spectra[r * bins + k] = spec[k];
      out[r * bins + k] = std::abs(spec[k]);
    }
  }
  Shape oshape = x.rank() == 2 ? Shape{rows, bins} : Shape{bins};
  return make_result(std::move(oshape), std::move(out), {x.node()},
                     [rows, len, bins, spectra = std::move(spectra)](Node& self) {
                       // d|X_k|/dx_n = Re(X_k e^{+i 2 pi k n / L}) / |X_k|; summing over the
                       // one-sided bins is a half-spectrum inverse transform.
                       auto& g = self.inputs[0]->grad_buffer();
                       std::vector<std::complex<double>> w(bins);
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t k = 0; k < bins; ++k) {
                           const auto xk = spectra[r * bins + k];
                           const double mag = std::abs(xk);
                           std::complex<double> wk = mag > 1e-300 ? self.grad[r * bins + k] * xk / mag : 0.0;
                           const bool edge = (k == 0) || (2 * k == len);
                           w[k] = edge ? wk : 0.5 * wk;
                         }
                         auto back = fft::irfft(w, len);
                         for (std::size_t n = 0; n < len; ++n) g[r * len + n] += back[n];
                       }
                     });
}

}  // namespace evf
