#pragma once

// Dense f64 tensors with tape-free reverse-mode differentiation.
//
// Every op returns a new Tensor whose node remembers its inputs and a
// closure that pushes the output gradient back into them. backward()
// topologically sorts the graph reachable from a scalar loss and runs the
// closures in reverse order. Leaf tensors with requires_grad accumulate
// gradients across backward() calls until zero_grad().

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace evf {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient arrives
  bool requires_grad = false;
  bool consumed = false;     // graph already differentiated
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor randn(Shape shape, double stddev, Rng& rng, bool requires_grad = false);
  static Tensor uniform(Shape shape, double bound, Rng& rng, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Writable view of the values. Only meaningful on leaves (parameters,
  // inputs); mutating an interior node invalidates its graph.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Copy of the values as a fresh leaf with no history.
  Tensor detach() const;
  // Copy of the values into this tensor's buffer (shapes must match).
  void assign(std::span<const double> values);

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

// RAII switch that stops graph construction on the current thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Populates grad on every requires_grad tensor reachable from `loss`.
// Throws ContractError for non-scalar losses, losses that do not depend on
// any trainable tensor, and graphs that were already differentiated.
void backward(const Tensor& loss);

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// alpha * x + beta
Tensor affine(const Tensor& x, double alpha, double beta = 0.0);
Tensor scale(const Tensor& x, double alpha);
Tensor square(const Tensor& x);
// Adds a vector along the last axis (bias broadcast over leading axes).
Tensor add_bias(const Tensor& x, const Tensor& bias);

// GELU, tanh approximation:
//   0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
Tensor gelu(const Tensor& x);
inline constexpr double kGeluCoeff = 0.044715;

// Inverted dropout. In training mode each element is zeroed with
// probability `rate` and survivors are scaled by 1/(1-rate); in eval mode
// the input is returned unchanged.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training);

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Mean over rows of a matrix: [M x N] -> [1 x N].
Tensor mean_rows(const Tensor& x);

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // [M x K] [K x N]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [M x K] [N x K]^T
Tensor transpose(const Tensor& a);

// ---- normalization / probabilities -----------------------------------------

Tensor softmax(const Tensor& x, int axis = -1);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, int axis = -1,
                  double eps = 1e-5);
// Mean cross-entropy of row-wise logits [B x K] against class labels.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);
// Scales each row to unit L2 norm; rows with norm below eps become zero.
Tensor row_normalize(const Tensor& x, double eps = 1e-12);

// ---- structural ------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
// Concatenates 2-D tensors along axis 0 (rows) or 1 (columns).
Tensor concat(const std::vector<Tensor>& xs, int axis);
// Row gather: out[i] = x[indices[i]]; indices may repeat.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);

// ---- signal ----------------------------------------------------------------

// Cross-correlation. x: [C_in x L] or [B x C_in x L];
// kernels: [C_out x C_in x K]. Output [C_out x L'] (or [B x C_out x L'])
// with L' = floor((L + 2 pad - K) / stride) + 1 and zero padding.
Tensor conv1d(const Tensor& x, const Tensor& kernels, std::size_t stride, std::size_t padding);

// Per-feature temporal convolution over a token sequence x: [T x D] with
// weights [K x D] (K odd) and zero "same" padding.
Tensor depthwise_conv1d(const Tensor& x, const Tensor& weights);

// One-sided DFT magnitudes along the last axis. x: [L] or [M x L] with L a
// power of two; output [L/2+1] or [M x L/2+1].
Tensor rfft_magnitude(const Tensor& x);

}  // namespace evf
