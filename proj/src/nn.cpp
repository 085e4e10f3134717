#include "evf/nn.hpp"

#include <cmath>
#include <cstring>

#include "evf/errors.hpp"

namespace evf::nn {

void set_trainable(ParamList& params, bool on) {
  for (auto& [name, t] : params) {
    t.set_requires_grad(on);
    if (!on) t.zero_grad();
  }
}

void zero_grads(ParamList& params) {
  for (auto& [name, t] : params) t.zero_grad();
}

std::uint64_t checksum(const ParamList& params) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [name, t] : params) {
    for (double v : t.data()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
      }
    }
  }
  return h;
}

std::size_t count_scalars(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

// Uniform(-1/sqrt(in), 1/sqrt(in)) for weights and biases.
Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = Tensor::uniform({in, out}, bound, rng, true);
  bias = Tensor::uniform({out}, bound, rng, true);
}

Tensor Linear::operator()(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

LayerNorm::LayerNorm(std::size_t dim)
    : gain({dim}, std::vector<double>(dim, 1.0), true), bias({dim}, true) {}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gain, bias, -1, 1e-5); }

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".gain", gain);
  out.emplace_back(prefix + ".bias", bias);
}

FeedForward::FeedForward(std::size_t dim, std::size_t hidden, double dropout_rate, Rng& rng)
    : up(dim, hidden, rng), down(hidden, dim, rng), dropout(dropout_rate) {}

Tensor FeedForward::operator()(const Tensor& x, Rng& rng, bool training) const {
  return down(evf::dropout(gelu(up(x)), dropout, rng, training));
}

void FeedForward::collect(const std::string& prefix, ParamList& out) const {
  up.collect(prefix + ".up", out);
  down.collect(prefix + ".down", out);
}

MultiHeadAttention::MultiHeadAttention(std::size_t dim, std::size_t num_heads, Rng& rng)
    : q(dim, dim, rng), k(dim, dim, rng), v(dim, dim, rng), o(dim, dim, rng), heads(num_heads) {
  if (num_heads == 0 || dim % num_heads != 0) {
    throw ConfigError("attention: " + std::to_string(num_heads) + " heads do not divide dim " +
                      std::to_string(dim));
  }
}

Tensor MultiHeadAttention::operator()(const Tensor& xq, const Tensor& xkv, std::vector<Tensor>* weights) const {
  const Tensor qq = q(xq);
  const Tensor kk = k(xkv);
  const Tensor vv = v(xkv);
  const std::size_t dim = qq.dim(1);
  const std::size_t dh = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = heads == 1 ? qq : slice_cols(qq, h * dh, dh);
    Tensor kh = heads == 1 ? kk : slice_cols(kk, h * dh, dh);
    Tensor vh = heads == 1 ? vv : slice_cols(vv, h * dh, dh);
    Tensor attn = softmax(scale(matmul_nt(qh, kh), inv_sqrt), -1);
    if (weights) weights->push_back(attn);
    outs.push_back(matmul(attn, vh));
  }
  return o(heads == 1 ? outs.front() : concat(outs, 1));
}

void MultiHeadAttention::collect(const std::string& prefix, ParamList& out) const {
  q.collect(prefix + ".q", out);
  k.collect(prefix + ".k", out);
  v.collect(prefix + ".v", out);
  o.collect(prefix + ".o", out);
}

TransformerBlock::TransformerBlock(std::size_t dim, std::size_t heads, std::size_t ff_dim, double dropout, Rng& rng)
    : norm1(dim), norm2(dim), attn(dim, heads, rng), ff(dim, ff_dim, dropout, rng) {}

Tensor TransformerBlock::operator()(const Tensor& x, Rng& rng, bool training, std::vector<Tensor>* weights) const {
  const Tensor h = norm1(x);
  Tensor y = add(x, attn(h, h, weights));
  return add(y, ff(norm2(y), rng, training));
}

void TransformerBlock::collect(const std::string& prefix, ParamList& out) const {
  norm1.collect(prefix + ".norm1", out);
  attn.collect(prefix + ".attn", out);
  norm2.collect(prefix + ".norm2", out);
  ff.collect(prefix + ".ff", out);
}

}  // namespace evf::nn
