#pragma once

// Small building blocks composed from the tensor op set: linear layers,
// layer norm, feed-forward, multi-head attention and pre-norm blocks.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "evf/tensor.hpp"

namespace evf::nn {

// Ordered name -> parameter list; the order is the checkpoint order.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

void set_trainable(ParamList& params, bool on);
void zero_grads(ParamList& params);
// FNV-1a over the raw bytes of every parameter value, in list order.
std::uint64_t checksum(const ParamList& params);
std::size_t count_scalars(const ParamList& params);

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Linear -> GELU -> dropout -> Linear.
struct FeedForward {
  Linear up;
  Linear down;
  double dropout = 0.0;

  FeedForward() = default;
  FeedForward(std::size_t dim, std::size_t hidden, double dropout_rate, Rng& rng);
  Tensor operator()(const Tensor& x, Rng& rng, bool training) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct MultiHeadAttention {
  Linear q, k, v, o;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t dim, std::size_t num_heads, Rng& rng);
  // Queries from `xq`, keys/values from `xkv`. When `weights` is non-null
  // the per-head attention matrices [Tq x Tkv] are appended to it.
  Tensor operator()(const Tensor& xq, const Tensor& xkv, std::vector<Tensor>* weights = nullptr) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Pre-norm transformer block: x + MHA(LN(x)), then x + FF(LN(x)).
struct TransformerBlock {
  LayerNorm norm1, norm2;
  MultiHeadAttention attn;
  FeedForward ff;

  TransformerBlock() = default;
  TransformerBlock(std::size_t dim, std::size_t heads, std::size_t ff_dim, double dropout, Rng& rng);
  Tensor operator()(const Tensor& x, Rng& rng, bool training, std::vector<Tensor>* weights = nullptr) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace evf::nn
