#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "evf/fusion.hpp"
#include "evf/mae.hpp"
#include "evf/nn.hpp"
#include "evf/tensor.hpp"

namespace evf::testing {

// Norm-wise relative error between two gradient vectors. Gradients whose
// norm is below 1e-6 on both sides count as agreeing zeros.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-6});
  return std::sqrt(diff) / denom;
}

struct GradCheck {
  double worst = 0.0;
  std::size_t checked = 0;
};

// Compares autodiff gradients of the scalar `loss()` against central
// differences for every entry of every tensor in `params` (or the first
// `max_entries` of each).
inline GradCheck grad_check(const std::function<Tensor()>& loss, std::vector<Tensor> params, double h = 1e-5,
                            std::size_t max_entries = static_cast<std::size_t>(-1)) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  backward(loss());
  GradCheck result;
  for (auto& p : params) {
    const std::size_t n = std::min(p.numel(), max_entries);
    std::vector<double> analytic(p.grad().begin(), p.grad().begin() + static_cast<std::ptrdiff_t>(n));
    if (analytic.empty()) analytic.assign(n, 0.0);
    std::vector<double> numeric(n);
    NoGradGuard guard;
    for (std::size_t i = 0; i < n; ++i) {
      const double keep = p.data()[i];
      p.mutable_data()[i] = keep + h;
      const double up = loss().item();
      p.mutable_data()[i] = keep - h;
      const double down = loss().item();
      p.mutable_data()[i] = keep;
      numeric[i] = (up - down) / (2.0 * h);
    }
    result.worst = std::max(result.worst, relative_error(analytic, numeric));
    result.checked += n;
  }
  return result;
}

inline std::vector<Tensor> tensors_of(const nn::ParamList& params) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : params) out.push_back(t);
  return out;
}

// Fixed random projection so a tensor-valued output becomes a scalar loss
// with non-trivial upstream gradients.
inline Tensor project(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  const Tensor w = Tensor::randn(y.shape(), 1.0, rng);
  return sum(mul(y, w));
}

// D = 8, one encoder and one decoder layer.
inline MaeConfig mini_mae_config() {
  MaeConfig c;
  c.channels = 2;
  c.window_samples = 60;
  c.patch_len = 16;
  c.dim = 8;
  c.enc_layers = 1;
  c.enc_heads = 2;
  c.dec_layers = 1;
  c.dec_heads = 2;
  c.ff_dim = 16;
  c.mask_ratio = 0.5;
  c.conv_channels = 4;
  return c;
}

// D_f = 8, one adapter and one fusion layer, no dropout.
inline FusionConfig mini_fusion_config() {
  FusionConfig c;
  c.dim = 8;
  c.adapter_layers = 1;
  c.fusion_layers = 1;
  c.heads = 2;
  c.ff_dim = 16;
  c.head_hidden = 8;
  c.dropout = 0.0;
  c.lambda_ot = 0.5;
  return c;
}

inline PatchGrid random_grid(const MaeConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> w(c.channels, std::vector<double>(c.window_samples));
  for (auto& ch : w)
    for (double& v : ch) v = g(rng);
  return patchify(reflect_pad(w, c.padded_len()), c.patch_len);
}

}  // namespace evf::testing
