#include "evf/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "evf/errors.hpp"

namespace evf {

double cosine_lr(std::size_t step, std::size_t total, double lr0, double lr_min) {
  if (total == 0) return lr0;
  const double t = static_cast<double>(std::min(step, total)) / static_cast<double>(total);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

AdamW::AdamW(nn::ParamList params, AdamWConfig config) : params_(std::move(params)), config_(config) {
  if (config_.lr < 0 || config_.lr_min < 0) throw ConfigError("adamw: learning rates must be nonnegative");
  // Keeps the schedule inside [lr_min, lr]; lr == 0 freezes the weights.
  config_.lr_min = std::min(config_.lr_min, config_.lr);
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& [name, t] : params_) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

double AdamW::current_lr() const { return cosine_lr(step_, config_.total_steps, config_.lr, config_.lr_min); }

void AdamW::step() {
  for (const auto& [name, t] : params_) {
    if (!t.has_grad()) throw ContractError("adamw: parameter '" + name + "' has no gradient");
  }
  const double lr = current_lr();
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& t = params_[p].second;
    auto w = t.mutable_data();
    auto g = t.grad();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      w[i] *= 1.0 - lr * config_.weight_decay;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

nn::ParamList AdamW::state_tensors() const {
  nn::ParamList out;
  for (std::size_t p = 0; p < params_.size(); ++p) {
    const auto& [name, t] = params_[p];
    out.emplace_back("opt.m." + name, Tensor(t.shape(), m_[p]));
    out.emplace_back("opt.v." + name, Tensor(t.shape(), v_[p]));
  }
  out.emplace_back("opt.step", Tensor::scalar(static_cast<double>(step_)));
  return out;
}

void AdamW::load_state(const nn::ParamList& state) {
  auto find = [&](const std::string& key) -> const Tensor* {
    for (const auto& [n, t] : state)
      if (n == key) return &t;
    return nullptr;
  };
  for (std::size_t p = 0; p < params_.size(); ++p) {
    const auto& name = params_[p].first;
    const Tensor* m = find("opt.m." + name);
    const Tensor* v = find("opt.v." + name);
    if (!m || !v) throw DataError("optimizer state missing moments for '" + name + "'");
    if (m->numel() != m_[p].size() || v->numel() != v_[p].size()) {
      throw DimensionError("optimizer state shape mismatch for '" + name + "'");
    }
    m_[p].assign(m->data().begin(), m->data().end());
    v_[p].assign(v->data().begin(), v->data().end());
  }
  if (const Tensor* s = find("opt.step")) step_ = static_cast<std::size_t>(s->item());
}

}  // namespace evf
