#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "evf/nn.hpp"

namespace evf {

// lr_min + (lr0 - lr_min) * (1 + cos(pi * step / total)) / 2, with step
// clamped to [0, total]. total == 0 yields lr0.
double cosine_lr(std::size_t step, std::size_t total, double lr0, double lr_min);

struct AdamWConfig {
  double lr = 1e-4;
  double lr_min = 1e-6;
  std::size_t total_steps = 1;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// AdamW with decoupled weight decay (applied to the weights, never to the
// moment estimates) and a per-step cosine learning-rate schedule.
class AdamW {
 public:
  AdamW(nn::ParamList params, AdamWConfig config);

  // Applies one update using the gradients currently stored on the
  // parameters, then advances the step counter. Throws ContractError if a
  // parameter has no gradient.
  void step();
  // Rate that the next step() will use.
  double current_lr() const;
  std::size_t steps_taken() const { return step_; }

  const nn::ParamList& params() const { return params_; }
  const AdamWConfig& config() const { return config_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

  // Moments and step counter as named tensors for checkpointing
  // ("opt.m.<param>", "opt.v.<param>", "opt.step").
  nn::ParamList state_tensors() const;
  void load_state(const nn::ParamList& state);

 private:
  nn::ParamList params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t step_ = 0;
};

}  // namespace evf
