#include "evf/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "evf/errors.hpp"

namespace evf {

ModelVariant parse_variant(const std::string& s) {
  if (s == "fusion") return ModelVariant::fusion;
  if (s == "eeg_only" || s == "eeg-only") return ModelVariant::eeg_only;
  if (s == "video_only" || s == "video-only") return ModelVariant::video_only;
  throw ConfigError("unknown model variant '" + s + "' (expected fusion, eeg_only or video_only)");
}

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::fusion: return "fusion";
    case ModelVariant::eeg_only: return "eeg_only";
    case ModelVariant::video_only: return "video_only";
  }
  return "fusion";
}

void FusionConfig::validate() const {
  if (dim == 0 || heads == 0 || dim % heads != 0) throw ConfigError("fusion: heads must divide the fusion dim");
  if (kernels.empty()) throw ConfigError("fusion: need at least one conv kernel size");
  for (std::size_t k : kernels) {
    if (k % 2 == 0) throw ConfigError("fusion: conv kernel sizes must be odd");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("fusion: dropout must be in [0, 1)");
  if (lambda_ot < 0.0) throw ConfigError("fusion: lambda_ot must be nonnegative");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("fusion: threshold must be in [0, 1]");
}

Adapter::Adapter(std::size_t in, const FusionConfig& cfg, Rng& rng) : input(in, cfg.dim, rng) {
  for (std::size_t i = 0; i < cfg.adapter_layers; ++i) {
    norms.emplace_back(cfg.dim);
    layers.emplace_back(cfg.dim, cfg.ff_dim, cfg.dropout, rng);
  }
}

Tensor Adapter::operator()(const Tensor& x, Rng& rng, bool training) const {
  Tensor h = input(x);
  for (std::size_t i = 0; i < layers.size(); ++i) h = add(h, layers[i](norms[i](h), rng, training));
  return h;
}

void Adapter::collect(const std::string& prefix, nn::ParamList& out) const {
  input.collect(prefix + ".in", out);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    norms[i].collect(prefix + ".norm" + std::to_string(i), out);
    layers[i].collect(prefix + ".ff" + std::to_string(i), out);
  }
}

MultiScaleConv::MultiScaleConv(std::size_t dim, const std::vector<std::size_t>& sizes, Rng& rng)
    : proj(dim * sizes.size(), dim, rng) {
  for (std::size_t k : sizes) {
    kernels.push_back(Tensor::uniform({k, dim}, 1.0 / std::sqrt(static_cast<double>(k)), rng, true));
  }
}

Tensor MultiScaleConv::operator()(const Tensor& x) const {
  std::size_t widest = 0;
  for (const auto& k : kernels) widest = std::max(widest, k.dim(0));
  if (x.rank() != 2 || x.dim(0) < widest) {
    throw ContractError("multiscale conv: sequence of " + std::to_string(x.rank() == 2 ? x.dim(0) : 0) +
                        " tokens is shorter than kernel " + std::to_string(widest));
  }
  std::vector<Tensor> branches;
  for (const auto& k : kernels) branches.push_back(depthwise_conv1d(x, k));
  return add(x, proj(concat(branches, 1)));
}

void MultiScaleConv::collect(const std::string& prefix, nn::ParamList& out) const {
  for (const auto& k : kernels) out.emplace_back(prefix + ".k" + std::to_string(k.dim(0)), k);
  proj.collect(prefix + ".proj", out);
}

FusionLayer::FusionLayer(const FusionConfig& cfg, Rng& rng)
    : conv_e(cfg.dim, cfg.kernels, rng),
      conv_v(cfg.dim, cfg.kernels, rng),
      norm_e(cfg.dim),
      norm_v(cfg.dim),
      attn_ev(cfg.dim, cfg.heads, rng),
      attn_ve(cfg.dim, cfg.heads, rng),
      ff_norm_e(cfg.dim),
      ff_norm_v(cfg.dim),
      ff_e(cfg.dim, cfg.ff_dim, cfg.dropout, rng),
      ff_v(cfg.dim, cfg.ff_dim, cfg.dropout, rng) {}

void FusionLayer::collect(const std::string& prefix, nn::ParamList& out) const {
  conv_e.collect(prefix + ".conv_e", out);
  conv_v.collect(prefix + ".conv_v", out);
  norm_e.collect(prefix + ".norm_e", out);
  norm_v.collect(prefix + ".norm_v", out);
  attn_ev.collect(prefix + ".attn_ev", out);
  attn_ve.collect(prefix + ".attn_ve", out);
  ff_norm_e.collect(prefix + ".ff_norm_e", out);
  ff_norm_v.collect(prefix + ".ff_norm_v", out);
  ff_e.collect(prefix + ".ff_e", out);
  ff_v.collect(prefix + ".ff_v", out);
}

StreamLayer::StreamLayer(const FusionConfig& cfg, Rng& rng)
    : conv(cfg.dim, cfg.kernels, rng), block(cfg.dim, cfg.heads, cfg.ff_dim, cfg.dropout, rng) {}

void StreamLayer::collect(const std::string& prefix, nn::ParamList& out) const {
  conv.collect(prefix + ".conv", out);
  block.collect(prefix + ".block", out);
}

ClassifierHead::ClassifierHead(std::size_t dim, std::size_t hidden, double dropout_rate, Rng& rng)
    : fc1(dim, hidden, rng), fc2(hidden, 2, rng), dropout(dropout_rate) {}

Tensor ClassifierHead::operator()(const Tensor& tokens, Rng& rng, bool training) const {
  return fc2(evf::dropout(gelu(fc1(mean_rows(tokens))), dropout, rng, training));
}

void ClassifierHead::collect(const std::string& prefix, nn::ParamList& out) const {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

FusionModel::FusionModel(const FusionConfig& config, std::size_t eeg_dim, std::size_t video_dim, Rng& rng)
    : config_(config) {
  config_.validate();
  if (config_.variant != ModelVariant::video_only) eeg_adapter_ = Adapter(eeg_dim, config_, rng);
  if (config_.variant != ModelVariant::eeg_only) video_adapter_ = Adapter(video_dim, config_, rng);
  for (std::size_t i = 0; i < config_.fusion_layers; ++i) {
    if (config_.variant == ModelVariant::fusion)
      layers_.emplace_back(config_, rng);
    else
      stream_layers_.emplace_back(config_, rng);
  }
  head_ = ClassifierHead(config_.dim, config_.head_hidden, config_.dropout, rng);
}

AdaptedTokens FusionModel::adapt(const Tensor& eeg, const Tensor& video, Rng& rng, bool training) const {
  AdaptedTokens out;
  if (config_.variant != ModelVariant::video_only) out.eeg = eeg_adapter_(eeg, rng, training);
  if (config_.variant != ModelVariant::eeg_only) out.video = video_adapter_(video, rng, training);
  return out;
}

Tensor FusionModel::cross_attend(const AdaptedTokens& tokens, Rng& rng, bool training,
                                 std::vector<Tensor>* attention) const {
  if (config_.variant != ModelVariant::fusion) {
    Tensor h = config_.variant == ModelVariant::eeg_only ? tokens.eeg : tokens.video;
    if (!h.defined() || h.dim(0) == 0) throw ContractError("fusion: empty token stream");
    for (const auto& layer : stream_layers_) h = layer.block(layer.conv(h), rng, training, attention);
    return h;
  }
  if (!tokens.eeg.defined() || !tokens.video.defined() || tokens.eeg.dim(0) == 0 || tokens.video.dim(0) == 0) {
    throw ContractError("fusion: cross-attention needs both EEG and video tokens");
  }
  Tensor e = tokens.eeg;
  Tensor v = tokens.video;
  for (const auto& layer : layers_) {
    e = layer.conv_e(e);
    v = layer.conv_v(v);
    const Tensor ne = layer.norm_e(e);
    const Tensor nv = layer.norm_v(v);
    const Tensor de = layer.attn_ev(ne, nv, attention);
    const Tensor dv = layer.attn_ve(nv, ne, attention);
    e = add(e, de);
    v = add(v, dv);
    e = add(e, layer.ff_e(layer.ff_norm_e(e), rng, training));
    v = add(v, layer.ff_v(layer.ff_norm_v(v), rng, training));
  }
  return concat({e, v}, 0);
}

Tensor FusionModel::classify(const Tensor& fused, Rng& rng, bool training) const {
  return head_(fused, rng, training);
}

WindowOutput FusionModel::forward(const Tensor& eeg, const Tensor& video, Rng& rng, bool training,
                                  bool keep_attention) const {
  WindowOutput out;
  const AdaptedTokens a = adapt(eeg, video, rng, training);
  if (config_.variant == ModelVariant::fusion && config_.lambda_ot > 0.0) {
    const Tensor cost = cosine_cost(a.eeg, a.video);
    const Matrix c = Matrix::from_tensor(cost);
    out.plan = ipot(c, uniform_marginal(c.rows), uniform_marginal(c.cols), config_.ipot).plan;
    out.ot = ot_loss(out.plan, cost, config_.lambda_ot);
  }
  const Tensor fused = cross_attend(a, rng, training, keep_attention ? &out.attention : nullptr);
  out.logits = classify(fused, rng, training);
  return out;
}

double FusionModel::predict(const Tensor& eeg, const Tensor& video) const {
  NoGradGuard guard;
  Rng unused(0);
  const AdaptedTokens a = adapt(eeg, video, unused, false);
  return seizure_probability(classify(cross_attend(a, unused, false), unused, false));
}

nn::ParamList FusionModel::parameters() const {
  nn::ParamList out;
  if (config_.variant != ModelVariant::video_only) eeg_adapter_.collect("fusion.adapter_eeg", out);
  if (config_.variant != ModelVariant::eeg_only) video_adapter_.collect("fusion.adapter_video", out);
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect("fusion.layer" + std::to_string(i), out);
  for (std::size_t i = 0; i < stream_layers_.size(); ++i)
    stream_layers_[i].collect("fusion.stream" + std::to_string(i), out);
  head_.collect("fusion.head", out);
  return out;
}

Tensor total_loss(const Tensor& logits, std::span<const int> labels, const Tensor& ot_term) {
  Tensor ce = cross_entropy(logits, labels);
  return ot_term.defined() ? add(ce, ot_term) : ce;
}

double seizure_probability(const Tensor& logits) {
  const double a = logits.at(0), b = logits.at(1);
  const double m = std::max(a, b);
  const double ea = std::exp(a - m), eb = std::exp(b - m);
  return eb / (ea + eb);
}

Tensor merge_channels(const Tensor& encoded, std::size_t channels) {
  if (encoded.rank() != 2 || channels == 0 || encoded.dim(0) % channels != 0) {
    throw DimensionError("merge_channels: cannot split " + shape_str(encoded.shape()) + " into " +
                         std::to_string(channels) + " channels");
  }
  const std::size_t n = encoded.dim(0) / channels;
  std::vector<Tensor> parts;
  for (std::size_t c = 0; c < channels; ++c) parts.push_back(slice_rows(encoded, c * n, n));
  return channels == 1 ? parts.front() : concat(parts, 1);
}

TrainResult train_supervised(FusionModel& model, nn::ParamList trainable, const std::vector<WindowInput>& windows,
                             const FeatureSource& features, const TrainSchedule& schedule,
                             const std::function<void(const TrainLogEntry&)>& on_step) {
  if (windows.empty()) throw ContractError("train: no training windows");
  if (schedule.batch_size == 0) throw ConfigError("train: batch size must be positive");
  const std::size_t per_epoch = (windows.size() + schedule.batch_size - 1) / schedule.batch_size;
  AdamWConfig opt_cfg;
  opt_cfg.lr = schedule.lr;
  opt_cfg.lr_min = schedule.lr_min;
  opt_cfg.total_steps = per_epoch * schedule.epochs;
  opt_cfg.weight_decay = schedule.weight_decay;
  AdamW opt(trainable, opt_cfg);
  Rng rng(schedule.seed);

  TrainResult result;
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    for (std::size_t first = 0; first < order.size(); first += schedule.batch_size) {
      const std::size_t last = std::min(order.size(), first + schedule.batch_size);
      nn::zero_grads(trainable);
      std::vector<Tensor> logits;
      std::vector<int> labels;
      Tensor ot_sum;
      for (std::size_t i = first; i < last; ++i) {
        const WindowInput& w = windows[order[i]];
        WindowOutput out = model.forward(features.eeg(w, rng, true), features.video(w), rng, true);
        logits.push_back(out.logits);
        labels.push_back(w.label);
        if (out.ot.defined()) ot_sum = ot_sum.defined() ? add(ot_sum, out.ot) : out.ot;
      }
      Tensor ot_mean;
      if (ot_sum.defined()) ot_mean = scale(ot_sum, 1.0 / static_cast<double>(last - first));
      const Tensor stacked = concat(logits, 0);
      const Tensor ce = cross_entropy(stacked, labels);
      const Tensor loss = ot_mean.defined() ? add(ce, ot_mean) : ce;
      TrainLogEntry entry;
      entry.step = step;
      entry.lr = opt.current_lr();
      entry.ce = ce.item();
      entry.ot = ot_mean.defined() ? ot_mean.item() : 0.0;
      entry.total = loss.item();
      if (!std::isfinite(entry.total)) {
        std::ostringstream os;
        os << "train: loss became " << entry.total << " at step " << step << " (lr " << entry.lr
           << "); lower the learning rate";
        throw NumericError(os.str());
      }
      backward(loss);
      opt.step();
      result.log.push_back(entry);
      epoch_total += entry.total * static_cast<double>(last - first);
      if (on_step) on_step(entry);
      ++step;
    }
    result.epoch_loss.push_back(epoch_total / static_cast<double>(windows.size()));
  }
  return result;
}

std::string train_log_line(const TrainLogEntry& e) {
  nlohmann::json j{{"step", e.step}, {"lr", e.lr}, {"ce", e.ce}, {"ot", e.ot}, {"total", e.total}};
  return j.dump();
}

}  // namespace evf
