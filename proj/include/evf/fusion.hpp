#pragma once

// Video-EEG fusion classifier: modality adapters, multi-scale temporal
// convolutions, bidirectional cross-attention, OT alignment loss and a
// two-layer classification head, plus single-modality variants.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "evf/mae.hpp"
#include "evf/ot.hpp"

namespace evf {

enum class ModelVariant { fusion, eeg_only, video_only };

ModelVariant parse_variant(const std::string& s);
std::string to_string(ModelVariant v);

struct FusionConfig {
  std::size_t dim = 128;  // D_f
  std::size_t adapter_layers = 4;
  std::size_t fusion_layers = 4;
  std::vector<std::size_t> kernels{3, 5, 7};
  std::size_t heads = 8;
  std::size_t ff_dim = 512;
  std::size_t head_hidden = 128;
  double dropout = 0.1;
  double lambda_ot = 0.1;
  IpotParams ipot;
  double threshold = 0.5;
  ModelVariant variant = ModelVariant::fusion;

  void validate() const;
};

// Pre-norm residual feed-forward stack after an input projection.
struct Adapter {
  nn::Linear input;
  std::vector<nn::LayerNorm> norms;
  std::vector<nn::FeedForward> layers;

  Adapter() = default;
  Adapter(std::size_t in, const FusionConfig& cfg, Rng& rng);
  Tensor operator()(const Tensor& x, Rng& rng, bool training) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

// Depthwise temporal convolutions at several kernel sizes, concatenated,
// projected back to D_f and added to the input.
struct MultiScaleConv {
  std::vector<Tensor> kernels;  // [k x D] each
  nn::Linear proj;

  MultiScaleConv() = default;
  MultiScaleConv(std::size_t dim, const std::vector<std::size_t>& sizes, Rng& rng);
  // Throws ContractError when the sequence is shorter than the largest kernel.
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

// One fusion layer. Both streams are updated from their pre-update states.
struct FusionLayer {
  MultiScaleConv conv_e, conv_v;
  nn::LayerNorm norm_e, norm_v;
  nn::MultiHeadAttention attn_ev;  // EEG queries video
  nn::MultiHeadAttention attn_ve;  // video queries EEG
  nn::LayerNorm ff_norm_e, ff_norm_v;
  nn::FeedForward ff_e, ff_v;

  FusionLayer() = default;
  FusionLayer(const FusionConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

// Single-stream layer for the unimodal variants (self-attention).
struct StreamLayer {
  MultiScaleConv conv;
  nn::TransformerBlock block;

  StreamLayer() = default;
  StreamLayer(const FusionConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

struct ClassifierHead {
  nn::Linear fc1, fc2;
  double dropout = 0.1;

  ClassifierHead() = default;
  ClassifierHead(std::size_t dim, std::size_t hidden, double dropout_rate, Rng& rng);
  // Mean-pools tokens [T x D] and returns logits [1 x 2].
  Tensor operator()(const Tensor& tokens, Rng& rng, bool training) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

struct AdaptedTokens {
  Tensor eeg;    // [N_e x D_f]
  Tensor video;  // [N_v x D_f]
};

struct WindowOutput {
  Tensor logits;  // [1 x 2]
  Tensor ot;      // scalar, lambda_ot * tr(C^T T); undefined when not computed
  Matrix plan;
  std::vector<Tensor> attention;  // per layer, per head (when requested)
};

class FusionModel {
 public:
  FusionModel() = default;
  // eeg_dim: per-time-step EEG feature width (channels * MAE dim);
  // video_dim: video token width.
  FusionModel(const FusionConfig& config, std::size_t eeg_dim, std::size_t video_dim, Rng& rng);

  const FusionConfig& config() const { return config_; }

  AdaptedTokens adapt(const Tensor& eeg, const Tensor& video, Rng& rng, bool training) const;
  // Fusion layers over adapted streams; returns both streams stacked [N_e+N_v x D_f].
  Tensor cross_attend(const AdaptedTokens& tokens, Rng& rng, bool training,
                      std::vector<Tensor>* attention = nullptr) const;
  Tensor classify(const Tensor& fused, Rng& rng, bool training) const;

  // Full window pass. eeg: [N_e x eeg_dim], video: [N_v x video_dim].
  WindowOutput forward(const Tensor& eeg, const Tensor& video, Rng& rng, bool training,
                       bool keep_attention = false) const;
  // Seizure probability in eval mode.
  double predict(const Tensor& eeg, const Tensor& video) const;

  nn::ParamList parameters() const;

 private:
  FusionConfig config_;
  Adapter eeg_adapter_, video_adapter_;
  std::vector<FusionLayer> layers_;
  std::vector<StreamLayer> stream_layers_;
  ClassifierHead head_;
};

// Cross-entropy plus OT term (the OT term is skipped when undefined).
Tensor total_loss(const Tensor& logits, std::span<const int> labels, const Tensor& ot_term);

// Seizure probability from logits [1 x 2].
double seizure_probability(const Tensor& logits);

// Concatenates the channels of encoder output [C*N x D] per patch index:
// row n = [h(0, n), h(1, n), ...] -> [N x C*D].
Tensor merge_channels(const Tensor& encoded, std::size_t channels);

// Everything the classifier needs for one window.
struct WindowInput {
  std::size_t session = 0;
  std::size_t window = 0;
  double start_s = 0.0;
  int label = 0;
};

// Supplies per-window EEG features (possibly differentiable) and video tokens.
struct FeatureSource {
  std::function<Tensor(const WindowInput&, Rng&, bool)> eeg;
  std::function<Tensor(const WindowInput&)> video;
};

struct TrainSchedule {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr = 1e-4;
  double lr_min = 1e-6;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
};

struct TrainLogEntry {
  std::size_t step = 0;
  double lr = 0.0;
  double ce = 0.0;
  double ot = 0.0;
  double total = 0.0;
};

struct TrainResult {
  std::vector<TrainLogEntry> log;
  std::vector<double> epoch_loss;
};

// Trains `trainable` (the classifier parameters, plus the encoder under the
// no-pretrain ablation) with AdamW and a per-step cosine schedule. Throws
// NumericError when the loss becomes non-finite.
TrainResult train_supervised(FusionModel& model, nn::ParamList trainable, const std::vector<WindowInput>& windows,
                             const FeatureSource& features, const TrainSchedule& schedule,
                             const std::function<void(const TrainLogEntry&)>& on_step = {});

std::string train_log_line(const TrainLogEntry& e);

}  // namespace evf
