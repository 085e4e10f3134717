#pragma once

// Patch-based masked autoencoder for multichannel EEG windows.
//
// A window [C x L] is reflect-padded to a multiple of the patch length P
// and cut into C x N patches. Each patch becomes a D-dim token: half from a
// strided temporal convolution, half from a linear map of its magnitude
// spectrum, plus a learned (channel, patch) position embedding. Per channel
// round(rho N) patches are hidden; the encoder sees only the rest and the
// decoder reconstructs the hidden patches from mask tokens.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "evf/checkpoint.hpp"
#include "evf/dsp.hpp"
#include "evf/nn.hpp"
#include "evf/optim.hpp"

namespace evf {

struct MaeConfig {
  std::size_t channels = 2;
  std::size_t window_samples = 2000;  // 10 s at 200 Hz
  std::size_t patch_len = 256;
  std::size_t dim = 128;
  std::size_t enc_layers = 8;
  std::size_t enc_heads = 8;
  std::size_t dec_layers = 4;
  std::size_t dec_heads = 8;
  std::size_t ff_dim = 2048;
  double mask_ratio = 0.75;
  std::size_t conv_kernel = 7;
  std::size_t conv_channels = 4;
  double dropout = 0.0;

  std::size_t padded_len() const;   // window_samples rounded up to a multiple of patch_len
  std::size_t num_patches() const;  // N
  std::size_t conv_stride() const;
  // Throws ConfigError on inconsistent settings.
  void validate() const;
};

struct PatchGrid {
  std::size_t channels = 0;
  std::size_t patches = 0;
  std::size_t patch_len = 0;
  std::vector<double> values;  // channel-major: (c * N + n) * P + k

  // One row per patch, rows ordered (c, n) channel-major: [C*N x P].
  Tensor rows() const;
};

// `window` is [C x L]. Throws ConfigError when L is not a multiple of P.
PatchGrid patchify(const std::vector<std::vector<double>>& window, std::size_t patch_len);
std::vector<std::vector<double>> unpatchify(const PatchGrid& grid);

// Extends each trace to `length` samples by mirroring about the last sample.
std::vector<std::vector<double>> reflect_pad(const std::vector<std::vector<double>>& window, std::size_t length);

struct MaskPlan {
  std::size_t channels = 0;
  std::size_t patches = 0;
  double ratio = 0.0;
  std::vector<std::uint8_t> masked;  // C*N flags, channel-major

  std::vector<std::size_t> visible_ids() const;
  std::vector<std::size_t> masked_ids() const;
  std::size_t masked_per_channel() const;
};

// Masks exactly round(ratio * N) patches of every channel. Throws
// ConfigError unless 0 <= ratio < 1.
MaskPlan make_mask(std::size_t channels, std::size_t patches, double ratio, Rng& rng);

// Mean over masked patches of the squared L2 patch error. Throws
// ContractError for an empty mask set, DimensionError on shape mismatch.
Tensor mae_loss(const Tensor& target, const Tensor& reconstruction);

class MaeModel {
 public:
  MaeModel() = default;
  MaeModel(const MaeConfig& config, Rng& rng);

  const MaeConfig& config() const { return config_; }

  // Dual-domain embedding of patch rows [B x P] -> [B x D], no position term.
  Tensor embed(const Tensor& patches) const;
  // embed + position embedding for a full grid: [C*N x D].
  Tensor tokens(const PatchGrid& grid) const;
  // Encoder over visible tokens [V x D]. Throws ContractError when V == 0.
  Tensor encode(const Tensor& visible, Rng& rng, bool training,
                std::vector<Tensor>* attention = nullptr) const;
  // Reconstruction of the masked patches [M x P]. Throws ContractError when
  // `encoded` does not have one row per visible position of `plan`.
  Tensor decode(const Tensor& encoded, const MaskPlan& plan, Rng& rng, bool training) const;

  struct Forward {
    Tensor loss;
    Tensor reconstruction;
    Tensor target;
    MaskPlan plan;
  };
  Forward forward(const PatchGrid& grid, const MaskPlan& plan, Rng& rng, bool training) const;
  Forward forward(const PatchGrid& grid, Rng& rng, bool training) const;

  // Frozen-feature path: every token visible, eval mode. [C*N x D]
  Tensor encode_all(const PatchGrid& grid) const;

  nn::ParamList parameters() const;
  // Embedding, position table and encoder stack (the part reused downstream).
  nn::ParamList encoder_parameters() const;

 private:
  MaeConfig config_;
  Tensor conv_kernels_;  // [conv_channels x 1 x conv_kernel]
  nn::Linear freq_proj_;
  Tensor pos_;  // [C*N x D]
  std::vector<nn::TransformerBlock> encoder_;
  nn::LayerNorm enc_norm_;
  Tensor mask_token_;  // [1 x D]
  Tensor dec_pos_;     // [C*N x D]
  std::vector<nn::TransformerBlock> decoder_;
  nn::LayerNorm dec_norm_;
  nn::Linear head_;
};

// Preprocessed EEG scaled per channel by a robust spread estimate
// (1.4826 * median absolute deviation).
struct NormalizedEeg {
  double sample_rate = 200.0;
  std::vector<std::vector<double>> channels;
  std::vector<double> scale;

  std::size_t num_samples() const { return channels.empty() ? 0 : channels.front().size(); }
};

NormalizedEeg prepare_eeg(const EegRecording& rec, const PreprocessConfig& preprocess_config = {});

// Patches of the 10 s window starting at `start_s`, padded as the config asks.
PatchGrid window_grid(const NormalizedEeg& eeg, double start_s, const MaeConfig& config);

struct PretrainSchedule {
  std::size_t steps = 200;
  std::size_t batch_size = 8;
  double lr = 1e-4;
  double lr_min = 0.0;
  double weight_decay = 0.05;
  std::uint64_t seed = 0;
  std::size_t eval_batch = 16;  // fixed windows and masks used to track the loss
};

struct WindowRef {
  std::size_t session = 0;
  double start_s = 0.0;
};

struct PretrainResult {
  std::vector<double> train_losses;  // per step, mean over the batch
  double initial_eval_loss = 0.0;
  double final_eval_loss = 0.0;
};

// AdamW pre-training on windows drawn uniformly from `windows`. Throws
// NumericError when the loss becomes non-finite and ContractError for an
// empty window pool. `on_step(step, lr, loss)` is called after every step.
PretrainResult pretrain(MaeModel& model, const std::vector<NormalizedEeg>& sessions,
                        const std::vector<WindowRef>& windows, const PretrainSchedule& schedule,
                        const std::function<void(std::size_t, double, double)>& on_step = {});

// Mean loss over a fixed set of grids and masks (eval mode).
double evaluate_mae(const MaeModel& model, const std::vector<PatchGrid>& grids, const std::vector<MaskPlan>& plans);

}  // namespace evf
