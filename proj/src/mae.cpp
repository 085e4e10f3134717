#include "evf/mae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "evf/errors.hpp"
#include "evf/fft.hpp"

namespace evf {

std::size_t MaeConfig::padded_len() const {
  return patch_len == 0 ? 0 : (window_samples + patch_len - 1) / patch_len * patch_len;
}

std::size_t MaeConfig::num_patches() const { return patch_len == 0 ? 0 : padded_len() / patch_len; }

std::size_t MaeConfig::conv_stride() const {
  const std::size_t steps = dim / 2 / conv_channels;
  return patch_len / steps;
}

void MaeConfig::validate() const {
  if (channels == 0) throw ConfigError("mae: need at least one channel");
  if (!fft::is_power_of_two(patch_len)) throw ConfigError("mae: patch length must be a power of two");
  if (dim == 0 || dim % 2 != 0) throw ConfigError("mae: hidden dim must be even");
  if (conv_channels == 0 || (dim / 2) % conv_channels != 0) {
    throw ConfigError("mae: conv channels must divide dim/2");
  }
  const std::size_t steps = dim / 2 / conv_channels;
  if (patch_len % steps != 0) {
    throw ConfigError("mae: patch length " + std::to_string(patch_len) + " is not divisible by the " +
                      std::to_string(steps) + " conv output steps");
  }
  if (conv_kernel % 2 == 0) throw ConfigError("mae: conv kernel must be odd");
  if (enc_heads == 0 || dim % enc_heads != 0 || dec_heads == 0 || dim % dec_heads != 0) {
    throw ConfigError("mae: attention heads must divide dim");
  }
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) throw ConfigError("mae: mask ratio must be in [0, 1)");
  if (window_samples == 0) throw ConfigError("mae: empty window");
}

Tensor PatchGrid::rows() const { return Tensor({channels * patches, patch_len}, values); }

PatchGrid patchify(const std::vector<std::vector<double>>& window, std::size_t patch_len) {
  if (window.empty()) throw DimensionError("patchify: no channels");
  const std::size_t len = window.front().size();
  if (patch_len == 0 || len % patch_len != 0) {
    throw ConfigError("patchify: window length " + std::to_string(len) + " is not divisible by patch length " +
                      std::to_string(patch_len));
  }
  PatchGrid g;
  g.channels = window.size();
  g.patches = len / patch_len;
  g.patch_len = patch_len;
  g.values.reserve(g.channels * len);
  for (const auto& ch : window) {
    if (ch.size() != len) throw DimensionError("patchify: channels differ in length");
    g.values.insert(g.values.end(), ch.begin(), ch.end());
  }
  return g;
}

std::vector<std::vector<double>> unpatchify(const PatchGrid& grid) {
  const std::size_t len = grid.patches * grid.patch_len;
  std::vector<std::vector<double>> out(grid.channels);
  for (std::size_t c = 0; c < grid.channels; ++c) {
    const auto first = grid.values.begin() + static_cast<std::ptrdiff_t>(c * len);
    out[c].assign(first, first + static_cast<std::ptrdiff_t>(len));
  }
  return out;
}

std::vector<std::vector<double>> reflect_pad(const std::vector<std::vector<double>>& window, std::size_t length) {
  std::vector<std::vector<double>> out = window;
  for (auto& ch : out) {
    const std::size_t n = ch.size();
    if (length < n) throw DimensionError("reflect_pad: target shorter than input");
    if (length > n && (n < 2 || length - n > n - 1)) throw DimensionError("reflect_pad: padding exceeds input");
    for (std::size_t k = 1; k <= length - n; ++k) ch.push_back(ch[n - 1 - k]);
  }
  return out;
}

std::vector<std::size_t> MaskPlan::visible_ids() const {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < masked.size(); ++i)
    if (!masked[i]) ids.push_back(i);
  return ids;
}

std::vector<std::size_t> MaskPlan::masked_ids() const {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < masked.size(); ++i)
    if (masked[i]) ids.push_back(i);
  return ids;
}

std::size_t MaskPlan::masked_per_channel() const {
  return static_cast<std::size_t>(std::lround(ratio * static_cast<double>(patches)));
}

MaskPlan make_mask(std::size_t channels, std::size_t patches, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    std::ostringstream os;
    os << "mask ratio " << ratio << " outside [0, 1)";
    throw ConfigError(os.str());
  }
  MaskPlan plan{channels, patches, ratio, std::vector<std::uint8_t>(channels * patches, 0)};
  const std::size_t k = plan.masked_per_channel();
  std::vector<std::size_t> order(patches);
  for (std::size_t c = 0; c < channels; ++c) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < k; ++i) plan.masked[c * patches + order[i]] = 1;
  }
  return plan;
}

Tensor mae_loss(const Tensor& target, const Tensor& reconstruction) {
  if (target.shape() != reconstruction.shape() || target.rank() != 2) {
    throw DimensionError("mae_loss: target " + shape_str(target.shape()) + " vs reconstruction " +
                         shape_str(reconstruction.shape()));
  }
  if (target.dim(0) == 0) throw ContractError("mae_loss: no masked patches");
  return scale(sum(square(sub(reconstruction, target))), 1.0 / static_cast<double>(target.dim(0)));
}

MaeModel::MaeModel(const MaeConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t d = config_.dim;
  const std::size_t positions = config_.channels * config_.num_patches();
  const double conv_bound = 1.0 / std::sqrt(static_cast<double>(config_.conv_kernel));
  conv_kernels_ = Tensor::uniform({config_.conv_channels, 1, config_.conv_kernel}, conv_bound, rng, true);
  freq_proj_ = nn::Linear(config_.patch_len / 2 + 1, d / 2, rng);
  pos_ = Tensor::randn({positions, d}, 0.02, rng, true);
  for (std::size_t i = 0; i < config_.enc_layers; ++i) {
    encoder_.emplace_back(d, config_.enc_heads, config_.ff_dim, config_.dropout, rng);
  }
  enc_norm_ = nn::LayerNorm(d);
  mask_token_ = Tensor::randn({1, d}, 0.02, rng, true);
  dec_pos_ = Tensor::randn({positions, d}, 0.02, rng, true);
  for (std::size_t i = 0; i < config_.dec_layers; ++i) {
    decoder_.emplace_back(d, config_.dec_heads, config_.ff_dim, config_.dropout, rng);
  }
  dec_norm_ = nn::LayerNorm(d);
  head_ = nn::Linear(d, config_.patch_len, rng);
}

Tensor MaeModel::embed(const Tensor& patches) const {
  if (patches.rank() != 2 || patches.dim(1) != config_.patch_len) {
    throw DimensionError("mae embed: expected [B x " + std::to_string(config_.patch_len) + "], got " +
                         shape_str(patches.shape()));
  }
  const std::size_t b = patches.dim(0);
  const std::size_t k = config_.conv_kernel;
  Tensor x = reshape(patches, {b, 1, config_.patch_len});
  Tensor e_time = conv1d(x, conv_kernels_, config_.conv_stride(), k / 2);
  e_time = reshape(e_time, {b, config_.dim / 2});
  Tensor e_freq = freq_proj_(rfft_magnitude(patches));
  return concat({e_time, e_freq}, 1);
}

Tensor MaeModel::tokens(const PatchGrid& grid) const {
  if (grid.channels != config_.channels || grid.patches != config_.num_patches() ||
      grid.patch_len != config_.patch_len) {
    throw DimensionError("mae: grid " + std::to_string(grid.channels) + "x" + std::to_string(grid.patches) + "x" +
                         std::to_string(grid.patch_len) + " does not match the model config");
  }
  return add(embed(grid.rows()), pos_);
}

Tensor MaeModel::encode(const Tensor& visible, Rng& rng, bool training, std::vector<Tensor>* attention) const {
  if (visible.rank() != 2 || visible.dim(0) == 0) throw ContractError("mae encode: empty visible token set");
  Tensor h = visible;
  for (const auto& block : encoder_) h = block(h, rng, training, attention);
  return enc_norm_(h);
}

Tensor MaeModel::decode(const Tensor& encoded, const MaskPlan& plan, Rng& rng, bool training) const {
  const auto vis = plan.visible_ids();
  const auto hid = plan.masked_ids();
  if (encoded.rank() != 2 || encoded.dim(0) != vis.size()) {
    throw ContractError("mae decode: " + shape_str(encoded.shape()) + " encoded rows for " +
                        std::to_string(vis.size()) + " visible positions");
  }
  if (plan.masked.size() != config_.channels * config_.num_patches()) {
    throw ContractError("mae decode: mask plan does not match the model grid");
  }
  // Row r of [encoded; mask tokens] feeds position p.
  std::vector<std::size_t> source(plan.masked.size());
  for (std::size_t i = 0; i < vis.size(); ++i) source[vis[i]] = i;
  for (std::size_t i = 0; i < hid.size(); ++i) source[hid[i]] = vis.size();
  const std::vector<std::size_t> one(1, 0);
  Tensor pool = concat({encoded, gather_rows(mask_token_, one)}, 0);
  Tensor h = add(gather_rows(pool, source), dec_pos_);
  for (const auto& block : decoder_) h = block(h, rng, training);
  h = dec_norm_(gather_rows(h, hid));
  return head_(h);
}

MaeModel::Forward MaeModel::forward(const PatchGrid& grid, const MaskPlan& plan, Rng& rng, bool training) const {
  Forward f;
  f.plan = plan;
  Tensor z = tokens(grid);
  Tensor h = encode(gather_rows(z, plan.visible_ids()), rng, training);
  f.reconstruction = decode(h, plan, rng, training);
  f.target = gather_rows(grid.rows(), plan.masked_ids()).detach();
  f.loss = mae_loss(f.target, f.reconstruction);
  return f;
}

MaeModel::Forward MaeModel::forward(const PatchGrid& grid, Rng& rng, bool training) const {
  return forward(grid, make_mask(grid.channels, grid.patches, config_.mask_ratio, rng), rng, training);
}

Tensor MaeModel::encode_all(const PatchGrid& grid) const {
  Rng unused(0);
  return encode(tokens(grid), unused, false);
}

nn::ParamList MaeModel::encoder_parameters() const {
  nn::ParamList out;
  out.emplace_back("mae.embed.conv", conv_kernels_);
  freq_proj_.collect("mae.embed.freq", out);
  out.emplace_back("mae.pos", pos_);
  for (std::size_t i = 0; i < encoder_.size(); ++i) encoder_[i].collect("mae.enc." + std::to_string(i), out);
  enc_norm_.collect("mae.enc_norm", out);
  return out;
}

nn::ParamList MaeModel::parameters() const {
  nn::ParamList out = encoder_parameters();
  out.emplace_back("mae.mask_token", mask_token_);
  out.emplace_back("mae.dec_pos", dec_pos_);
  for (std::size_t i = 0; i < decoder_.size(); ++i) decoder_[i].collect("mae.dec." + std::to_string(i), out);
  dec_norm_.collect("mae.dec_norm", out);
  head_.collect("mae.head", out);
  return out;
}

NormalizedEeg prepare_eeg(const EegRecording& rec, const PreprocessConfig& preprocess_config) {
  const EegRecording clean = preprocess(rec, preprocess_config);
  NormalizedEeg out;
  out.sample_rate = clean.sample_rate;
  for (const auto& ch : clean.channels) {
    std::vector<double> tmp = ch;
    auto mid = tmp.begin() + static_cast<std::ptrdiff_t>(tmp.size() / 2);
    std::nth_element(tmp.begin(), mid, tmp.end());
    const double med = *mid;
    for (double& v : tmp) v = std::abs(v - med);
    std::nth_element(tmp.begin(), mid, tmp.end());
    double s = 1.4826 * *mid;
    if (!(s > 0.0)) s = 1.0;
    std::vector<double> x(ch.size());
    for (std::size_t i = 0; i < ch.size(); ++i) x[i] = (ch[i] - med) / s;
    out.channels.push_back(std::move(x));
    out.scale.push_back(s);
  }
  return out;
}

PatchGrid window_grid(const NormalizedEeg& eeg, double start_s, const MaeConfig& config) {
  const auto first = static_cast<std::size_t>(std::llround(start_s * eeg.sample_rate));
  if (first + config.window_samples > eeg.num_samples()) {
    throw DataError("window at " + std::to_string(start_s) + " s runs past the end of the recording");
  }
  if (eeg.channels.size() != config.channels) {
    throw DimensionError("recording has " + std::to_string(eeg.channels.size()) + " channels, model expects " +
                         std::to_string(config.channels));
  }
  std::vector<std::vector<double>> w(eeg.channels.size());
  for (std::size_t c = 0; c < w.size(); ++c) {
    const auto it = eeg.channels[c].begin() + static_cast<std::ptrdiff_t>(first);
    w[c].assign(it, it + static_cast<std::ptrdiff_t>(config.window_samples));
  }
  return patchify(reflect_pad(w, config.padded_len()), config.patch_len);
}

double evaluate_mae(const MaeModel& model, const std::vector<PatchGrid>& grids, const std::vector<MaskPlan>& plans) {
  NoGradGuard guard;
  Rng unused(0);
  double total = 0.0;
  for (std::size_t i = 0; i < grids.size(); ++i) total += model.forward(grids[i], plans[i], unused, false).loss.item();
  return grids.empty() ? 0.0 : total / static_cast<double>(grids.size());
}

PretrainResult pretrain(MaeModel& model, const std::vector<NormalizedEeg>& sessions,
                        const std::vector<WindowRef>& windows, const PretrainSchedule& schedule,
                        const std::function<void(std::size_t, double, double)>& on_step) {
  if (windows.empty()) throw ContractError("pretrain: no windows to train on");
  if (schedule.batch_size == 0) throw ConfigError("pretrain: batch size must be positive");
  const MaeConfig& cfg = model.config();
  Rng rng(schedule.seed);
  std::uniform_int_distribution<std::size_t> pick(0, windows.size() - 1);

  std::vector<PatchGrid> eval_grids;
  std::vector<MaskPlan> eval_plans;
  {
    Rng eval_rng(schedule.seed ^ 0x5eedull);
    for (std::size_t i = 0; i < schedule.eval_batch; ++i) {
      const auto& w = windows[pick(eval_rng)];
      eval_grids.push_back(window_grid(sessions[w.session], w.start_s, cfg));
      eval_plans.push_back(make_mask(cfg.channels, cfg.num_patches(), cfg.mask_ratio, eval_rng));
    }
  }

  nn::ParamList params = model.parameters();
  AdamWConfig opt_cfg;
  opt_cfg.lr = schedule.lr;
  opt_cfg.lr_min = schedule.lr_min;
  opt_cfg.total_steps = schedule.steps;
  opt_cfg.weight_decay = schedule.weight_decay;
  AdamW opt(params, opt_cfg);

  PretrainResult result;
  result.initial_eval_loss = evaluate_mae(model, eval_grids, eval_plans);
  for (std::size_t step = 0; step < schedule.steps; ++step) {
    nn::zero_grads(params);
    Tensor total;
    for (std::size_t b = 0; b < schedule.batch_size; ++b) {
      const auto& w = windows[pick(rng)];
      auto f = model.forward(window_grid(sessions[w.session], w.start_s, cfg), rng, true);
      total = total.defined() ? add(total, f.loss) : f.loss;
    }
    Tensor loss = scale(total, 1.0 / static_cast<double>(schedule.batch_size));
    const double value = loss.item();
    if (!std::isfinite(value)) {
      std::ostringstream os;
      os << "pretrain: loss became " << value << " at step " << step << " (lr " << opt.current_lr()
         << "); lower the learning rate or check the input scaling";
      throw NumericError(os.str());
    }
    const double lr = opt.current_lr();
    backward(loss);
    opt.step();
    result.train_losses.push_back(value);
    if (on_step) on_step(step, lr, value);
  }
  result.final_eval_loss = evaluate_mae(model, eval_grids, eval_plans);
  return result;
}

}  // namespace evf
