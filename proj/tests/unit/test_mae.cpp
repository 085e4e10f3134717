#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <vector>

#include "doctest.h"
#include "evf/errors.hpp"
#include "evf/mae.hpp"
#include "evf/synth.hpp"
#include "support.hpp"

using namespace evf;
using evf::testing::grad_check;
using evf::testing::mini_mae_config;
using evf::testing::random_grid;

namespace {

Tensor find_param(const nn::ParamList& params, const std::string& name) {
  for (const auto& [n, t] : params)
    if (n == name) return t;
  FAIL("missing parameter " << name);
  return {};
}

std::vector<NormalizedEeg> tiny_eeg(std::vector<WindowRef>& windows) {
  GeneratorSpec g;
  g.sessions = 2;
  g.subjects = 1;
  g.duration_s = 120.0;
  g.seizures_per_session = 1.0;
  g.video_tokens = 2;
  g.video_dim = 2;
  std::vector<NormalizedEeg> out;
  for (const auto& s : generate_synthetic_corpus(g)) {
    for (std::size_t w = 0; w + 10 <= 120; w += 5) windows.push_back({out.size(), static_cast<double>(w)});
    out.push_back(prepare_eeg(s.recording));
  }
  return out;
}

MaeConfig small_config() {
  MaeConfig c;
  c.dim = 16;
  c.enc_layers = 1;
  c.enc_heads = 2;
  c.dec_layers = 1;
  c.dec_heads = 2;
  c.ff_dim = 32;
  return c;
}

}  // namespace

TEST_SUITE("mae") {
  TEST_CASE("patchify examples") {
    std::vector<std::vector<double>> w2000(2, std::vector<double>(2000, 1.0));
    CHECK_THROWS_AS(patchify(w2000, 256), ConfigError);
    const auto padded = reflect_pad(w2000, 2048);
    const auto grid = patchify(padded, 256);
    CHECK(grid.patches == 8);
    CHECK(grid.channels == 2);
    CHECK(unpatchify(grid) == padded);

    MaeConfig c;
    CHECK(c.padded_len() == 2048);
    CHECK(c.num_patches() == 8);
    CHECK(c.conv_stride() == 16);
  }

  TEST_CASE("reflect padding mirrors about the last sample") {
    const auto p = reflect_pad({{1, 2, 3, 4}}, 7);
    CHECK(p[0] == std::vector<double>{1, 2, 3, 4, 3, 2, 1});
  }

  TEST_CASE("mask examples") {
    Rng rng(1);
    const auto m = make_mask(2, 16, 0.75, rng);
    CHECK(m.masked_per_channel() == 12);
    for (std::size_t c = 0; c < 2; ++c) {
      std::size_t count = 0;
      for (std::size_t n = 0; n < 16; ++n) count += m.masked[c * 16 + n];
      CHECK(count == 12);
    }
    CHECK(m.visible_ids().size() == 8);

    const auto none = make_mask(3, 8, 0.0, rng);
    CHECK(none.masked_ids().empty());
    CHECK(none.visible_ids().size() == 24);

    const auto half = make_mask(2, 10, 0.5, rng);
    CHECK(half.masked_per_channel() == 5);
    std::set<std::size_t> all;
    for (auto i : half.visible_ids()) CHECK(all.insert(i).second);
    for (auto i : half.masked_ids()) CHECK(all.insert(i).second);
    CHECK(all.size() == 20);
    CHECK_THROWS_AS(make_mask(2, 10, 1.0, rng), ConfigError);
  }

  TEST_CASE("mae loss examples") {
    const Tensor x = Tensor({2, 4}, std::vector<double>(8, 0.0));
    const Tensor y = Tensor({2, 4}, std::vector<double>(8, 1.0));
    CHECK(mae_loss(x, y).item() == 4.0);
    CHECK(mae_loss(y, y).item() == 0.0);
    Rng rng(2);
    for (int i = 0; i < 10; ++i) CHECK(mae_loss(Tensor::randn({3, 4}, 1.0, rng), Tensor::randn({3, 4}, 1.0, rng)).item() >= 0.0);
    CHECK_THROWS_AS(mae_loss(Tensor({0, 4}), Tensor({0, 4})), ContractError);
    CHECK_THROWS_AS(mae_loss(Tensor({2, 4}), Tensor({2, 3})), DimensionError);
  }

  TEST_CASE("embedding examples") {
    Rng rng(3);
    const MaeModel model(mini_mae_config(), rng);
    const auto params = model.parameters();
    Tensor bias = find_param(params, "mae.embed.freq.bias");
    std::fill(bias.mutable_data().begin(), bias.mutable_data().end(), 0.0);
    PatchGrid zero = random_grid(mini_mae_config(), 1);
    std::fill(zero.values.begin(), zero.values.end(), 0.0);
    const Tensor tok = model.tokens(zero);
    const Tensor pos = find_param(params, "mae.pos");
    REQUIRE(tok.shape() == pos.shape());
    for (std::size_t i = 0; i < tok.numel(); ++i) CHECK(tok.at(i) == pos.at(i));

    for (std::size_t p : {16u, 32u, 64u}) {
      MaeConfig c = mini_mae_config();
      c.patch_len = p;
      c.window_samples = 4 * p;
      Rng r(4);
      const MaeModel m(c, r);
      CHECK(m.embed(Tensor::randn({3, p}, 1.0, r)).shape() == Shape{3, 8});
    }

    Tensor patch = Tensor::randn({2, 16}, 1.0, rng);
    const auto gc = grad_check([&] { return evf::testing::project(model.embed(patch)); }, {patch});
    CHECK(gc.worst < 1e-4);
  }

  TEST_CASE("encoder examples") {
    Rng rng(5);
    const MaeModel model(mini_mae_config(), rng);
    const Tensor one = model.encode(Tensor::randn({1, 8}, 1.0, rng), rng, false);
    CHECK(one.shape() == Shape{1, 8});
    for (double v : one.data()) CHECK(std::isfinite(v));
    CHECK_THROWS_AS(model.encode(Tensor({0, 8}), rng, false), ContractError);

    const PatchGrid grid = random_grid(mini_mae_config(), 6);
    const Tensor toks = model.tokens(grid);
    const std::vector<std::size_t> order{0, 1, 2, 3, 4, 5, 6, 7};
    const std::vector<std::size_t> perm{5, 2, 7, 0, 3, 6, 1, 4};
    std::vector<Tensor> attn;
    const Tensor a = model.encode(gather_rows(toks, order), rng, false, &attn);
    const Tensor b = model.encode(gather_rows(toks, perm), rng, false);
    for (std::size_t i = 0; i < perm.size(); ++i)
      for (std::size_t d = 0; d < 8; ++d) CHECK(b.at(i, d) == doctest::Approx(a.at(perm[i], d)).epsilon(1e-12));
    REQUIRE_FALSE(attn.empty());
    for (const auto& w : attn)
      for (std::size_t r = 0; r < w.dim(0); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < w.dim(1); ++c) acc += w.at(r, c);
        CHECK(std::abs(acc - 1.0) < 1e-12);
      }
  }

  TEST_CASE("decoder examples") {
    Rng rng(7);
    const MaeConfig cfg = mini_mae_config();
    const MaeModel model(cfg, rng);
    PatchGrid zero = random_grid(cfg, 1);
    std::fill(zero.values.begin(), zero.values.end(), 0.0);
    const auto f = model.forward(zero, rng, false);
    CHECK(f.reconstruction.shape() == Shape{f.plan.masked_ids().size(), cfg.patch_len});
    for (double v : f.reconstruction.data()) CHECK(std::isfinite(v));

    MaskPlan plan = make_mask(cfg.channels, cfg.num_patches(), 0.5, rng);
    const Tensor enc = model.encode(gather_rows(model.tokens(zero), plan.visible_ids()), rng, false);
    MaskPlan other = make_mask(cfg.channels, cfg.num_patches(), 0.25, rng);
    CHECK_THROWS_AS(model.decode(enc, other, rng, false), ContractError);
  }

  TEST_CASE("loss ignores visible patches") {
    Rng rng(8);
    const MaeConfig cfg = mini_mae_config();
    const MaeModel model(cfg, rng);
    const PatchGrid grid = random_grid(cfg, 9);
    const MaskPlan plan = make_mask(cfg.channels, cfg.num_patches(), 0.5, rng);
    const auto f = model.forward(grid, plan, rng, false);
    const auto ids = plan.masked_ids();
    CHECK(mae_loss(gather_rows(grid.rows(), ids), f.reconstruction).item() == f.loss.item());
    PatchGrid perturbed = grid;
    for (std::size_t v : plan.visible_ids())
      for (std::size_t k = 0; k < cfg.patch_len; ++k) perturbed.values[v * cfg.patch_len + k] += 3.0;
    CHECK(mae_loss(gather_rows(perturbed.rows(), ids), f.reconstruction).item() == f.loss.item());
  }

  TEST_CASE("miniature model gradients match finite differences") {
    Rng rng(10);
    const MaeConfig cfg = mini_mae_config();
    const MaeModel model(cfg, rng);
    const PatchGrid grid = random_grid(cfg, 11);
    const MaskPlan plan = make_mask(cfg.channels, cfg.num_patches(), cfg.mask_ratio, rng);
    const auto gc = grad_check([&] { return model.forward(grid, plan, rng, false).loss; },
                               evf::testing::tensors_of(model.parameters()));
    CHECK(gc.checked == nn::count_scalars(model.parameters()));
    CHECK(gc.worst < 1e-3);
  }

  TEST_CASE("overfits a single repeated patch") {
    MaeConfig cfg;
    cfg.channels = 1;
    cfg.window_samples = 256;
    cfg.patch_len = 32;
    cfg.dim = 16;
    cfg.enc_layers = 1;
    cfg.enc_heads = 2;
    cfg.dec_layers = 1;
    cfg.dec_heads = 2;
    cfg.ff_dim = 32;
    Rng rng(12);
    const MaeModel model(cfg, rng);
    std::vector<double> patch(32);
    for (std::size_t k = 0; k < 32; ++k) patch[k] = std::sin(2.0 * std::numbers::pi * 3.0 * static_cast<double>(k) / 32.0) + 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / 32.0);
    std::vector<std::vector<double>> w(1);
    for (int r = 0; r < 8; ++r) w[0].insert(w[0].end(), patch.begin(), patch.end());
    const PatchGrid grid = patchify(w, 32);
    double mean = 0.0, var = 0.0;
    for (double v : patch) mean += v / 32.0;
    for (double v : patch) var += (v - mean) * (v - mean) / 32.0;

    AdamWConfig oc;
    oc.lr = 1e-2;
    oc.lr_min = 1e-3;
    oc.total_steps = 300;
    oc.weight_decay = 0.0;
    AdamW opt(model.parameters(), oc);
    for (int step = 0; step < 300; ++step) {
      nn::ParamList params = model.parameters();
      nn::zero_grads(params);
      backward(model.forward(grid, rng, true).loss);
      opt.step();
    }
    const double mse = model.forward(grid, rng, false).loss.item() / 32.0;
    CHECK(mse < 0.01 * var);
  }

  TEST_CASE("pretraining is deterministic and frozen at zero learning rate") {
    std::vector<WindowRef> windows;
    const auto eeg = tiny_eeg(windows);
    PretrainSchedule sched;
    sched.steps = 4;
    sched.batch_size = 2;
    sched.eval_batch = 4;
    sched.lr = 1e-3;
    sched.seed = 3;
    Rng r1(1), r2(1);
    MaeModel a(small_config(), r1), b(small_config(), r2);
    const auto ra = pretrain(a, eeg, windows, sched);
    const auto rb = pretrain(b, eeg, windows, sched);
    CHECK(ra.train_losses == rb.train_losses);
    CHECK(nn::checksum(a.parameters()) == nn::checksum(b.parameters()));

    sched.lr = 0.0;
    sched.lr_min = 0.0;
    Rng r3(1);
    MaeModel c(small_config(), r3);
    const auto before = nn::checksum(c.parameters());
    const auto rc = pretrain(c, eeg, windows, sched);
    CHECK(nn::checksum(c.parameters()) == before);
    CHECK(std::abs(rc.final_eval_loss - rc.initial_eval_loss) < 1e-12);
    CHECK_THROWS_AS(pretrain(c, eeg, {}, sched), ContractError);
  }

  TEST_CASE("robust scaling gives unit MAD") {
    std::vector<WindowRef> windows;
    const auto eeg = tiny_eeg(windows);
    for (const auto& ch : eeg[0].channels) {
      std::vector<double> a(ch.size());
      for (std::size_t i = 0; i < ch.size(); ++i) a[i] = std::abs(ch[i]);
      std::nth_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(a.size() / 2), a.end());
      CHECK(1.4826 * a[a.size() / 2] == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK(window_grid(eeg[0], 0.0, MaeConfig{}).patches == 8);
    CHECK_THROWS_AS(window_grid(eeg[0], 115.0, MaeConfig{}), DataError);
  }

  TEST_CASE("config validation") {
    MaeConfig c;
    c.patch_len = 200;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = MaeConfig{};
    c.enc_heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = MaeConfig{};
    c.mask_ratio = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
}
