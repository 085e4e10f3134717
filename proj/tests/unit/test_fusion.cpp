#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "evf/errors.hpp"
#include "evf/fusion.hpp"
#include "support.hpp"

using namespace evf;
using evf::testing::mini_fusion_config;

namespace {

void zero_all(nn::ParamList params) {
  for (auto& [name, t] : params) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
}

void zero_biases(nn::ParamList params) {
  for (auto& [name, t] : params)
    if (name.ends_with(".bias")) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
}

bool all_zero(const Tensor& t, double tol = 0.0) {
  for (double v : t.data())
    if (std::abs(v) > tol) return false;
  return true;
}

}  // namespace

TEST_SUITE("fusion") {
  TEST_CASE("adapters map any input width to the fusion width") {
    Rng rng(1);
    const FusionConfig cfg = mini_fusion_config();
    for (std::size_t in : {3u, 8u, 40u}) {
      const Adapter ad(in, cfg, rng);
      CHECK(ad(Tensor::randn({5, in}, 1.0, rng), rng, false).shape() == Shape{5, 8});
    }
    const FusionModel model(cfg, 12, 6, rng);
    const auto a = model.adapt(Tensor::randn({4, 12}, 1.0, rng), Tensor::randn({7, 6}, 1.0, rng), rng, false);
    CHECK(a.eeg.shape() == Shape{4, 8});
    CHECK(a.video.shape() == Shape{7, 8});
  }

  TEST_CASE("multi-scale conv examples") {
    Rng rng(2);
    const MultiScaleConv conv(8, {3, 5, 7}, rng);
    for (std::size_t len = 8; len <= 64; len += 8) CHECK(conv(Tensor::randn({len, 8}, 1.0, rng)).shape() == Shape{len, 8});
    CHECK_THROWS_AS(conv(Tensor::randn({5, 8}, 1.0, rng)), ContractError);

    MultiScaleConv zb = conv;
    nn::ParamList p;
    zb.collect("c", p);
    zero_biases(p);
    CHECK(all_zero(zb(Tensor({12, 8}))));

    Tensor impulse({20, 8});
    for (std::size_t d = 0; d < 8; ++d) impulse.mutable_data()[10 * 8 + d] = 1.0;
    const Tensor delta = sub(zb(impulse), impulse);
    for (std::size_t t = 0; t < 20; ++t) {
      const bool inside = t >= 7 && t <= 13;
      bool nonzero = false;
      for (std::size_t d = 0; d < 8; ++d) nonzero = nonzero || delta.at(t, d) != 0.0;
      if (!inside) CHECK_FALSE(nonzero);
    }
  }

  TEST_CASE("cross-attention examples") {
    Rng rng(3);
    const FusionConfig cfg = mini_fusion_config();
    const FusionModel model(cfg, 12, 6, rng);
    const auto a = model.adapt(Tensor::randn({8, 12}, 1.0, rng), Tensor::randn({9, 6}, 1.0, rng), rng, false);
    std::vector<Tensor> attn;
    const Tensor fused = model.cross_attend(a, rng, false, &attn);
    CHECK(fused.shape() == Shape{17, 8});
    REQUIRE(attn.size() == 2 * cfg.heads * cfg.fusion_layers);
    CHECK(attn[0].shape() == Shape{8, 9});
    CHECK(attn[cfg.heads].shape() == Shape{9, 8});
    for (const auto& w : attn)
      for (std::size_t r = 0; r < w.dim(0); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < w.dim(1); ++c) acc += w.at(r, c);
        CHECK(std::abs(acc - 1.0) < 1e-12);
      }
    CHECK_THROWS_AS(model.cross_attend({a.eeg, Tensor({0, 8})}, rng, false), ContractError);
  }

  TEST_CASE("attention is equivariant to key permutations") {
    Rng rng(4);
    const nn::MultiHeadAttention mha(8, 2, rng);
    const Tensor q = Tensor::randn({4, 8}, 1.0, rng);
    const Tensor kv = Tensor::randn({6, 8}, 1.0, rng);
    const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
    std::vector<Tensor> w1, w2;
    const Tensor y1 = mha(q, kv, &w1);
    const Tensor y2 = mha(q, gather_rows(kv, perm), &w2);
    for (std::size_t i = 0; i < y1.numel(); ++i) CHECK(y2.at(i) == doctest::Approx(y1.at(i)).epsilon(1e-12));
    for (std::size_t h = 0; h < w1.size(); ++h)
      for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 6; ++c) CHECK(w2[h].at(r, c) == doctest::Approx(w1[h].at(r, perm[c])).epsilon(1e-12));
  }

  TEST_CASE("zeroed keys with zero biases give a zero update") {
    Rng rng(5);
    nn::MultiHeadAttention mha(8, 2, rng);
    nn::ParamList p;
    mha.collect("a", p);
    zero_biases(p);
    std::vector<Tensor> w;
    const Tensor y = mha(Tensor::randn({3, 8}, 1.0, rng), Tensor({5, 8}), &w);
    CHECK(all_zero(y));
    for (const auto& h : w)
      for (double v : h.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
  }

  TEST_CASE("classifier examples") {
    Rng rng(6);
    FusionConfig cfg = mini_fusion_config();
    cfg.dropout = 0.3;
    const FusionModel model(cfg, 12, 6, rng);
    const Tensor e = Tensor::randn({8, 12}, 1.0, rng), v = Tensor::randn({9, 6}, 1.0, rng);
    const Tensor logits = model.forward(e, v, rng, false).logits;
    const Tensor probs = softmax(logits);
    CHECK(std::abs(probs.at(0) + probs.at(1) - 1.0) < 1e-12);
    CHECK(seizure_probability(logits) == doctest::Approx(probs.at(1)).epsilon(1e-12));
    const double p1 = model.predict(e, v), p2 = model.predict(e, v);
    CHECK(p1 == p2);
    CHECK(p1 >= 0.0);
    CHECK(p1 <= 1.0);

    ClassifierHead head(8, 8, 0.0, rng);
    nn::ParamList hp;
    head.collect("h", hp);
    zero_all(hp);
    CHECK(seizure_probability(head(Tensor({6, 8}), rng, false)) == 0.5);
  }

  TEST_CASE("total loss examples") {
    const std::vector<int> one{1};
    CHECK(total_loss(Tensor({1, 2}, {-40.0, 40.0}), one, Tensor()).item() < 1e-12);
    CHECK(total_loss(Tensor({1, 2}, {0.0, 0.0}), one, Tensor()).item() == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
    const std::vector<int> two{0, 1};
    const Tensor logits({2, 2}, {0.3, -0.2, 1.1, 0.4});
    const Tensor ot = Tensor::scalar(0.125);
    CHECK(total_loss(logits, two, ot).item() == cross_entropy(logits, two).item() + 0.125);
  }

  TEST_CASE("miniature fusion gradients match finite differences") {
    Rng rng(7);
    // The transport plan is a constant in backprop but moves under finite
    // differences, so the alignment term is checked separately.
    FusionConfig cfg = mini_fusion_config();
    cfg.lambda_ot = 0.0;
    const FusionModel model(cfg, 6, 5, rng);
    const Tensor e = Tensor::randn({8, 6}, 1.0, rng), v = Tensor::randn({8, 5}, 1.0, rng);
    const std::vector<int> label{1};
    auto loss = [&] {
      const auto out = model.forward(e, v, rng, false);
      return total_loss(out.logits, label, out.ot);
    };
    const auto gc = evf::testing::grad_check(loss, evf::testing::tensors_of(model.parameters()));
    CHECK(gc.checked == nn::count_scalars(model.parameters()));
    CHECK(gc.worst < 1e-3);
  }

  TEST_CASE("variants own only their parameters") {
    Rng rng(8);
    FusionConfig cfg = mini_fusion_config();
    cfg.variant = ModelVariant::eeg_only;
    const FusionModel eo(cfg, 6, 5, rng);
    for (const auto& [n, t] : eo.parameters()) CHECK(n.find("video") == std::string::npos);
    const auto out = eo.forward(Tensor::randn({8, 6}, 1.0, rng), Tensor::randn({8, 5}, 1.0, rng), rng, false);
    CHECK_FALSE(out.ot.defined());
    cfg.variant = ModelVariant::video_only;
    const FusionModel vo(cfg, 6, 5, rng);
    for (const auto& [n, t] : vo.parameters()) CHECK(n.find("eeg") == std::string::npos);
    CHECK(parse_variant("eeg-only") == ModelVariant::eeg_only);
    CHECK(to_string(ModelVariant::video_only) == "video_only");
    CHECK_THROWS_AS(parse_variant("audio"), ConfigError);
  }

  TEST_CASE("channel merge concatenates per patch index") {
    const Tensor enc({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});  // (c0,n0) (c0,n1) (c1,n0) (c1,n1)
    const Tensor m = merge_channels(enc, 2);
    CHECK(m.shape() == Shape{2, 4});
    const std::vector<double> want{1, 2, 5, 6, 3, 4, 7, 8};
    for (std::size_t i = 0; i < 8; ++i) CHECK(m.at(i) == want[i]);
  }

  TEST_CASE("supervised training on separable features") {
    Rng rng(9);
    const FusionConfig cfg = mini_fusion_config();
    FusionModel model(cfg, 6, 5, rng);
    std::vector<WindowInput> windows;
    for (std::size_t i = 0; i < 40; ++i) windows.push_back({0, i, static_cast<double>(i), i % 4 == 0 ? 1 : 0});
    FeatureSource src;
    src.eeg = [](const WindowInput& w, Rng& r, bool) {
      Tensor t = Tensor::randn({8, 6}, 0.3, r);
      for (double& v : t.mutable_data()) v += w.label ? 1.0 : -1.0;
      return t;
    };
    src.video = [](const WindowInput& w) {
      Rng r(w.window);
      Tensor t = Tensor::randn({8, 5}, 0.3, r);
      for (double& v : t.mutable_data()) v += w.label ? 1.0 : 0.0;
      return t;
    };
    TrainSchedule sched;
    sched.epochs = 8;
    sched.batch_size = 8;
    sched.lr = 3e-3;
    sched.lr_min = 1e-4;
    sched.seed = 1;
    const auto res = train_supervised(model, model.parameters(), windows, src, sched);
    REQUIRE(res.epoch_loss.size() == 8);
    CHECK(res.epoch_loss.back() <= 0.5 * res.epoch_loss.front());
    CHECK(res.log.size() == 40);
    for (const auto& e : res.log) {
      CHECK(e.ot > 0.0);
      CHECK(e.total == doctest::Approx(e.ce + e.ot).epsilon(1e-12));
    }

    FusionConfig no_ot = cfg;
    no_ot.lambda_ot = 0.0;
    FusionModel m2(no_ot, 6, 5, rng);
    sched.epochs = 1;
    for (const auto& e : train_supervised(m2, m2.parameters(), windows, src, sched).log) CHECK(e.ot == 0.0);
  }
}
