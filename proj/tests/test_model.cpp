#include "udtsep/model.hpp"

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "udtsep/optim.hpp"

using namespace udtsep;

namespace {

ModelConfig small_cfg(std::size_t bins, std::size_t width) {
  ModelConfig cfg;
  cfg.bins = bins;
  cfg.width = width;
  return cfg;
}

// non-negative compressed-magnitude-like data
template <typename T>
Tensor<T> random_mags(Shape s, SeededRng& rng, double scale = 1.0) {
  std::vector<T> v(numel(s));
  for (auto& x : v) x = static_cast<T>(scale * rng.uniform());
  return Tensor<T>(std::move(s), std::move(v));
}

bool same_bits(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.values()[i] != b.values()[i]) return false;
  }
  return true;
}

WaveClip test_tone_mixture(std::size_t n) {
  WaveClip c;
  c.sample_rate = 16000;
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.samples[i] = 0.3 * std::sin(2.0 * std::numbers::pi * 313.0 * i / 16000.0) +
                   0.2 * std::sin(2.0 * std::numbers::pi * 1021.0 * i / 16000.0);
  }
  return c;
}

}  // namespace

TEST_CASE("encode/decode shapes at full width") {
  SeededRng rng(1);
  auto model = UdtModel<float>::create(small_cfg(1024, 1024), rng);
  auto x = random_mags<float>({2, 1024, 50}, rng);
  SeededRng fwd(2);
  auto mu = model.encode(Domain::source, x, Mode::eval, fwd);
  CHECK(mu.shape() == Shape{2, 1024, 50});
  auto y = model.decode(Domain::target, mu, Mode::eval, fwd);
  CHECK(y.shape() == Shape{2, 1024, 50});
  for (float v : y.values()) CHECK(v >= 0.0f);  // output softplus

  SUBCASE("inference is deterministic") {
    SeededRng r1(9), r2(10);
    auto a = model.encode(Domain::source, x, Mode::eval, r1);
    auto b = model.encode(Domain::source, x, Mode::eval, r2);
    CHECK(same_bits(a, b));
  }
  SUBCASE("shape mismatch reported") {
    auto bad = random_mags<float>({2, 512, 50}, rng);
    CHECK_THROWS_AS(model.encode(Domain::source, bad, Mode::eval, fwd), std::invalid_argument);
    CHECK_THROWS_AS(model.decode(Domain::source, bad, Mode::eval, fwd), std::invalid_argument);
  }
}

TEST_CASE("shared blocks are the same storage") {
  SeededRng rng(3);
  auto model = UdtModel<float>::create(small_cfg(16, 16), rng);
  CHECK(model.enc_s.blocks[2] == model.enc_t.blocks[2]);
  CHECK(model.dec_s.blocks[0] == model.dec_t.blocks[0]);
  CHECK(model.enc_s.blocks[2]->conv.weight.id() == model.enc_t.blocks[2]->conv.weight.id());
  CHECK(same_bits(model.enc_s.blocks[2]->conv.weight, model.enc_t.blocks[2]->conv.weight));
  CHECK(model.enc_s.blocks[0]->conv.weight.id() != model.enc_t.blocks[0]->conv.weight.id());

  // unique parameter enumeration: 10 blocks, shared ones once; inner blocks
  // carry conv w/b + bn gamma/beta, output blocks only conv w/b
  auto params = model.parameters();
  CHECK(params.size() == 8 * 4 + 2 * 2);
}

TEST_CASE("reparameterize") {
  SeededRng rng(4);
  auto mu = random_mags<float>({1, 4, 8}, rng);

  SUBCASE("inference returns the same storage") {
    SeededRng r(5);
    auto z = reparameterize(mu, r, Mode::eval, true);
    CHECK(z.id() == mu.id());
    auto z2 = reparameterize(mu, r, Mode::train, false);  // noise disabled
    CHECK(z2.id() == mu.id());
  }
  SUBCASE("training noise is reproducible under seed") {
    SeededRng r1(6), r2(6);
    auto z1 = reparameterize(mu, r1, Mode::train, true);
    auto z2 = reparameterize(mu, r2, Mode::train, true);
    CHECK(same_bits(z1, z2));
    CHECK_FALSE(same_bits(z1, mu));
  }
  SUBCASE("noise is standard normal on average") {
    auto big = random_mags<float>({1, 10, 10000}, rng);
    SeededRng r(7);
    auto z = reparameterize(big, r, Mode::train, true);
    double mean = 0;
    for (std::size_t i = 0; i < big.size(); ++i) {
      mean += static_cast<double>(z.values()[i]) - static_cast<double>(big.values()[i]);
    }
    mean /= static_cast<double>(big.size());
    CHECK(std::abs(mean) < 0.02);
  }
}

TEST_CASE("forward_paths") {
  SeededRng rng(8);
  auto model = UdtModel<float>::create(small_cfg(12, 12), rng);
  auto M = random_mags<float>({2, 12, 10}, rng);
  auto C = random_mags<float>({2, 12, 10}, rng);

  SUBCASE("all four outputs keep the input shape") {
    SeededRng r(9);
    auto p = forward_paths(model, M, C, r, Mode::train);
    for (const auto* t : {&p.m_hat, &p.c_from_m, &p.c_hat, &p.m_from_c}) {
      CHECK(t->shape() == M.shape());
    }
    CHECK(p.mu_s.shape() == Shape{2, 12, 10});
  }
  SUBCASE("linear bypass with delta kernels is the identity") {
    SeededRng r(10);
    auto id_model = UdtModel<float>::create(ModelConfig::linear_bypass(12), r);
    id_model.set_identity_kernels();
    SeededRng fwd(11);
    auto p = forward_paths(id_model, M, C, fwd, Mode::train);
    CHECK(same_bits(p.m_hat, M));
    CHECK(same_bits(p.c_from_m, M));
    CHECK(same_bits(p.c_hat, C));
    CHECK(same_bits(p.m_from_c, C));
  }
  SUBCASE("inference mode is deterministic") {
    SeededRng r1(12), r2(13);
    auto p1 = forward_paths(model, M, C, r1, Mode::eval);
    auto p2 = forward_paths(model, M, C, r2, Mode::eval);
    CHECK(same_bits(p1.c_from_m, p2.c_from_m));
  }
}

TEST_CASE("compute_loss") {
  SeededRng rng(14);
  auto model = UdtModel<float>::create(small_cfg(12, 12), rng);
  auto M = random_mags<float>({2, 12, 10}, rng);
  auto C = random_mags<float>({2, 12, 10}, rng);

  SUBCASE("zero weights give zero total") {
    SeededRng r(15);
    auto loss = compute_loss(model, M, C, LossWeights{0, 0, 0}, r, Mode::train);
    CHECK(loss.values.total == 0.0);
  }
  SUBCASE("identity configuration leaves only the l2 terms") {
    SeededRng r(16);
    auto id_model = UdtModel<float>::create(ModelConfig::linear_bypass(12), r);
    id_model.set_identity_kernels();
    SeededRng fwd(17);
    LossWeights w{1.0, 1.0, 1e-3};
    auto loss = compute_loss(id_model, M, C, w, fwd, Mode::train);
    CHECK(loss.values.rec_s == 0.0);
    CHECK(loss.values.rec_t == 0.0);
    CHECK(loss.values.straight_s == 0.0);
    CHECK(loss.values.straight_t == 0.0);
    CHECK(loss.values.cross_s == 0.0);
    CHECK(loss.values.cross_t == 0.0);
    CHECK(loss.values.total ==
          doctest::Approx(1e-3 * (loss.values.l2_s + loss.values.l2_t)).epsilon(1e-6));
  }
  SUBCASE("every term is finite and non-negative") {
    SeededRng r(18);
    auto loss = compute_loss(model, M, C, LossWeights{}, r, Mode::train);
    for (double v : {loss.values.rec_s, loss.values.rec_t, loss.values.straight_s,
                     loss.values.straight_t, loss.values.cross_s, loss.values.cross_t,
                     loss.values.l2_s, loss.values.l2_t, loss.values.total}) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
    }
  }
  SUBCASE("total recomposes from the parts") {
    SeededRng r(19);
    LossWeights w{0.7, 1.3, 2e-3};
    auto loss = compute_loss(model, M, C, w, r, Mode::train);
    const double expect =
        w.rec * (loss.values.rec_s + loss.values.rec_t) +
        w.cc * (loss.values.straight_s + loss.values.straight_t + loss.values.cross_s +
                loss.values.cross_t) +
        w.l2 * (loss.values.l2_s + loss.values.l2_t);
    CHECK(loss.values.total == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("compute_loss gradients, 64-bit FD and 32-bit against the 64-bit path") {
  SeededRng rng(20);
  ModelConfig cfg = small_cfg(8, 8);
  auto fmodel = UdtModel<float>::create(cfg, rng);
  SeededRng rng_mirror(0);
  auto dmodel = UdtModel<double>::create(cfg, rng_mirror);
  {
    auto fn = fmodel.named_tensors();
    auto dn = dmodel.named_tensors();
    for (std::size_t i = 0; i < fn.size(); ++i) {
      auto src = fn[i].second.values();
      auto dst = dn[i].second.values();
      for (std::size_t k = 0; k < src.size(); ++k) dst[k] = src[k];
    }
  }
  auto C0 = random_mags<float>({1, 8, 6}, rng);
  auto M0 = random_mags<float>({1, 8, 6}, rng);
  Tensor<float> Cf({1, 8, 6}, std::vector<float>(C0.values().begin(), C0.values().end()));
  auto Mf = Tensor<float>::param({1, 8, 6},
                                 std::vector<float>(M0.values().begin(), M0.values().end()));
  Tensor<double> Cd({1, 8, 6}, std::vector<double>(C0.values().begin(), C0.values().end()));
  auto Md = Tensor<double>::param({1, 8, 6},
                                  std::vector<double>(M0.values().begin(), M0.values().end()));
  LossWeights w;

  // masks and noise replayed identically on every evaluation
  std::function<Tensor<double>(Tensor<double>&)> fd = [&](Tensor<double>& t) {
    SeededRng r(21);
    return compute_loss(dmodel, t, Cd, w, r, Mode::train).total;
  };
  CHECK(grad_check<double>(fd, Md, 1e-5) < 1e-6);

  // the float path against the FD-verified double path; naive float central
  // differences drown coordinates whose gradient is far below the loss scale
  {
    SeededRng r(21);
    auto lf = compute_loss(fmodel, Mf, Cf, w, r, Mode::train);
    Mf.zero_grad();
    backward(lf.total);
  }
  {
    SeededRng r(21);
    auto ld = compute_loss(dmodel, Md, Cd, w, r, Mode::train);
    Md.zero_grad();
    backward(ld.total);
  }
  double worst = 0;
  for (std::size_t i = 0; i < Mf.size(); ++i) {
    const double gf = Mf.grad()[i], gd = Md.grad()[i];
    worst = std::max(worst, std::abs(gf - gd) / std::max({std::abs(gf), std::abs(gd), 1e-8}));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("train_step") {
  SeededRng rng(22);
  auto model = UdtModel<float>::create(small_cfg(16, 16), rng);
  auto M = random_mags<float>({2, 16, 12}, rng);
  auto C = random_mags<float>({2, 16, 12}, rng);
  LossWeights w;

  SUBCASE("overfits a fixed batch") {
    TrainState<float> state;
    state.opt = Adam<float>(model.parameters(), AdamConfig{.lr = 1e-3});
    state.rng = SeededRng(23);
    auto first = train_step(model, state, M, C, w);
    double best = first.total;
    LossBreakdown last{};
    for (int i = 0; i < 599; ++i) last = train_step(model, state, M, C, w);
    CHECK(state.step == 600);
    CHECK(last.total <= 0.2 * first.total);
    CHECK(best > 0.0);
  }
  SUBCASE("shared blocks stay bit-identical through updates") {
    TrainState<float> state;
    state.opt = Adam<float>(model.parameters(), AdamConfig{.lr = 1e-3});
    state.rng = SeededRng(24);
    for (int i = 0; i < 10; ++i) {
      train_step(model, state, M, C, w);
      CHECK(model.enc_s.blocks[2]->conv.weight.id() == model.enc_t.blocks[2]->conv.weight.id());
      CHECK(same_bits(model.enc_s.blocks[2]->conv.weight, model.enc_t.blocks[2]->conv.weight));
      CHECK(same_bits(model.dec_s.blocks[0]->tconv.weight, model.dec_t.blocks[0]->tconv.weight));
    }
  }
  SUBCASE("identical seeds give identical trajectories") {
    auto run = [&](std::uint64_t seed) {
      SeededRng init(seed);
      auto m = UdtModel<float>::create(small_cfg(16, 16), init);
      TrainState<float> state;
      state.opt = Adam<float>(m.parameters(), AdamConfig{});
      state.rng = SeededRng(seed + 1);
      std::vector<double> losses;
      for (int i = 0; i < 5; ++i) losses.push_back(train_step(m, state, M, C, w).total);
      return losses;
    };
    CHECK(run(100) == run(100));
  }
  SUBCASE("non-finite loss aborts the step") {
    auto bad = M;
    bad.values()[0] = std::numeric_limits<float>::quiet_NaN();
    TrainState<float> state;
    state.opt = Adam<float>(model.parameters(), AdamConfig{});
    state.rng = SeededRng(25);
    CHECK_THROWS_AS(train_step(model, state, bad, C, w), std::runtime_error);
    CHECK(state.step == 0);
  }
  SUBCASE("paired batch rejected") {
    Batch batch;
    batch.paired = true;
    batch.mix_mags = M;
    batch.clean_mags = C;
    TrainState<float> state;
    state.opt = Adam<float>(model.parameters(), AdamConfig{});
    CHECK_THROWS_AS(train_step(model, state, batch, w), std::invalid_argument);
  }
}

TEST_CASE("supervised baseline") {
  SeededRng rng(26);
  auto model = SupervisedModel<float>::create(small_cfg(16, 16), rng);
  auto M = random_mags<float>({2, 16, 12}, rng);
  auto C = random_mags<float>({2, 16, 12}, rng);
  LossWeights w;

  SUBCASE("overfits a paired batch") {
    TrainState<float> state;
    state.opt = Adam<float>(model.parameters(), AdamConfig{.lr = 1e-3});
    state.rng = SeededRng(27);
    auto first = supervised_step(model, state, M, C, w);
    LossBreakdown last{};
    for (int i = 0; i < 599; ++i) last = supervised_step(model, state, M, C, w);
    CHECK(last.total <= 0.2 * first.total);
  }
  SUBCASE("identity configuration with C == M has zero reconstruction") {
    SeededRng r(28);
    auto id_model = SupervisedModel<float>::create(ModelConfig::linear_bypass(16), r);
    for (auto& b : id_model.enc.blocks) b->conv.init_identity();
    for (auto& b : id_model.dec.blocks) b->tconv.init_identity();
    SeededRng fwd(29);
    auto loss = supervised_loss(id_model, M, M, w, fwd, Mode::train);
    CHECK(loss.values.rec_t == 0.0);
    CHECK(loss.values.total == doctest::Approx(w.l2 * loss.values.l2_s).epsilon(1e-6));
  }
  SUBCASE("unpaired batch rejected") {
    Batch batch;
    batch.paired = false;
    batch.mix_mags = M;
    batch.clean_mags = C;
    TrainState<float> state;
    state.opt = Adam<float>(model.parameters(), AdamConfig{});
    CHECK_THROWS_AS(supervised_step(model, state, batch, w), std::invalid_argument);
  }
  SUBCASE("deterministic under seed") {
    auto run = [&](std::uint64_t seed) {
      SeededRng init(seed);
      auto m = SupervisedModel<float>::create(small_cfg(16, 16), init);
      TrainState<float> state;
      state.opt = Adam<float>(m.parameters(), AdamConfig{});
      state.rng = SeededRng(seed + 1);
      std::vector<double> losses;
      for (int i = 0; i < 5; ++i) losses.push_back(supervised_step(m, state, M, C, w).total);
      return losses;
    };
    CHECK(run(200) == run(200));
  }
}

TEST_CASE("separate") {
  StftConfig cfg;
  cfg.window_size = 128;
  cfg.fft_size = 128;
  cfg.kept_bins = 64;
  cfg.hop = 16;

  auto mixture = test_tone_mixture(8000);

  SUBCASE("output length equals input length and runs are bit-identical") {
    SeededRng rng(30);
    ModelConfig mc = small_cfg(64, 24);
    auto model = UdtModel<float>::create(mc, rng);
    auto est1 = separate(model, mixture, cfg);
    auto est2 = separate(model, mixture, cfg);
    CHECK(est1.samples.size() == mixture.samples.size());
    CHECK(est1.samples == est2.samples);
  }
  SUBCASE("linear bypass identity recovers the mixture") {
    SeededRng rng(31);
    auto model = UdtModel<double>::create(ModelConfig::linear_bypass(64), rng);
    model.set_identity_kernels();
    auto est = separate(model, mixture, cfg);
    REQUIRE(est.samples.size() == mixture.samples.size());
    double num = 0, den = 0;
    for (std::size_t i = cfg.window_size; i + cfg.window_size < est.samples.size(); ++i) {
      num += (est.samples[i] - mixture.samples[i]) * (est.samples[i] - mixture.samples[i]);
      den += mixture.samples[i] * mixture.samples[i];
    }
    CHECK(std::sqrt(num / den) < 1e-6);
  }
}
