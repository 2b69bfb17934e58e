#include "doctest.h"

#include <cmath>
#include <set>

#include "support/oracles.hpp"
#include "warship/trainer.hpp"

using namespace warship;

namespace {

ModelConfig tiny(std::size_t R = 2, std::size_t f_embed = 4) {
  ModelConfig c;
  c.recurrences = R;
  c.f_embed = f_embed;
  c.f_infer = f_embed / 2;
  return c;
}

// Model whose only non-zero gradient slot is enet.conv2 weight 0.
struct OneScalar {
  Model<double> m = build_model<double>(tiny(), 1);
  ParameterGradients<double> grads = zero_gradients(m.params);
  ParameterGradients<double> velocity = zero_gradients(m.params);
  double& theta() { return m.params[ParamId::EnetConv2].weights[0]; }
  double& g() { return grads[index_of(ParamId::EnetConv2)].weights[0]; }
  double& v() { return velocity[index_of(ParamId::EnetConv2)].weights[0]; }
};

TrainConfig no_clip(double momentum) {
  TrainConfig c;
  c.momentum = momentum;
  c.clip_tau = 0.0;
  return c;
}

// Synthetic patch pairs: target is a smooth ramp, input a blurred copy.
PatchDataset synthetic_dataset(std::size_t count, std::size_t size, std::uint64_t seed) {
  PatchDataset d;
  d.patch_size = size;
  d.scale = 2;
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    d.manifest.push_back({"synthetic", i, 0, "r000_s1.0"});
    const double a = rng.uniform(), b = rng.uniform(), c = 0.5 * rng.uniform();
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double t = c + 0.5 * (a * static_cast<double>(x) + b * static_cast<double>(y)) / static_cast<double>(size);
        d.targets.push_back(static_cast<float>(t));
        d.inputs.push_back(static_cast<float>(0.9 * t + 0.05));
      }
  }
  return d;
}

TrainHistory history_of(const std::vector<double>& vals, const std::vector<double>& lrs) {
  TrainHistory h;
  for (std::size_t i = 0; i < vals.size(); ++i) h.records.push_back({i + 1, lrs[i], 0, 0, 0, 0, vals[i], 0});
  return h;
}

// Feeds `vals` one epoch at a time; returns the lr in effect at each epoch and whether it stopped.
std::pair<std::vector<double>, bool> drive_schedule(const std::vector<double>& vals, const TrainConfig& cfg) {
  TrainHistory h;
  std::vector<double> lrs;
  double lr = cfg.lr_initial;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    lrs.push_back(lr);
    h.records.push_back({i + 1, lr, 0, 0, 0, 0, vals[i], 0});
    const auto d = lr_schedule_update(h, lr, cfg);
    if (d.stop) return {lrs, true};
    lr = d.lr;
  }
  return {lrs, false};
}

}  // namespace

TEST_CASE("sgd: plain step without momentum or clipping") {
  OneScalar s;
  s.theta() = 0.7;
  s.g() = 0.3;
  sgd_step(s.m.params, s.grads, s.velocity, 0.1, no_clip(0.0));
  CHECK(s.theta() == 0.7 - 0.1 * 0.3);
}

TEST_CASE("sgd: momentum hand iteration") {
  OneScalar s;
  s.theta() = 1.0;
  s.g() = 2.0;
  const auto cfg = no_clip(0.9);
  sgd_step(s.m.params, s.grads, s.velocity, 0.1, cfg);
  CHECK(s.v() == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(s.theta() == doctest::Approx(0.8).epsilon(1e-15));
  sgd_step(s.m.params, s.grads, s.velocity, 0.1, cfg);
  CHECK(s.v() == doctest::Approx(-0.38).epsilon(1e-15));
  CHECK(s.theta() == doctest::Approx(0.42).epsilon(1e-15));
}

TEST_CASE("sgd: gradient clipped to tau / lr") {
  OneScalar s;
  s.theta() = 0.0;
  s.g() = 100.0;
  TrainConfig cfg;
  cfg.momentum = 0.0;
  cfg.clip_tau = 0.01;
  sgd_step(s.m.params, s.grads, s.velocity, 0.01, cfg);
  CHECK(s.v() == doctest::Approx(-0.01 * 1.0).epsilon(1e-15));
  s.g() = -100.0;
  s.v() = 0.0;
  sgd_step(s.m.params, s.grads, s.velocity, 0.01, cfg);
  CHECK(s.v() == doctest::Approx(0.01).epsilon(1e-15));
}

TEST_CASE("sgd: non-finite gradient aborts without touching parameters") {
  OneScalar s;
  const auto before = s.m;
  s.grads[index_of(ParamId::RnetToImage)].bias[0] = std::nan("");
  s.g() = 1.0;
  try {
    sgd_step(s.m.params, s.grads, s.velocity, 0.1, TrainConfig{});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("rnet.to_image") != std::string::npos);
  }
  CHECK(s.m == before);
}

TEST_CASE("schedule: [5,4,4,4,4,4,4] drops after the fifth epoch without improvement") {
  TrainConfig cfg;
  const std::vector<double> vals = {5, 4, 4, 4, 4, 4, 4};
  for (std::size_t n = 1; n <= vals.size(); ++n) {
    const auto h = history_of({vals.begin(), vals.begin() + static_cast<long>(n)}, std::vector<double>(n, 0.01));
    const auto d = lr_schedule_update(h, 0.01, cfg);
    CAPTURE(n);
    CHECK(d.dropped == (n == 7));
    CHECK_FALSE(d.stop);
  }
  CHECK(lr_schedule_update(history_of(vals, std::vector<double>(7, 0.01)), 0.01, cfg).lr ==
        doctest::Approx(1e-3).epsilon(1e-15));
}

TEST_CASE("schedule: strictly decreasing validation never drops") {
  TrainConfig cfg;
  std::vector<double> vals;
  for (int i = 0; i < 60; ++i) vals.push_back(100.0 - i);
  const auto [lrs, stopped] = drive_schedule(vals, cfg);
  CHECK_FALSE(stopped);
  for (double lr : lrs) CHECK(lr == 0.01);
}

TEST_CASE("schedule: threshold comparison is strict") {
  TrainConfig cfg;
  const std::vector<double> flat_after_best = {1, 2, 2, 2, 2, 2};
  auto d = lr_schedule_update(history_of(flat_after_best, std::vector<double>(6, 1e-5)), 1e-5, cfg);
  CHECK(d.dropped);
  CHECK(d.lr == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK_FALSE(d.stop);
  d = lr_schedule_update(history_of(flat_after_best, std::vector<double>(6, 1e-6)), 1e-6, cfg);
  CHECK(d.lr == doctest::Approx(1e-7).epsilon(1e-12));
  CHECK(d.stop);
}

TEST_CASE("schedule: a flat sequence walks 0.01 down by decades and then stops") {
  TrainConfig cfg;
  const auto [lrs, stopped] = drive_schedule(std::vector<double>(200, 1.0), cfg);
  REQUIRE(stopped);
  std::set<int> decades;
  for (double lr : lrs) {
    const double k = std::log10(0.01 / lr);
    CHECK(std::abs(k - std::round(k)) < 1e-9);
    decades.insert(static_cast<int>(std::round(k)));
  }
  CHECK(decades == std::set<int>{0, 1, 2, 3, 4});
  CHECK(lrs.back() == doctest::Approx(1e-6).epsilon(1e-12));
  // Epoch 1 sets the best; every later decade needs 5 stale epochs; the 1e-6 decade drops to 1e-7 and stops.
  CHECK(lrs.size() == 6 + 4 * 5);
  for (std::size_t i = 1; i < lrs.size(); ++i) CHECK(lrs[i] <= lrs[i - 1]);
}

TEST_CASE("split: pure function of count, fraction and seed") {
  const auto a = split_dataset(200, 0.05, 9);
  const auto b = split_dataset(200, 0.05, 9);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.val.size() == 10);
  CHECK(a.train.size() == 190);
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  for (auto v : a.val) CHECK(all.insert(v).second);
  CHECK(all.size() == 200);
  CHECK(std::is_sorted(a.val.begin(), a.val.end()));
  CHECK_FALSE(split_dataset(200, 0.05, 10).val == a.val);
  CHECK(split_dataset(3, 0.05, 1).val.size() == 1);
  CHECK_THROWS_AS(split_dataset(1, 0.05, 1), ConfigError);
}

TEST_CASE("log lines: fixed field order and lossless round trip") {
  EpochRecord r{12, 1e-3, 0.123456789012345678, 0.25, 1.0 / 3.0, 7e-5, 0.0625, 99.0};
  const auto line = format_log_line(r);
  CHECK(line.rfind("epoch=12 lr=0.001", 0) == 0);
  const std::vector<std::string> order = {"epoch=", " lr=", " l1=", " l2=", " l3=", " total=", " val="};
  std::size_t pos = 0;
  for (const auto& key : order) {
    const auto at = line.find(key, pos);
    REQUIRE(at != std::string::npos);
    pos = at + key.size();
  }
  const auto back = parse_log_line(line);
  CHECK(back.epoch == r.epoch);
  CHECK(back.lr == r.lr);
  CHECK(back.train_l1 == r.train_l1);
  CHECK(back.train_l2 == r.train_l2);
  CHECK(back.train_l3 == r.train_l3);
  CHECK(back.train_total == r.train_total);
  CHECK(back.val_error == r.val_error);
  CHECK_THROWS_AS(parse_log_line("epoch=1 lr=0.1"), FormatError);
  CHECK_THROWS_AS(parse_log_line("lr=0.1 epoch=1 l1=0 l2=0 l3=0 total=0 val=0"), FormatError);
}

TEST_CASE("one small SGD step decreases the sample's loss") {
  LossConfig lcfg;
  lcfg.beta = 0.0;
  const auto tcfg = no_clip(0.0);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    auto m = build_model<double>(tiny(3, 6), seed);
    oracle::jitter(m, rng, 0.1);
    const auto x = oracle::random_tensor<double>(1, 1, 7, 7, rng, 0.0, 1.0);
    const auto y = oracle::random_tensor<double>(1, 1, 7, 7, rng, 0.0, 1.0);
    const auto before = loss_and_gradients(m, x, y, lcfg, 0);
    auto velocity = zero_gradients(m.params);
    sgd_step(m.params, before.grads, velocity, 1e-5, tcfg);
    CHECK(loss_and_gradients(m, x, y, lcfg, 0).report.total < before.report.total);
  }
}

TEST_CASE("train: identical seeds give identical histories") {
  const auto data = synthetic_dataset(40, 9, 3);
  TrainConfig tcfg;
  tcfg.batch_size = 8;
  tcfg.max_epochs = 3;
  tcfg.seed = 5;
  auto run = [&] {
    auto m = build_model<float>(tiny(2, 4), derive_seed(tcfg.seed, seed_stream::kInit));
    return train(m, data, tcfg, LossConfig{}).history;
  };
  const auto a = run(), b = run();
  REQUIRE(a.records.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(format_log_line(a.records[i]) == format_log_line(b.records[i]));

  tcfg.seed = 6;
  CHECK(format_log_line(run().records[0]) != format_log_line(a.records[0]));
}

TEST_CASE("train: history records blend consistently and hooks fire") {
  const auto data = synthetic_dataset(30, 9, 4);
  TrainConfig tcfg;
  tcfg.batch_size = 4;
  tcfg.max_epochs = 4;
  LossConfig lcfg;
  lcfg.alpha_schedule = AlphaSchedule::LinearDecay;
  lcfg.alpha_decay_epochs = 3;
  auto m = build_model<float>(tiny(2, 4), 3);
  std::size_t epochs_seen = 0, bests = 0;
  TrainHooks hooks{[&](const EpochRecord&) { ++epochs_seen; }, [&](const Model<float>&, const EpochRecord&) { ++bests; }};
  const auto res = train(m, data, tcfg, lcfg, hooks);
  CHECK(epochs_seen == 4);
  CHECK(bests >= 1);
  CHECK(res.stop_reason == "max_epochs reached");
  for (const auto& r : res.history.records) {
    const double alpha = lcfg.alpha_at(r.epoch - 1);
    const double recomputed = alpha * r.train_l1 + (1 - alpha) * r.train_l2 + r.train_l3;
    CHECK(r.train_total == doctest::Approx(recomputed).epsilon(1e-6));
  }
  double best = 1e300;
  for (const auto& r : res.history.records) best = std::min(best, r.val_error);
  CHECK(res.best_val == best);
}

TEST_CASE("train: step budget and non-finite data") {
  auto data = synthetic_dataset(30, 9, 5);
  TrainConfig tcfg;
  tcfg.batch_size = 4;
  tcfg.max_steps = 3;
  auto m = build_model<float>(tiny(2, 4), 3);
  const auto res = train(m, data, tcfg, LossConfig{});
  CHECK(res.steps == 3);
  CHECK(res.stop_reason == "max_steps reached");

  data.targets[5] = std::nanf("");
  auto m2 = build_model<float>(tiny(2, 4), 3);
  tcfg.max_steps = 0;
  tcfg.max_epochs = 2;
  CHECK_THROWS_AS(train(m2, data, tcfg, LossConfig{}), NumericError);
  CHECK_THROWS_AS(train(m2, PatchDataset{}, tcfg, LossConfig{}), ConfigError);
}

TEST_CASE("train: one patch pair is overfit within 200 steps") {
  // Tiny model (f_infer 8, R 4) on a single 41x41 pair at the default schedule settings.
  PatchDataset one = synthetic_dataset(1, 41, 8);
  const auto [in, tg] = gather_batch(one, std::vector<std::size_t>{0});
  auto m = build_model<float>(tiny(4, 16), 11);
  const double initial = loss_final(tg, infer(m, in)).value;
  auto velocity = zero_gradients(m.params);
  TrainConfig tcfg;
  for (int step = 0; step < 200; ++step) {
    const auto s = loss_and_gradients(m, in, tg, LossConfig{}, 0);
    sgd_step(m.params, s.grads, velocity, tcfg.lr_initial, tcfg);
  }
  const double after = loss_final(tg, infer(m, in)).value;
  CHECK(after <= 0.5 * initial);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.val_fraction = 0.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr_initial = 1e-7;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
