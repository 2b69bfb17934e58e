#include "doctest.h"

#include "support/oracles.hpp"
#include "warship/loss.hpp"

using namespace warship;

namespace {

Tensor4<double> scalar(double v) { return Tensor4<double>(1, 1, 1, 1, v); }

ModelConfig tiny() {
  ModelConfig cfg;
  cfg.recurrences = 2;
  cfg.f_embed = 4;
  cfg.f_infer = 2;
  return cfg;
}

}  // namespace

TEST_CASE("intermediate loss: hand values") {
  const auto r = loss_intermediate(scalar(2), {scalar(1), scalar(3)});
  CHECK(r.value == doctest::Approx(0.5));
  REQUIRE(r.grads.size() == 2);
  CHECK(r.grads[0][0] == doctest::Approx(-0.5));  // (1 - 2) / (R N)
  CHECK(r.grads[1][0] == doctest::Approx(0.5));
  CHECK(loss_intermediate(scalar(2), {scalar(2), scalar(2)}).value == 0.0);
}

TEST_CASE("intermediate loss: duplicated samples keep the mean") {
  Rng rng(1);
  const auto y = oracle::random_tensor<double>(1, 1, 4, 4, rng);
  const auto a = oracle::random_tensor<double>(1, 1, 4, 4, rng);
  const auto b = oracle::random_tensor<double>(1, 1, 4, 4, rng);
  auto twice = [](const Tensor4<double>& t) {
    Tensor4<double> d(2, 1, 4, 4);
    for (std::size_t n = 0; n < 2; ++n) std::copy(t.span().begin(), t.span().end(), d.sample(n).begin());
    return d;
  };
  CHECK(loss_intermediate(twice(y), {twice(a), twice(b)}).value ==
        doctest::Approx(loss_intermediate(y, {a, b}).value).epsilon(1e-14));
}

TEST_CASE("final loss: hand values") {
  const auto r = loss_final(scalar(2), scalar(1));
  CHECK(r.value == doctest::Approx(0.5));
  CHECK(r.grad[0] == doctest::Approx(-1.0));
  CHECK(loss_final(scalar(2), scalar(2)).value == 0.0);
  CHECK_THROWS_AS(loss_final(scalar(1), Tensor4<double>(1, 1, 2, 1)), ConfigError);
  CHECK_THROWS_AS(loss_intermediate(scalar(1), {scalar(1), Tensor4<double>(2, 1, 1, 1)}), ConfigError);
  CHECK_THROWS_AS(loss_intermediate(scalar(1), {}), ConfigError);
}

TEST_CASE("losses are invariant under sample permutation") {
  Rng rng(2);
  const auto y = oracle::random_tensor<double>(3, 1, 3, 3, rng);
  const auto f = oracle::random_tensor<double>(3, 1, 3, 3, rng);
  auto swap01 = [](Tensor4<double> t) {
    std::swap_ranges(t.sample(0).begin(), t.sample(0).end(), t.sample(1).begin());
    return t;
  };
  CHECK(loss_final(swap01(y), swap01(f)).value == doctest::Approx(loss_final(y, f).value).epsilon(1e-14));
  CHECK(loss_intermediate(swap01(y), {swap01(f)}).value ==
        doctest::Approx(loss_intermediate(y, {f}).value).epsilon(1e-14));
}

TEST_CASE("loss gradients match central differences") {
  Rng rng(3);
  auto y = oracle::random_tensor<double>(2, 1, 3, 4, rng);
  auto a = oracle::random_tensor<double>(2, 1, 3, 4, rng);
  auto b = oracle::random_tensor<double>(2, 1, 3, 4, rng);
  const auto li = loss_intermediate(y, {a, b});
  CHECK(oracle::rel_error(oracle::central_difference(oracle::coords_of(a), [&] { return loss_intermediate(y, {a, b}).value; }, 1e-3),
                          oracle::flat(li.grads[0])) < 1e-6);
  CHECK(oracle::rel_error(oracle::central_difference(oracle::coords_of(b), [&] { return loss_intermediate(y, {a, b}).value; }, 1e-3),
                          oracle::flat(li.grads[1])) < 1e-6);
  const auto lf = loss_final(y, a);
  CHECK(oracle::rel_error(oracle::central_difference(oracle::coords_of(a), [&] { return loss_final(y, a).value; }, 1e-3),
                          oracle::flat(lf.grad)) < 1e-6);

  auto m = build_model<double>(tiny(), 4);
  oracle::jitter(m, rng, 0.3);
  const auto reg = loss_regularization(m.params, 0.01);
  for (std::size_t e = 0; e < kParamCount; ++e) {
    auto& w = m.params.entries[e].params.weights;
    const auto fd = oracle::central_difference(oracle::coords_of(w), [&] { return loss_regularization(m.params, 0.01).value; }, 1e-3);
    CHECK(oracle::rel_error(fd, oracle::flat(reg.grads[e].weights)) < 1e-6);
  }
}

TEST_CASE("regularization: hand value and exemptions") {
  auto m = build_model<double>(tiny(), 5);
  for (auto& e : m.params) {
    e.params.weights.fill(0.0);
    for (auto& b : e.params.bias) b = 4.0;
  }
  CHECK(loss_regularization(m.params, 0.1).value == 0.0);

  m.params[ParamId::EnetConv2].weights[0] = 3.0;
  const auto r = loss_regularization(m.params, 0.1);
  CHECK(r.value == doctest::Approx(0.9));
  CHECK(r.grads[index_of(ParamId::EnetConv2)].weights[0] == doctest::Approx(0.6));

  const auto zero_beta = loss_regularization(m.params, 0.0);
  CHECK(zero_beta.value == 0.0);
  for (const auto& g : zero_beta.grads)
    for (double v : g.weights.span()) CHECK(v == 0.0);

  // Exempt entries and biases do not move the penalty.
  Rng rng(6);
  auto changed = m;
  for (auto& w : changed.params[ParamId::EnetConv1].weights.span()) w = rng.uniform();
  for (auto& w : changed.params[ParamId::RnetExpand].weights.span()) w = rng.uniform();
  for (auto& e : changed.params)
    for (auto& b : e.params.bias) b = rng.uniform();
  CHECK(loss_regularization(changed.params, 0.1).value == r.value);
  const auto rc = loss_regularization(changed.params, 0.1);
  for (double v : rc.grads[index_of(ParamId::EnetConv1)].weights.span()) CHECK(v == 0.0);
  for (double v : rc.grads[index_of(ParamId::RnetExpand)].weights.span()) CHECK(v == 0.0);
  for (const auto& g : rc.grads)
    for (double v : g.bias) CHECK(v == 0.0);
}

TEST_CASE("total loss blend") {
  LossConfig cfg;
  CHECK(loss_total(0.4, 0.2, 0.01, cfg, 0).total == doctest::Approx(0.31).epsilon(1e-12));
  cfg.alpha = 1.0;
  CHECK(loss_total(0.4, 0.2, 0.01, cfg, 0).total == doctest::Approx(0.41).epsilon(1e-12));
  cfg.alpha = 0.0;
  CHECK(loss_total(0.4, 0.2, 0.01, cfg, 0).total == doctest::Approx(0.21).epsilon(1e-12));
}

TEST_CASE("alpha schedules") {
  LossConfig cfg;
  CHECK(cfg.alpha_at(0) == 0.5);
  CHECK(cfg.alpha_at(1000) == 0.5);
  cfg.alpha_schedule = AlphaSchedule::LinearDecay;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.alpha_decay_epochs = 10;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.alpha_at(0) == 0.5);
  CHECK(cfg.alpha_at(5) == doctest::Approx(0.25));
  CHECK(cfg.alpha_at(10) == 0.0);
  CHECK(cfg.alpha_at(50) == 0.0);
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.alpha = 0.5;
  cfg.beta = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("L1 equals L2 for one recurrence with unit merge weight") {
  auto m = build_model<double>([] {
    auto c = tiny();
    c.recurrences = 1;
    return c;
  }(), 8);
  m.params[ParamId::RnetMerge].weights[0] = 1.0;
  Rng rng(9);
  const auto x = oracle::random_tensor<double>(2, 1, 5, 5, rng, 0.0, 1.0);
  const auto y = oracle::random_tensor<double>(2, 1, 5, 5, rng, 0.0, 1.0);
  const auto t = forward(m, x);
  CHECK(loss_intermediate(y, t.intermediate_images).value ==
        doctest::Approx(loss_final(y, t.final_image).value).epsilon(1e-12));
}
