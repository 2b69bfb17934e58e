#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "support/oracles.hpp"
#include "warship/evaluation.hpp"
#include "warship/resize.hpp"

using namespace warship;
namespace fs = std::filesystem;

namespace {

ImageBuffer noisy(const ImageBuffer& img, double amplitude, std::uint64_t seed) {
  Rng rng(seed);
  ImageBuffer out = img;
  for (auto& v : out.samples) v += amplitude * (2 * rng.uniform() - 1);
  return out;
}

EvalResult result(const std::string& method, double mean) {
  EvalResult r;
  r.method = method;
  r.mean_psnr_db = mean;
  return r;
}

// Single-channel network that reproduces its input: center taps of 1 on channel 0 through
// every layer and a zero recursion, so each hidden state equals the input.
Model<float> passthrough_model() {
  ModelConfig cfg;
  cfg.recurrences = 2;
  cfg.f_embed = 2;
  cfg.f_infer = 1;
  Model<float> m = build_model<float>(cfg, 1);
  for (auto& e : m.params) {
    e.params.weights.fill(0.f);
    for (auto& b : e.params.bias) b = 0.f;
  }
  auto center = [](ConvParams<float>& p) {
    const std::size_t k = p.kernel_size();
    p.weights(0, 0, k / 2, k / 2) = 1.f;
  };
  center(m.params[ParamId::EnetConv1]);
  center(m.params[ParamId::EnetConv2]);
  center(m.params[ParamId::EnetShrink]);
  center(m.params[ParamId::RnetExpand]);
  center(m.params[ParamId::RnetToImage]);
  m.params[ParamId::RnetMerge].weights.fill(0.5f);
  return m;
}

fs::path desk_dir() { return fs::path(WARSHIP_TEST_DATA) / "desk"; }

}  // namespace

TEST_CASE("psnr: one 8-bit level of error is 48.1308 dB") {
  const ImageBuffer ref(10, 10, 1, 0.5);
  const ImageBuffer off(10, 10, 1, 0.5 + 1.0 / 255.0);
  CHECK(psnr(ref, off, 0) == doctest::Approx(48.1308).epsilon(0.001 / 48.1308));
  CHECK(std::abs(psnr(ref, off, 2) - 20 * std::log10(255.0)) < 1e-9);
}

TEST_CASE("psnr: identical images hit the cap") {
  const auto img = noisy(ImageBuffer(8, 8, 1, 0.5), 0.3, 1);
  CHECK(psnr(img, img, 0) == kPsnrCapDb);
  CHECK(kPsnrCapDb == 100.0);
}

TEST_CASE("psnr: symmetric and decreasing in noise amplitude") {
  const auto ref = noisy(ImageBuffer(32, 32, 1, 0.5), 0.2, 2);
  double previous = kPsnrCapDb;
  for (double a : {0.01, 0.02, 0.05}) {
    const auto cand = noisy(ref, a, 3);
    const double p = psnr(ref, cand, 2);
    CHECK(p == psnr(cand, ref, 2));
    CHECK(p < previous);
    previous = p;
  }
}

TEST_CASE("psnr: shaving past a corrupted border raises the score") {
  const ImageBuffer ref(20, 20, 1, 0.5);
  ImageBuffer cand = noisy(ref, 0.01, 4);
  for (std::size_t y = 0; y < 20; ++y)
    for (std::size_t x = 0; x < 20; ++x)
      if (y < 2 || x < 2 || y >= 18 || x >= 18) cand.at(y, x) = 1.0;
  const double s0 = psnr(ref, cand, 0), s1 = psnr(ref, cand, 1), s2 = psnr(ref, cand, 2);
  CHECK(s0 < s1);
  CHECK(s1 < s2);
  CHECK(s2 > 40.0);
}

TEST_CASE("psnr: invalid inputs") {
  CHECK_THROWS_AS(psnr(ImageBuffer(4, 4, 1), ImageBuffer(4, 5, 1), 0), ConfigError);
  CHECK_THROWS_AS(psnr(ImageBuffer(4, 4, 1), ImageBuffer(4, 4, 1), 2), ConfigError);
  CHECK_THROWS_AS(psnr(ImageBuffer(4, 4, 3), ImageBuffer(4, 4, 3), 0), ConfigError);
}

TEST_CASE("table: two decimals, one column per method") {
  const auto two = render_table({result("Bicubic", 33.66), result("Ours", 36.86)});
  CHECK(two.find("33.66") != std::string::npos);
  CHECK(two.find("36.86") != std::string::npos);
  CHECK(two.find("Bicubic") < two.find("Ours"));
  const auto one = render_table({result("XZNet", 36.9)});
  CHECK(one.find("36.90") != std::string::npos);
  CHECK(one.find("Bicubic") == std::string::npos);
  // caption, header, one PSNR row
  CHECK(std::count(one.begin(), one.end(), '\n') == 3);
  CHECK_THROWS_AS(render_table({}), ConfigError);
}

TEST_CASE("evaluation JSON round trip") {
  EvalResult r = result("XZNet", 31.123456789012345);
  r.scale = 3;
  r.shave = 3;
  r.images = {{"a", 30.1}, {"b", 1.0 / 3.0}};
  r.skipped = {"c.png: bad"};
  const auto back = eval_result_from_json(to_json(r));
  CHECK(back.method == r.method);
  CHECK(back.scale == 3);
  CHECK(back.shave == 3);
  CHECK(back.mean_psnr_db == r.mean_psnr_db);
  REQUIRE(back.images.size() == 2);
  CHECK(back.images[1].psnr_db == r.images[1].psnr_db);
  CHECK(back.skipped == r.skipped);
  CHECK(to_json(back) == to_json(r));
  CHECK_THROWS_AS(eval_result_from_json("{\"method\": 1}"), FormatError);
}

TEST_CASE("evaluate_set: sorted, deterministic, mean of the per-image scores") {
  const auto a = evaluate_set(bicubic_upscaler(), "Bicubic", desk_dir(), 2, 2);
  const auto b = evaluate_set(bicubic_upscaler(), "Bicubic", desk_dir(), 2, 2);
  REQUIRE(a.images.size() == 5);
  CHECK(a.images.front().name == "astronaut");
  CHECK(a.images.back().name == "motorcycle");
  double sum = 0;
  for (std::size_t i = 0; i < a.images.size(); ++i) {
    CHECK(a.images[i].psnr_db == b.images[i].psnr_db);
    sum += a.images[i].psnr_db;
  }
  CHECK(std::abs(a.mean_psnr_db - sum / 5) < 1e-9);
  CHECK(a.skipped.empty());
}

TEST_CASE("evaluate_set: a passthrough network scores like the bicubic row") {
  const auto m = passthrough_model();
  Rng rng(5);
  const auto x = oracle::random_tensor<float>(1, 1, 9, 9, rng, 0.0, 1.0);
  CHECK(infer(m, x) == x);

  const auto bic = evaluate_set(bicubic_upscaler(), "Bicubic", desk_dir(), 2, 2);
  const auto net = evaluate_set(model_upscaler(m), "stub", desk_dir(), 2, 2);
  REQUIRE(net.images.size() == bic.images.size());
  // The network runs in single precision.
  for (std::size_t i = 0; i < bic.images.size(); ++i) CHECK(net.images[i].psnr_db == doctest::Approx(bic.images[i].psnr_db).epsilon(1e-5));
}

TEST_CASE("evaluate_set: unreadable files are skipped and listed") {
  const fs::path dir = fs::temp_directory_path() / "warship_eval_skip";
  fs::remove_all(dir);
  fs::create_directories(dir);
  fs::copy_file(desk_dir() / "camera.png", dir / "camera.png");
  std::ofstream(dir / "broken.png") << "not a png";
  const auto r = evaluate_set(bicubic_upscaler(), "Bicubic", dir, 2, 2);
  CHECK(r.images.size() == 1);
  REQUIRE(r.skipped.size() == 1);
  CHECK(r.skipped[0].rfind("broken.png: ", 0) == 0);
  fs::remove(dir / "camera.png");
  CHECK_THROWS_AS(evaluate_set(bicubic_upscaler(), "Bicubic", dir, 2, 2), IoError);
  fs::remove_all(dir);
  CHECK_THROWS_AS(evaluate_set(bicubic_upscaler(), "Bicubic", dir, 2, 2), IoError);
}
