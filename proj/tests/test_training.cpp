#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dna/grad_check.hpp"
#include "dna/synth.hpp"
#include "dna/training.hpp"

using namespace dna;
using T = Tensor<double>;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "dna_test_training";
  fs::create_directories(dir);
  return dir / name;
}

NetConfig small_net() {
  NetConfig c;
  c.input_height = c.input_width = 64;
  c.tiny_divisor = 16;
  c.top_channels_1 = 16;
  c.top_channels_2 = 8;
  c.sides = {{{3, 8}, {3, 8}, {5, 8}, {5, 8}, {5, 8}}};
  c.dna_side_channels = 4;
  c.dna_mid_channels = 8;
  return c;
}

std::vector<TrainSample> small_data(int count) {
  SceneSpec s;
  s.height = s.width = 64;
  return generate_range(s, 0, std::uint64_t(count));
}

}  // namespace

TEST_CASE("class-balanced loss: hand cases") {
  // Logits 0 on one positive and one negative: beta = 1/2, each term 1/2 log 2.
  const auto r = class_balanced_bce(T({1, 1, 1, 2}, {0.0, 0.0}), T({1, 1, 1, 2}, {1.0, 0.0}));
  CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(r.grad[0] == doctest::Approx(-0.25));
  CHECK(r.grad[1] == doctest::Approx(0.25));

  // Three negatives, one positive: beta = 3/4.
  const T x({1, 1, 2, 2}, {2.0, -1.0, 0.5, -3.0});
  const T g({1, 1, 2, 2}, {1.0, 0.0, 0.0, 0.0});
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double expect = -0.75 * std::log(sig(2.0)) -
                        0.25 * (std::log(1 - sig(-1.0)) + std::log(1 - sig(0.5)) + std::log(1 - sig(-3.0)));
  CHECK(class_balanced_bce(x, g).loss == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("class-balanced loss: single-class masks and extreme logits") {
  // All positive: beta = 0, so the only remaining term carries weight 0.
  const auto pos = class_balanced_bce(T({1, 1, 1, 3}, {1.0, -2.0, 3.0}), T({1, 1, 1, 3}, 1.0));
  CHECK(pos.loss == 0.0);
  // All negative: beta = 1, the negative term has weight 0 as well.
  const auto neg = class_balanced_bce(T({1, 1, 1, 3}, {1.0, -2.0, 3.0}), T({1, 1, 1, 3}, 0.0));
  CHECK(neg.loss == 0.0);
  const auto big = class_balanced_bce(T({1, 1, 1, 2}, {800.0, -800.0}), T({1, 1, 1, 2}, {0.0, 1.0}));
  CHECK(std::isfinite(big.loss));
  CHECK(big.loss == doctest::Approx(800.0));
  CHECK_THROWS_AS(class_balanced_bce(T({1, 1, 1, 2}), T({1, 1, 1, 2}, {0.5, 1.0})), ShapeError);
}

TEST_CASE("class-balanced loss passes the finite-difference check") {
  T x = random_tensor({1, 1, 6, 6}, 3, -3, 3);
  const T gt = random_tensor({1, 1, 6, 6}, 4, 0, 1).cast<double>();
  T mask(gt.shape());
  for (Index i = 0; i < gt.size(); ++i) mask[i] = gt[i] > 0.6 ? 1.0 : 0.0;
  const auto r = class_balanced_bce(x, mask);
  CHECK(check_entries([&] { return class_balanced_bce(x, mask).loss; }, x, r.grad, 1e-6) < 1e-6);
}

TEST_CASE("poly learning rate") {
  CHECK(poly_lr(1e-7, 0, 20000, 0.9) == 1e-7);
  CHECK(std::abs(poly_lr(1e-7, 10000, 20000, 0.9) - 1e-7 * std::pow(0.5, 0.9)) <= 1e-15);
  CHECK(std::abs(poly_lr(1e-7, 10000, 20000, 0.9) - 5.3588673e-8) <= 1e-15);
  CHECK(poly_lr(1e-7, 20000, 20000, 0.9) == 0.0);
  CHECK_THROWS_AS(poly_lr(1e-7, 0, 0, 0.9), ConfigError);
  CHECK_THROWS_AS(poly_lr(1e-7, 20001, 20000, 0.9), ConfigError);
}

TEST_CASE("sgd recurrences with momentum, weight decay and frozen parameters") {
  std::vector<Parameter<double>> params{{"w", T({1, 1, 1, 2}, {1.0, -2.0}), true, false, "g"},
                                        {"b", T({1, 1, 1, 1}, {0.5}), true, true, "g"},
                                        {"frozen", T({1, 1, 1, 1}, {3.0}), false, false, "g"}};
  OptimConfig cfg;
  cfg.base_lr = 0.1;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0.01;
  cfg.power = 1.0;
  cfg.max_iter = 4;
  OptimState<double> opt(params, cfg);
  const std::vector<T> grads{T({1, 1, 1, 2}, {0.5, 0.5}), T({1, 1, 1, 1}, {1.0}), T({1, 1, 1, 1}, {1.0})};

  // Hand-rolled recurrences for the first weight entry and the bias.
  double w = 1.0, vw = 0.0, b = 0.5, vb = 0.0;
  for (int it = 0; it < 3; ++it) {
    const double lr = 0.1 * (1.0 - it / 4.0);
    vw = 0.9 * vw + 0.5 + 0.01 * w;
    w -= lr * vw;
    vb = 0.9 * vb + 1.0;
    b -= lr * vb;
    opt.step(params, grads);
    CHECK(params[0].value[0] == doctest::Approx(w).epsilon(1e-15));
    CHECK(params[1].value[0] == doctest::Approx(b).epsilon(1e-15));
    CHECK(params[2].value[0] == 3.0);
  }
  opt.step(params, grads);
  CHECK_THROWS_AS(opt.step(params, grads), ConfigError);
}

TEST_CASE("a NaN gradient names the parameter and leaves every value untouched") {
  std::vector<Parameter<double>> params{{"conv1.w", T({1, 1, 1, 1}, {1.0}), true, false, "g"},
                                        {"conv2.w", T({1, 1, 1, 1}, {2.0}), true, false, "g"}};
  OptimState<double> opt(params, OptimConfig{});
  const std::vector<T> grads{T({1, 1, 1, 1}, {1.0}), T({1, 1, 1, 1}, {std::nan("")})};
  try {
    opt.step(params, grads);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("conv2.w") != std::string::npos);
  }
  CHECK(params[0].value[0] == 1.0);
  CHECK(params[1].value[0] == 2.0);
}

TEST_CASE("initialization: deterministic, zero biases, requested spread") {
  auto a = NetGraph<double>::build(Variant::Dna, NetConfig{});
  auto b = NetGraph<double>::build(Variant::Dna, NetConfig{});
  init_params(a, 9);
  init_params(b, 9);
  double sum = 0, sum2 = 0, count = 0;
  for (std::size_t k = 0; k < a.params().size(); ++k) {
    const auto& p = a.params()[k];
    CHECK(p.value.values() == b.params()[k].value.values());
    if (p.is_bias) {
      CHECK(p.value.values().isZero(0.0));
    } else if (p.group != "backbone") {
      sum += p.value.values().sum();
      sum2 += p.value.values().squaredNorm();
      count += double(p.value.size());
    }
  }
  CHECK(std::abs(sum / count) < 1e-3);
  CHECK(std::sqrt(sum2 / count) == doctest::Approx(0.01).epsilon(0.03));

  InitConfig he;
  he.other = InitScheme::HeNormal;
  init_params(a, 9, he);
  const auto& w = a.param("dna.fuse.weight");
  const double fan_in = double(w.value.shape().c) * w.value.shape().h * w.value.shape().w;
  CHECK(w.value.values().norm() / std::sqrt(double(w.value.size())) ==
        doctest::Approx(std::sqrt(2.0 / fan_in)).epsilon(0.6));
}

TEST_CASE("training: zero learning rate leaves parameters unchanged") {
  auto g = NetGraph<double>::build(Variant::Dna, small_net());
  init_params(g, 1);
  const auto before = g.params();
  TrainConfig tc;
  tc.optim.base_lr = 0.0;
  tc.optim.max_iter = 3;
  train(g, small_data(2), tc);
  for (std::size_t k = 0; k < before.size(); ++k) CHECK(g.params()[k].value.values() == before[k].value.values());
}

TEST_CASE("training: loss goes down over a short run") {
  auto g = NetGraph<float>::build(Variant::Dna, small_net());
  InitConfig init;
  init.other = InitScheme::HeNormal;
  init_params(g, 1, init);
  TrainConfig tc;
  tc.optim.base_lr = 1e-5;
  tc.optim.max_iter = 60;
  const auto data = small_data(4);
  const auto hist = train(g, data, tc).history;
  auto window = [&](std::size_t first) {
    double s = 0;
    for (std::size_t i = first; i < first + 8; ++i) s += hist[i].loss.total;
    return s;
  };
  CHECK(window(hist.size() - 8) < window(0));
}

TEST_CASE("training is deterministic: identical checkpoints and loss logs") {
  const auto data = small_data(3);
  auto run = [&](const std::string& tag) {
    auto g = NetGraph<float>::build(Variant::Dna, small_net());
    init_params(g, 5);
    TrainConfig tc;
    tc.optim.base_lr = 1e-6;
    tc.optim.max_iter = 4;
    tc.seed = 5;
    tc.checkpoint = scratch("ckpt_" + tag + ".bin");
    tc.loss_csv = scratch("loss_" + tag + ".csv");
    train(g, data, tc);
    return std::pair{slurp(tc.checkpoint), slurp(tc.loss_csv)};
  };
  const auto a = run("a"), b = run("b");
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  CHECK(a.second.rfind("iter,lr,total_loss,side1,side2,side3,side4,side5,side6,fused\n", 0) == 0);
}

TEST_CASE("checkpoint round trip and error reporting") {
  auto g = NetGraph<double>::build(Variant::EncDecLin, small_net());
  init_params(g, 2);
  const fs::path path = scratch("roundtrip.bin");
  save_checkpoint(path, g);
  CHECK(checkpoint_variant(path) == Variant::EncDecLin);

  auto h = NetGraph<double>::build(Variant::EncDecLin, small_net());
  load_checkpoint(path, h);
  for (std::size_t k = 0; k < g.params().size(); ++k) CHECK(h.params()[k].value.values() == g.params()[k].value.values());

  auto other = NetGraph<double>::build(Variant::Dna, small_net());
  CHECK_THROWS_AS(load_checkpoint(path, other), ConfigError);

  std::string bytes = slurp(path);
  bytes.resize(bytes.size() / 2);
  const fs::path cut = scratch("truncated.bin");
  std::ofstream(cut, std::ios::binary) << bytes;
  try {
    load_checkpoint(cut, h);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.byte_offset() > 0);
  }
}

TEST_CASE("epoch order is a seeded permutation") {
  const auto a = epoch_order(10, 1, 0), b = epoch_order(10, 1, 0), c = epoch_order(10, 1, 1);
  CHECK(a == b);
  CHECK(a != c);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
}
