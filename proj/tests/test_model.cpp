#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <Eigen/QR>
#include <sstream>

#include "dna/grad_check.hpp"
#include "dna/model.hpp"
#include "dna/training.hpp"

using namespace dna;
using T = Tensor<double>;

namespace {

NetConfig tiny_net(int size = 64) {
  NetConfig c;
  c.input_height = c.input_width = size;
  c.tiny_divisor = 16;
  c.top_channels_1 = 16;
  c.top_channels_2 = 8;
  c.sides = {{{3, 8}, {3, 8}, {5, 8}, {5, 8}, {5, 8}}};
  c.dna_side_channels = 4;
  c.dna_mid_channels = 8;
  return c;
}

double loss_of(const NetGraph<double>& g, const T& x, const T& gt) {
  std::vector<T> sg;
  T fg;
  return deep_supervision_loss(forward(g, x, Mode::Train), gt, sg, fg).total;
}

}  // namespace

TEST_CASE("every variant builds and produces full-resolution outputs") {
  for (Variant v : all_variants()) {
    CAPTURE(to_string(v));
    auto g = NetGraph<double>::build(v, tiny_net());
    init_params(g, 1);
    const auto out = forward(g, random_tensor({1, 3, 64, 64}, 2), Mode::Train);
    CHECK(out.fused_logit.shape() == Shape{1, 1, 64, 64});
    const std::size_t sides = has_side_outputs(v) ? 6 : 0;
    CHECK(out.side_logits.size() == sides);
    for (const auto& s : out.side_logits) CHECK(s.shape() == Shape{1, 1, 64, 64});
    CHECK(parse_variant(to_string(v)) == v);
  }
  CHECK_THROWS_AS(parse_variant("DNA_PLUS"), ConfigError);
}

TEST_CASE("odd input sizes are cropped back to the input") {
  auto g = NetGraph<double>::build(Variant::Dna, tiny_net(70));
  init_params(g, 1);
  const auto out = forward(g, random_tensor({1, 3, 70, 70}, 3), Mode::Train);
  CHECK(out.fused_logit.shape() == Shape{1, 1, 70, 70});
  CHECK_THROWS_AS(NetGraph<double>::build(Variant::Dna, tiny_net(16)), std::exception);
}

TEST_CASE("encoder and decoder side widths follow the configuration") {
  const NetConfig c = tiny_net();
  const auto g = NetGraph<double>::build(Variant::EncDec, c);
  const auto widths = c.backbone_widths();
  for (int i = 0; i < 5; ++i) {
    CHECK(g.shapes()[g.encoder_sides()[i]].c == widths[i]);
    CHECK(g.shapes()[g.decoder_sides()[i]].c == c.width(c.sides[i].channels));
    CHECK(g.shapes()[g.encoder_sides()[i]].h == 64 >> i);
  }
  CHECK(g.shapes()[g.encoder_sides()[5]].h == 2);
  // The K3 variant swaps every decoder kernel to 3x3.
  const auto k3 = NetGraph<double>::build(Variant::EncDecK3, c);
  CHECK(k3.param("dec5.conv1.weight").value.shape().h == 3);
  CHECK(g.param("dec5.conv1.weight").value.shape().h == 5);
}

TEST_CASE("inference skips side heads but keeps the fused map bit-identical") {
  auto g = NetGraph<double>::build(Variant::Dna, tiny_net());
  init_params(g, 4);
  const T x = random_tensor({1, 3, 64, 64}, 5);
  const auto train = forward(g, x, Mode::Train);
  const auto test = forward(g, x, Mode::Test);
  CHECK(test.side_logits.empty());
  CHECK(train.side_logits.size() == 6);
  CHECK(test.fused_logit.values() == train.fused_logit.values());
}

TEST_CASE("linear head: hand cases and the affine property") {
  const T a({1, 1, 1, 2}, {1.0, -2.0}), b({1, 1, 1, 2}, {3.0, 0.5});
  Eigen::VectorXd w(2);
  w << 0.25, 2.0;
  const T y = linear_head<double>({a, b}, w, 0.5);
  CHECK(y[0] == doctest::Approx(0.25 * 1 + 2 * 3 + 0.5));
  CHECK(y[1] == doctest::Approx(0.25 * -2 + 2 * 0.5 + 0.5));

  // Affine in the side logits: f(x + z) = f(x) + f(z) - bias.
  const T c({1, 1, 1, 2}, {-1.0, 4.0}), d({1, 1, 1, 2}, {2.0, 2.0});
  T ac = a, bd = b;
  ac.values() += c.values();
  bd.values() += d.values();
  const T lhs = linear_head<double>({ac, bd}, w, 0.5);
  const T r1 = linear_head<double>({a, b}, w, 0.5), r2 = linear_head<double>({c, d}, w, 0.5);
  for (Index i = 0; i < 2; ++i) CHECK(lhs[i] == doctest::Approx(r1[i] + r2[i] - 0.5).epsilon(1e-14));
}

// Residual of the best affine fit of the fused logit on the six side logits.
static double affine_fit_residual(Variant v) {
  auto g = NetGraph<double>::build(v, tiny_net());
  InitConfig init;
  init.other = InitScheme::HeNormal;
  init_params(g, 6, init);
  const auto out = forward(g, random_tensor({1, 3, 64, 64}, 7), Mode::Train);
  const Index n = out.fused_logit.size();
  Eigen::MatrixXd a(n, 7);
  for (int k = 0; k < 6; ++k) a.col(k) = out.side_logits[k].values();
  a.col(6).setOnes();
  const Eigen::VectorXd y = out.fused_logit.values();
  const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(y);
  return (a * coef - y).norm() / y.norm();
}

TEST_CASE("linear fusion is affine in the side logits, the DNA head is not") {
  CHECK(affine_fit_residual(Variant::EncDecLin) < 1e-10);
  CHECK(affine_fit_residual(Variant::HedStyle) < 1e-10);
  CHECK(affine_fit_residual(Variant::Dna) > 1e-2);
}

TEST_CASE("whole-network gradients match finite differences") {
  for (Variant v : {Variant::Dna, Variant::EncDecLin, Variant::Unet}) {
    CAPTURE(to_string(v));
    NetConfig c = tiny_net(32);
    c.tiny_divisor = 32;
    c.top_channels_1 = c.top_channels_2 = 4;
    c.sides = {{{3, 4}, {3, 4}, {3, 4}, {3, 4}, {3, 4}}};
    c.dna_side_channels = 2;
    c.dna_mid_channels = 2;
    c.asym_kernel = 3;
    auto g = NetGraph<double>::build(v, c);
    InitConfig init;
    init.other = InitScheme::HeNormal;
    init_params(g, 11, init);
    const T x = random_tensor({1, 3, 32, 32}, 12);
    T gt({1, 1, 32, 32});
    for (int y = 8; y < 20; ++y)
      for (int xx = 10; xx < 24; ++xx) gt(0, 0, y, xx) = 1.0;

    Activations<double> acts;
    std::vector<T> sg;
    T fg;
    deep_supervision_loss(forward(g, x, Mode::Train, &acts), gt, sg, fg);
    const auto grads = backward(g, acts, sg, fg);
    // Probe a few entries of the first, a middle and the last parameter tensor.
    // Steps of 1e-5 on conv1_1 already push some ReLUs and pool winners across
    // their kinks, so the step is smaller and the tolerance allows for round-off
    // in a loss of order 1e3.
    for (std::size_t k : {std::size_t(0), g.params().size() / 2, g.params().size() - 2}) {
      auto& p = g.params()[k];
      CAPTURE(p.name);
      for (Index i = 0; i < std::min<Index>(p.value.size(), 4); ++i) {
        const double saved = p.value[i];
        p.value[i] = saved + 1e-6;
        const double up = loss_of(g, x, gt);
        p.value[i] = saved - 1e-6;
        const double down = loss_of(g, x, gt);
        p.value[i] = saved;
        CHECK(gradient_error(grads[k][i], (up - down) / 2e-6) < 1e-5);
      }
    }
  }
}

TEST_CASE("asymmetric head multiply-adds") {
  // Equal channels: n*n against 2n per output element.
  const auto eq = asymmetric_head_flops(96, 96, 64, 64, 7, 1);
  CHECK(eq.ratio() == 3.5);
  CHECK(eq.standard == std::int64_t(96) * 96 * 64 * 64 * 49);
  // Six sides of 25 channels into 64: the published head sizes at 300x300.
  const auto pub = asymmetric_head_flops(300, 300, 150, 64, 7);
  CHECK(pub.asymmetric / 1e9 == doctest::Approx(13.8).epsilon(0.005));
  CHECK(pub.standard / 1e9 == doctest::Approx(60.4).epsilon(0.005));
}

TEST_CASE("flop report covers every conv and isolates the asymmetric groups") {
  const auto g = NetGraph<double>::build(Variant::Dna, NetConfig{});
  const auto rep = count_flops(g, g.input_shape());
  std::int64_t sum = 0;
  for (const auto& l : rep.layers) sum += l.multiply_adds;
  CHECK(sum == rep.total);
  const NetConfig& c = g.config();
  const auto expect = asymmetric_head_flops(c.input_height, c.input_width, 6 * c.width(c.dna_side_channels),
                                            c.width(c.dna_mid_channels), c.asym_kernel);
  CHECK(rep.asymmetric == expect.asymmetric);
  CHECK(rep.standard_equivalent == expect.standard);
  std::ostringstream os;
  write_summary(os, g);
  CHECK(os.str().find("dna.asym1.row") != std::string::npos);
}

TEST_CASE("float and double graphs agree") {
  auto g = NetGraph<double>::build(Variant::Dna, tiny_net());
  init_params(g, 3);
  const auto gf = g.cast<float>();
  const T x = random_tensor({1, 3, 64, 64}, 9);
  const auto d = forward(g, x, Mode::Test).fused_prob;
  const auto f = forward(gf, x.cast<float>(), Mode::Test).fused_prob.cast<double>();
  CHECK((d.values() - f.values()).cwiseAbs().maxCoeff() < 1e-4);
}
