#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dna/rng.hpp"
#include "dna/theory.hpp"
#include "oracles.hpp"

using namespace dna;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Map map_of(std::vector<double> v) {
  const int n = int(v.size());
  return Map({1, 1, 1, n}, std::move(v));
}

}  // namespace

TEST_CASE("linear aggregation: hand case and argument checks") {
  const Map o1 = map_of({-2.0, 0.0}), o2 = map_of({2.0, 1.0});
  const Map p = linear_aggregate({o1, o2}, {0.5, 0.5});
  CHECK(p[0] == 0.5);
  CHECK(p[1] == doctest::Approx(sigmoid(0.5)).epsilon(1e-15));
  // The fused error at a positive pixel sits between the two side errors.
  const Map gt = map_of({1.0, 1.0});
  const auto rep = check_mae_bound({o1, o2}, {0.5, 0.5}, gt);
  CHECK(rep.pass);
  CHECK(rep.pixels == 2);
  CHECK(1 - p[0] <= 1 - sigmoid(-2.0));
  CHECK(1 - p[0] >= 1 - sigmoid(2.0));

  CHECK_THROWS_AS(linear_aggregate({o1, o2}, {0.5, -0.1}), std::invalid_argument);
  CHECK_THROWS_AS(linear_aggregate({o1, o2}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(check_mae_bound({o1, o2}, {0.7, 0.7}, gt), std::invalid_argument);
  CHECK_THROWS_AS(linear_aggregate({o1, Map({1, 1, 2, 1})}, {0.5, 0.5}), ShapeError);
}

TEST_CASE("weight normalization reconstructs the fused map") {
  CounterRng rng(9);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> w(4);
    for (double& x : w) x = rng.uniform(0.0, 3.0);
    std::vector<Map> logits;
    for (int i = 0; i < 4; ++i) {
      Map m({1, 1, 3, 3});
      for (Index k = 0; k < m.size(); ++k) m[k] = rng.uniform(-6, 6);
      logits.push_back(m);
    }
    const auto nw = normalize_weights(w);
    double total = 0;
    for (double u : nw.unit) total += u;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
    const Map direct = linear_aggregate(logits, w);
    for (Index k = 0; k < direct.size(); ++k) {
      double s = 0;
      for (int i = 0; i < 4; ++i) s += nw.unit[i] * logits[i][k];
      CHECK(std::abs(direct[k] - sigmoid(nw.scale * s)) < 1e-12);
    }
  }
}

TEST_CASE("ROC curve endpoints, perfect and inverted rankings") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> l{0, 0, 1, 1};
  const auto roc = roc_auc(s, l);
  CHECK(roc.curve.front() == RocPoint{1, 1});
  CHECK(roc.curve.back() == RocPoint{0, 0});
  CHECK(roc.auc == 0.75);
  CHECK(roc.rank_auc == 0.75);

  CHECK(rank_auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
  CHECK(rank_auc({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0}) == 0.0);
  CHECK(rank_auc({0.5, 0.5}, {0, 1}) == 0.5);

  CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {1}), std::invalid_argument);
}

TEST_CASE("rank AUC and the trapezoid sweep agree with pair counting under ties") {
  CounterRng rng(4);
  for (int t = 0; t < 40; ++t) {
    const int n = int(rng.uniform_int(5, 120));
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (int i = 0; i < n; ++i) {
      s[i] = double(rng.uniform_int(0, 9)) / 10.0;
      l[i] = rng.uniform() < 0.4;
    }
    l[0] = 0;
    l[1] = 1;
    const auto roc = roc_auc(s, l);
    CHECK(std::abs(roc.rank_auc - oracle::auc_pairs(s, l)) < 1e-12);
    CHECK(roc.auc == roc.rank_auc);
  }
}

TEST_CASE("increasing maps leave the ROC curve and AUC unchanged") {
  const std::vector<double> s{-1.0, 0.2, 0.2, 3.0, -0.5, 0.9};
  const std::vector<int> l{0, 1, 0, 1, 0, 1};
  for (double k : {0.1, 1.0, 10.0}) CHECK(monotone_invariance_check(s, l, k).pass());
  CHECK(monotone_invariance_check(s, l, [](double x) { return x * x * x; }).pass());
  CHECK_THROWS_AS(monotone_invariance_check(s, l, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(monotone_invariance_check(s, l, -1.0), std::invalid_argument);
  // A map that is not increasing does move the curve.
  CHECK_FALSE(monotone_invariance_check(s, l, [](double x) { return -x; }).pass());
}

TEST_CASE("property suites pass at their default sizes") {
  for (const auto& r : {theorem1_suite(), lemma1_suite(), theorem2_suite(), limit_suite()}) {
    CAPTURE(r.name);
    CAPTURE(r.detail);
    CHECK(r.pass());
    CHECK(r.trials > 0);
  }
}

TEST_CASE("the XOR ensemble defeats every linear weighting") {
  const auto [logits, gt] = xor_ensemble(8, 8);
  const auto demo = empirical_limit_demo(logits, gt);
  const double best_side = *std::min_element(demo.side_mae.begin(), demo.side_mae.end());
  CHECK(demo.best_linear_mae >= best_side - 1e-12);
  CHECK(demo.refinement_ok());
  CHECK(demo.nonlinear_mae < demo.best_linear_mae - 0.1);
}

TEST_CASE("ROC CSV") {
  std::ostringstream os;
  write_roc_csv(os, roc_auc({0.1, 0.9}, {0, 1}));
  CHECK(os.str().rfind("fpr,tpr\n", 0) == 0);
}
