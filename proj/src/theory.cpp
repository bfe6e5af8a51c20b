#include "dna/theory.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dna/errors.hpp"
#include "dna/layers.hpp"
#include "dna/rng.hpp"

namespace dna {

namespace {

double sigma(double x) { return sigmoid(x); }

void check_logits(const std::vector<Map>& logits) {
  if (logits.empty()) throw std::invalid_argument("no side logits");
  for (const Map& o : logits)
    if (o.shape() != logits.front().shape())
      throw ShapeError("side logits disagree in shape: " + o.shape().str() + " vs " + logits.front().shape().str());
}

}  // namespace

Map linear_aggregate(const std::vector<Map>& logits, const std::vector<double>& weights) {
  check_logits(logits);
  if (weights.size() != logits.size())
    throw std::invalid_argument(std::to_string(weights.size()) + " weights for " + std::to_string(logits.size()) +
                                " sides");
  for (double w : weights)
    if (!(w >= 0)) throw std::invalid_argument("linear aggregation needs non-negative weights");
  Map fused(logits.front().shape(), 0.0);
  for (std::size_t i = 0; i < logits.size(); ++i) fused.values() += weights[i] * logits[i].values();
  fused.values() = fused.values().unaryExpr([](double x) { return sigma(x); });
  return fused;
}

NormalizedWeights normalize_weights(const std::vector<double>& weights) {
  double s = 0;
  for (double w : weights) {
    if (!(w >= 0)) throw std::invalid_argument("weights must be non-negative");
    s += w;
  }
  if (!(s > 0)) throw std::invalid_argument("weights are all zero");
  NormalizedWeights n{weights, s};
  for (double& w : n.unit) w /= s;
  return n;
}

MaeBoundReport check_mae_bound(const std::vector<Map>& logits, const std::vector<double>& weights, const Map& gt,
                               double slack) {
  check_logits(logits);
  if (gt.shape() != logits.front().shape()) throw ShapeError("mask shape " + gt.shape().str());
  double sum = 0;
  for (double w : weights) sum += w;
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("weights are not on the simplex (sum " +
                                                               std::to_string(sum) + ")");
  const Map fused = linear_aggregate(logits, weights);
  MaeBoundReport r;
  r.pixels = gt.size();
  r.worst_slack = -std::numeric_limits<double>::infinity();
  for (Index p = 0; p < gt.size(); ++p) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const Map& o : logits) {
      const double e = std::abs(gt[p] - sigma(o[p]));
      lo = std::min(lo, e);
      hi = std::max(hi, e);
    }
    const double f = std::abs(gt[p] - fused[p]);
    const double excess = std::max(lo - f, f - hi);
    r.worst_slack = std::max(r.worst_slack, excess);
    if (excess > slack) {
      r.pass = false;
      r.violations.push_back({p, lo, f, hi});
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// ROC

namespace {

void check_labels(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
  bool pos = false, neg = false;
  for (int l : labels) (l ? pos : neg) = true;
  if (!pos || !neg) throw std::invalid_argument("ROC needs at least one positive and one negative label");
}

}  // namespace

std::vector<std::pair<std::int64_t, std::int64_t>> roc_counts(const std::vector<double>& scores,
                                                              const std::vector<int>& labels) {
  check_labels(scores, labels);
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  // Walking scores downward adds one operating point per distinct value.
  std::vector<std::pair<std::int64_t, std::int64_t>> pts{{0, 0}};
  std::int64_t fp = 0, tp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (labels[order[i]] ? tp : fp) += 1;
    if (i + 1 == order.size() || scores[order[i + 1]] != scores[order[i]]) pts.emplace_back(fp, tp);
  }
  std::reverse(pts.begin(), pts.end());
  return pts;
}

double rank_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_labels(scores, labels);
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of positive midranks, accumulated exactly in half-units.
  std::int64_t rank_sum_x2 = 0, npos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const std::int64_t midrank_x2 = std::int64_t(i + 1) + std::int64_t(j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) {
        rank_sum_x2 += midrank_x2;
        ++npos;
      }
    i = j;
  }
  const std::int64_t nneg = std::int64_t(scores.size()) - npos;
  const std::int64_t u_x2 = rank_sum_x2 - npos * (npos + 1);
  return double(u_x2) / (2.0 * double(npos) * double(nneg));
}

RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  const auto counts = roc_counts(scores, labels);
  const double P = double(counts.front().second), N = double(counts.front().first);
  RocResult r;
  for (const auto& [fp, tp] : counts) r.curve.push_back({double(fp) / N, double(tp) / P});
  // Trapezoids in integer half-units keep the sweep exact, so it matches the rank statistic bit for bit.
  std::int64_t area_x2 = 0;
  for (std::size_t i = 1; i < counts.size(); ++i)
    area_x2 += (counts[i - 1].first - counts[i].first) * (counts[i - 1].second + counts[i].second);
  r.auc = double(area_x2) / (2.0 * P * N);
  r.rank_auc = rank_auc(scores, labels);
  return r;
}

InvarianceReport monotone_invariance_check(const std::vector<double>& scores, const std::vector<int>& labels,
                                           const std::function<double(double)>& increasing_map) {
  std::vector<double> mapped(scores.size());
  std::transform(scores.begin(), scores.end(), mapped.begin(), increasing_map);
  InvarianceReport r;
  r.auc_before = rank_auc(scores, labels);
  r.auc_after = rank_auc(mapped, labels);
  const auto a = roc_counts(scores, labels), b = roc_counts(mapped, labels);
  r.same_points = std::set(a.begin(), a.end()) == std::set(b.begin(), b.end());
  return r;
}

InvarianceReport monotone_invariance_check(const std::vector<double>& scores, const std::vector<int>& labels,
                                           double k) {
  if (!(k > 0)) throw std::invalid_argument("sigmoid slope k must be > 0");
  return monotone_invariance_check(scores, labels, [k](double x) { return sigma(k * x); });
}

void write_roc_csv(std::ostream& os, const RocResult& roc) {
  os << "fpr,tpr\n" << std::setprecision(10);
  for (const auto& p : roc.curve) os << p.fpr << "," << p.tpr << "\n";
}

// ---------------------------------------------------------------------------
// Limits of linear aggregation

namespace {

double fused_mae(const std::vector<Map>& logits, const std::vector<double>& w, const Map& gt) {
  double e = 0;
  for (Index p = 0; p < gt.size(); ++p) {
    double z = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) z += w[i] * logits[i][p];
    e += std::abs(gt[p] - sigma(z));
  }
  return e / double(gt.size());
}

// Visits every weight vector with entries k_i / resolution, sum k_i = resolution.
void for_each_simplex_point(int n, int resolution, const std::function<void(const std::vector<double>&)>& fn) {
  std::vector<int> k(n, 0);
  std::vector<double> w(n);
  std::function<void(int, int)> rec = [&](int i, int left) {
    if (i == n - 1) {
      k[i] = left;
      for (int j = 0; j < n; ++j) w[j] = double(k[j]) / resolution;
      fn(w);
      return;
    }
    for (int v = 0; v <= left; ++v) {
      k[i] = v;
      rec(i + 1, left - v);
    }
  };
  rec(0, resolution);
}

// Per-pixel MLP (1x1 convolutions) trained by full-batch gradient descent on mean BCE.
double train_fuser(const std::vector<Map>& logits, const Map& gt, const FuserConfig& cfg) {
  const int n = int(logits.size());
  const Shape s = gt.shape();
  const Tensor<double> x = concat_channels(logits);
  const ConvSpec l1{1, 1, n, cfg.hidden, 1, 0, 0, true};
  const ConvSpec l2{1, 1, cfg.hidden, 1, 1, 0, 0, true};
  CounterRng rng(cfg.seed, 0);
  Tensor<double> w1(l1.weight_shape()), w2(l2.weight_shape());
  for (Index i = 0; i < w1.size(); ++i) w1[i] = rng.normal(0, std::sqrt(2.0 / n));
  for (Index i = 0; i < w2.size(); ++i) w2[i] = rng.normal(0, std::sqrt(2.0 / cfg.hidden));
  Eigen::VectorXd b1 = Eigen::VectorXd::Zero(cfg.hidden), b2 = Eigen::VectorXd::Zero(1);
  Tensor<double> vw1(w1.shape(), 0.0), vw2(w2.shape(), 0.0);
  Eigen::VectorXd vb1 = b1, vb2 = b2;
  const double count = double(s.size());

  auto predict = [&](Tensor<double>* hidden_out) {
    Tensor<double> h = activation(conv2d(x, l1, w1, b1), Activation::Relu);
    Tensor<double> z = conv2d(h, l2, w2, b2);
    if (hidden_out) *hidden_out = std::move(h);
    return z;
  };
  for (int it = 0; it < cfg.iterations; ++it) {
    Tensor<double> h;
    const Tensor<double> z = predict(&h);
    Tensor<double> dz(z.shape());
    for (Index p = 0; p < z.size(); ++p) dz[p] = (sigma(z[p]) - gt[p]) / count;
    const auto g2 = conv2d_backward(h, l2, w2, dz, true);
    const Tensor<double> dh = activation_backward(h, Activation::Relu, g2.input);
    const auto g1 = conv2d_backward(x, l1, w1, dh, false);
    vw1.values() = cfg.momentum * vw1.values() + g1.weights.values();
    vw2.values() = cfg.momentum * vw2.values() + g2.weights.values();
    vb1 = cfg.momentum * vb1 + g1.bias;
    vb2 = cfg.momentum * vb2 + g2.bias;
    w1.values() -= cfg.lr * vw1.values();
    w2.values() -= cfg.lr * vw2.values();
    b1 -= cfg.lr * vb1;
    b2 -= cfg.lr * vb2;
  }
  const Tensor<double> z = predict(nullptr);
  double e = 0;
  for (Index p = 0; p < z.size(); ++p) e += std::abs(gt[p] - sigma(z[p]));
  return e / count;
}

}  // namespace

LimitDemo empirical_limit_demo(const std::vector<Map>& logits, const Map& gt, int resolution,
                               const FuserConfig& fuser) {
  check_logits(logits);
  const int n = int(logits.size());
  if (n > 4) throw std::invalid_argument("limit demo supports at most 4 sides");
  if (resolution < 1) throw std::invalid_argument("grid resolution must be >= 1");
  LimitDemo d;
  for (int i = 0; i < n; ++i) {
    std::vector<double> one(n, 0.0);
    one[i] = 1.0;
    d.side_mae.push_back(fused_mae(logits, one, gt));
  }
  d.best_linear_mae = std::numeric_limits<double>::infinity();
  for_each_simplex_point(n, resolution, [&](const std::vector<double>& w) {
    const double e = fused_mae(logits, w, gt);
    if (e < d.best_linear_mae) {
      d.best_linear_mae = e;
      d.best_weights = w;
    }
  });
  d.fine_linear_mae = std::numeric_limits<double>::infinity();
  for_each_simplex_point(n, 2 * resolution,
                         [&](const std::vector<double>& w) { d.fine_linear_mae = std::min(d.fine_linear_mae, fused_mae(logits, w, gt)); });
  // Per pixel |d MAE / d w_i| <= |O_i| / 4, and every fine point has a coarse
  // neighbour within L1 distance n / resolution.
  double max_abs = 0;
  for (const Map& o : logits) max_abs = std::max(max_abs, o.values().cwiseAbs().maxCoeff());
  d.refinement_bound = max_abs / 4.0 * double(n) / resolution;
  d.nonlinear_mae = train_fuser(logits, gt, fuser);
  return d;
}

std::pair<std::vector<Map>, Map> xor_ensemble(int height, int width) {
  // Four pixel types by quadrant: positives (+,-) and (-,+), negatives (+,+) and (-,-).
  std::vector<Map> logits{Map({1, 1, height, width}), Map({1, 1, height, width})};
  Map gt({1, 1, height, width});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const bool top = y < height / 2, left = x < width / 2;
      const double a = top ? 3.0 : -3.0, b = top == left ? a : -a;
      logits[0](0, 0, y, x) = a;
      logits[1](0, 0, y, x) = b;
      gt(0, 0, y, x) = top == left ? 0.0 : 1.0;
    }
  return {logits, gt};
}

// ---------------------------------------------------------------------------
// Suites

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<double> simplex_weights(CounterRng& rng, int n) {
  // Normalized exponentials are uniform on the simplex.
  std::vector<double> w(n);
  double s = 0;
  for (double& v : w) s += v = -std::log(1.0 - rng.uniform());
  for (double& v : w) v /= s;
  return w;
}

}  // namespace

SuiteResult theorem1_suite(int trials, std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult r;
  r.name = "theorem1 mae bound";
  r.trials = trials;
  r.worst = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < trials; ++t) {
    CounterRng rng(seed, std::uint64_t(t));
    const int n = int(rng.uniform_int(2, 6));
    const int h = int(rng.uniform_int(1, 32)), w = int(rng.uniform_int(1, 32));
    std::vector<Map> logits(n, Map({1, 1, h, w}));
    for (Map& o : logits)
      for (Index p = 0; p < o.size(); ++p) o[p] = rng.uniform(-6.0, 6.0);
    Map gt({1, 1, h, w});
    for (Index p = 0; p < gt.size(); ++p) gt[p] = double(rng.uniform_int(0, 1));
    const auto rep = check_mae_bound(logits, simplex_weights(rng, n), gt);
    r.worst = std::max(r.worst, rep.worst_slack);
    if (!rep.pass) {
      if (r.failures++ == 0) {
        const auto& v = rep.violations.front();
        std::ostringstream os;
        os << "trial " << t << " pixel " << v.pixel << ": " << v.lower << " <= " << v.fused << " <= " << v.upper;
        r.detail = os.str();
      }
    }
  }
  r.seconds = elapsed(t0);
  return r;
}

SuiteResult lemma1_suite(int trials, std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult r;
  r.name = "lemma1 weight normalization";
  r.trials = trials;
  for (int t = 0; t < trials; ++t) {
    CounterRng rng(seed, std::uint64_t(t));
    const int n = int(rng.uniform_int(1, 6));
    const int h = int(rng.uniform_int(1, 16)), w = int(rng.uniform_int(1, 16));
    std::vector<double> weights(n);
    for (double& v : weights) v = rng.uniform(0.0, 3.0);
    std::vector<Map> logits(n, Map({1, 1, h, w}));
    for (Map& o : logits)
      for (Index p = 0; p < o.size(); ++p) o[p] = rng.uniform(-6.0, 6.0);
    const NormalizedWeights nw = normalize_weights(weights);
    const Map direct = linear_aggregate(logits, weights);
    Map inner(logits.front().shape(), 0.0);
    for (int i = 0; i < n; ++i) inner.values() += nw.unit[i] * logits[i].values();
    double err = 0;
    for (Index p = 0; p < inner.size(); ++p) err = std::max(err, std::abs(direct[p] - sigma(nw.scale * inner[p])));
    double unit_sum = 0;
    for (double u : nw.unit) unit_sum += u;
    err = std::max(err, std::abs(unit_sum - 1.0));
    r.worst = std::max(r.worst, err);
    if (err > 1e-12 && r.failures++ == 0) r.detail = "trial " + std::to_string(t) + " error " + std::to_string(err);
  }
  r.seconds = elapsed(t0);
  return r;
}

SuiteResult theorem2_suite(int sets, std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult r;
  r.name = "theorem2 roc/auc invariance";
  r.trials = sets;
  for (int t = 0; t < sets; ++t) {
    CounterRng rng(seed, std::uint64_t(t));
    const int n = int(rng.uniform_int(10, 500));
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
      scores[i] = double(rng.uniform_int(-300, 300)) / 100.0;
      labels[i] = int(rng.uniform_int(0, 1));
    }
    labels[0] = 1;
    labels[1] = 0;
    // A short run of deliberate ties across both classes.
    for (int i = 2; i < std::min(n, 8); ++i) scores[i] = scores[0];

    std::vector<std::string> failed;
    auto probe = [&](const std::string& name, const InvarianceReport& rep) {
      r.worst = std::max(r.worst, std::abs(rep.auc_before - rep.auc_after));
      if (!rep.pass()) failed.push_back(name);
    };
    for (double k : {0.1, 1.0, 10.0})
      probe("sigma(" + std::to_string(k) + "x)", monotone_invariance_check(scores, labels, k));
    probe("x^3", monotone_invariance_check(scores, labels, [](double x) { return x * x * x; }));
    const RocResult roc = roc_auc(scores, labels);
    r.worst = std::max(r.worst, std::abs(roc.auc - roc.rank_auc));
    if (std::abs(roc.auc - roc.rank_auc) >= 1e-12) failed.push_back("sweep vs rank");
    if (!failed.empty() && r.failures++ == 0) r.detail = "set " + std::to_string(t) + ": " + failed.front();
  }
  r.seconds = elapsed(t0);
  return r;
}

SuiteResult limit_suite() {
  const auto t0 = Clock::now();
  SuiteResult r;
  r.name = "linear aggregation limit";
  r.trials = 1;
  const auto [logits, gt] = xor_ensemble(16, 16);
  const LimitDemo d = empirical_limit_demo(logits, gt);
  const double best_side = *std::min_element(d.side_mae.begin(), d.side_mae.end());
  std::ostringstream os;
  os << std::setprecision(4) << "best side " << best_side << ", best linear " << d.best_linear_mae
     << ", nonlinear " << d.nonlinear_mae;
  r.detail = os.str();
  r.worst = d.best_linear_mae - d.nonlinear_mae;
  if (d.best_linear_mae < best_side - 1e-12 || !(d.nonlinear_mae < d.best_linear_mae) || !d.refinement_ok())
    r.failures = 1;
  r.seconds = elapsed(t0);
  return r;
}

}  // namespace dna
