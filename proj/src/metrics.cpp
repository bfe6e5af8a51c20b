#include "dna/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>

#include "dna/errors.hpp"
#include "dna/theory.hpp"

namespace dna {

namespace {

void check_pair(const Map& pred, const Map& gt, const char* what) {
  if (pred.shape() != gt.shape() || pred.shape().n != 1 || pred.shape().c != 1)
    throw ShapeError(std::string(what) + ": prediction " + pred.shape().str() + " vs ground truth " +
                     gt.shape().str());
}

void check_dataset(const std::vector<Map>& preds, const std::vector<Map>& gts, const char* what) {
  if (preds.empty()) throw DataError(std::string(what) + ": empty dataset");
  if (preds.size() != gts.size())
    throw DataError(std::string(what) + ": " + std::to_string(preds.size()) + " predictions for " +
                    std::to_string(gts.size()) + " ground truths");
  for (std::size_t i = 0; i < preds.size(); ++i) check_pair(preds[i], gts[i], what);
}

}  // namespace

std::vector<double> default_thresholds() {
  std::vector<double> t(256);
  for (int k = 0; k < 256; ++k) t[k] = k / 255.0;
  return t;
}

double fbeta(double precision, double recall, double beta_sq) {
  const double den = beta_sq * precision + recall;
  return den > 0 ? (1 + beta_sq) * precision * recall / den : 0.0;
}

Map normalize_prediction(const Map& pred) {
  const double lo = pred.values().minCoeff(), hi = pred.values().maxCoeff();
  if (lo >= 0 && hi <= 1) return pred;
  Map out(pred.shape());
  if (hi > lo) out.values() = (pred.values().array() - lo) / (hi - lo);
  else out.set_zero();
  return out;
}

PrCurve pr_curve(const std::vector<Map>& preds, const std::vector<Map>& gts, const std::vector<double>& thresholds) {
  check_dataset(preds, gts, "pr_curve");
  if (thresholds.empty()) throw ConfigError("pr_curve: no thresholds");
  PrCurve c;
  c.thresholds = thresholds;
  const std::size_t T = thresholds.size();
  c.mean_precision.assign(T, 0.0);
  c.mean_recall.assign(T, 0.0);

  // Sorting each map's scores once turns every threshold into two binary searches.
  std::vector<double> pos, all;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Map p = normalize_prediction(preds[i]);
    pos.clear();
    all.assign(p.data(), p.data() + p.size());
    for (Index k = 0; k < p.size(); ++k)
      if (gts[i][k] >= 0.5) pos.push_back(p[k]);
    std::sort(pos.begin(), pos.end());
    std::sort(all.begin(), all.end());
    for (std::size_t t = 0; t < T; ++t) {
      const double th = thresholds[t];
      const double tp = double(pos.end() - std::lower_bound(pos.begin(), pos.end(), th));
      const double predicted = double(all.end() - std::lower_bound(all.begin(), all.end(), th));
      const double recall = pos.empty() ? 0.0 : tp / double(pos.size());
      const double precision = predicted > 0 ? tp / predicted : (recall == 0 ? 1.0 : 0.0);
      c.mean_precision[t] += precision;
      c.mean_recall[t] += recall;
    }
  }
  const double n = double(preds.size());
  c.fbeta.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    c.mean_precision[t] /= n;
    c.mean_recall[t] /= n;
    c.fbeta[t] = fbeta(c.mean_precision[t], c.mean_recall[t], c.beta_sq);
  }
  return c;
}

double max_fbeta(const PrCurve& curve) {
  if (curve.fbeta.empty()) throw DataError("max_fbeta: empty curve");
  return *std::max_element(curve.fbeta.begin(), curve.fbeta.end());
}

double mae(const Map& pred, const Map& gt) {
  check_pair(pred, gt, "mae");
  return (pred.values() - gt.values()).cwiseAbs().mean();
}

double mean_mae(const std::vector<Map>& preds, const std::vector<Map>& gts) {
  check_dataset(preds, gts, "mae");
  double sum = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) sum += mae(normalize_prediction(preds[i]), gts[i]);
  return sum / double(preds.size());
}

double pooled_auc(const std::vector<Map>& preds, const std::vector<Map>& gts) {
  check_dataset(preds, gts, "auc");
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Map p = normalize_prediction(preds[i]);
    for (Index k = 0; k < p.size(); ++k) {
      scores.push_back(p[k]);
      labels.push_back(gts[i][k] >= 0.5 ? 1 : 0);
    }
  }
  return rank_auc(scores, labels);
}

// ---------------------------------------------------------------------------
// Weighted F-beta

namespace {

// Distance to the nearest foreground pixel and its row-major index; ties go to
// the smallest index. Rings of growing Chebyshev radius are scanned until no
// closer pixel can remain.
void nearest_foreground(const Map& gt, std::vector<double>& dist, std::vector<Index>& idx) {
  const int h = gt.shape().h, w = gt.shape().w;
  dist.assign(std::size_t(h) * w, 0.0);
  idx.assign(std::size_t(h) * w, 0);
  auto fg = [&](int y, int x) { return gt[Index(y) * w + x] >= 0.5; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Index self = Index(y) * w + x;
      if (fg(y, x)) {
        idx[self] = self;
        continue;
      }
      long best_d2 = -1;
      Index best = -1;
      auto consider = [&](int yy, int xx) {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w || !fg(yy, xx)) return;
        const long d2 = long(yy - y) * (yy - y) + long(xx - x) * (xx - x);
        const Index k = Index(yy) * w + xx;
        if (best_d2 < 0 || d2 < best_d2 || (d2 == best_d2 && k < best)) {
          best_d2 = d2;
          best = k;
        }
      };
      const int max_r = std::max(h, w);
      for (int r = 1; r <= max_r; ++r) {
        if (best_d2 >= 0 && long(r) * r > best_d2) break;
        for (int xx = x - r; xx <= x + r; ++xx) {
          consider(y - r, xx);
          consider(y + r, xx);
        }
        for (int yy = y - r + 1; yy <= y + r - 1; ++yy) {
          consider(yy, x - r);
          consider(yy, x + r);
        }
      }
      dist[self] = std::sqrt(double(best_d2));
      idx[self] = best;
    }
  }
}

// Correlation with a normalized size x size Gaussian, zero padding, same size.
Eigen::MatrixXd gaussian_filter(const Eigen::MatrixXd& in, int size, double sigma) {
  const int r = size / 2;
  Eigen::VectorXd g(size);
  for (int i = 0; i < size; ++i) g[i] = std::exp(-double((i - r) * (i - r)) / (2 * sigma * sigma));
  g /= g.sum();
  const Index h = in.rows(), w = in.cols();
  Eigen::MatrixXd tmp = Eigen::MatrixXd::Zero(h, w), out = Eigen::MatrixXd::Zero(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (int k = -r; k <= r; ++k)
        if (x + k >= 0 && x + k < w) tmp(y, x) += g[k + r] * in(y, x + k);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (int k = -r; k <= r; ++k)
        if (y + k >= 0 && y + k < h) out(y, x) += g[k + r] * tmp(y + k, x);
  return out;
}

}  // namespace

double weighted_fbeta(const Map& pred, const Map& gt, const WeightedFbetaConfig& cfg) {
  check_pair(pred, gt, "weighted_fbeta");
  const int h = gt.shape().h, w = gt.shape().w;
  const Index n = gt.size();
  Index fg_count = 0;
  for (Index k = 0; k < n; ++k) fg_count += gt[k] >= 0.5;
  if (fg_count == 0) {
    std::clog << "warning: weighted F-beta of an empty ground truth is defined as 0\n";
    return 0.0;
  }

  std::vector<double> dist;
  std::vector<Index> nearest;
  nearest_foreground(gt, dist, nearest);

  Eigen::MatrixXd E(h, w), Et(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Index k = Index(y) * w + x;
      E(y, x) = std::abs(pred[k] - (gt[k] >= 0.5 ? 1.0 : 0.0));
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Index src = nearest[Index(y) * w + x];
      Et(y, x) = E(src / w, src % w);
    }
  const Eigen::MatrixXd EA = gaussian_filter(Et, cfg.gaussian_size, cfg.gaussian_sigma);

  const double decay = std::log(0.5) / cfg.decay_distance;
  double ew_fg = 0, ew_bg = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Index k = Index(y) * w + x;
      if (gt[k] >= 0.5) {
        ew_fg += std::min(E(y, x), EA(y, x));
      } else {
        ew_bg += E(y, x) * (2.0 - std::exp(decay * dist[k]));
      }
    }
  const double tp = double(fg_count) - ew_fg;
  const double recall = 1.0 - ew_fg / double(fg_count);
  const double precision = tp / (cfg.eps + tp + ew_bg);
  return (1 + cfg.beta_sq) * recall * precision / (cfg.eps + recall + cfg.beta_sq * precision);
}

double mean_weighted_fbeta(const std::vector<Map>& preds, const std::vector<Map>& gts,
                           const WeightedFbetaConfig& config) {
  check_dataset(preds, gts, "weighted_fbeta");
  double sum = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) sum += weighted_fbeta(normalize_prediction(preds[i]), gts[i], config);
  return sum / double(preds.size());
}

MetricsReport evaluate(const std::vector<Map>& preds, const std::vector<Map>& gts) {
  MetricsReport r;
  r.curve = pr_curve(preds, gts);
  r.max_fbeta = max_fbeta(r.curve);
  r.mae = mean_mae(preds, gts);
  r.weighted_fbeta = mean_weighted_fbeta(preds, gts);
  r.auc = pooled_auc(preds, gts);
  return r;
}

void write_report_csv(std::ostream& os, const MetricsReport& r, std::size_t images) {
  os << "max_fbeta,mae,wfbeta,auc,images\n"
     << std::setprecision(10) << r.max_fbeta << "," << r.mae << "," << r.weighted_fbeta << "," << r.auc << ","
     << images << "\n";
}

void write_curve_csv(std::ostream& os, const PrCurve& c) {
  os << "threshold,precision,recall,fbeta\n" << std::setprecision(10);
  for (std::size_t t = 0; t < c.thresholds.size(); ++t)
    os << c.thresholds[t] << "," << c.mean_precision[t] << "," << c.mean_recall[t] << "," << c.fbeta[t] << "\n";
}

}  // namespace dna
