#pragma once

// Saliency evaluation: dataset-mean precision/recall curves and max F-beta,
// MAE, pooled ROC AUC, and the weighted F-beta measure.

#include <iosfwd>
#include <vector>

#include "dna/tensor.hpp"

namespace dna {

using Map = Tensor<double>;  // 1x1xHxW prediction or ground truth

inline constexpr double kBetaSq = 0.3;

struct PrCurve {
  std::vector<double> thresholds;
  std::vector<double> mean_precision;
  std::vector<double> mean_recall;
  std::vector<double> fbeta;
  double beta_sq = kBetaSq;
};

struct MetricsReport {
  double max_fbeta = 0.0;
  double mae = 0.0;
  double weighted_fbeta = 0.0;
  double auc = 0.0;
  PrCurve curve;
};

/// k/255 for k = 0..255.
std::vector<double> default_thresholds();

/// (1 + b2) P R / (b2 P + R), and 0 when the denominator vanishes.
double fbeta(double precision, double recall, double beta_sq = kBetaSq);

/// Maps outside [0, 1] are min-max normalized; maps inside are returned as-is.
Map normalize_prediction(const Map& pred);

/// Per threshold t: binarize every map at pred >= t, average per-image
/// precision and recall over the dataset, then F-beta of the means. An image
/// with no predicted positives has precision 1 if its recall is also 0 and 0
/// otherwise; an image with an empty ground truth has recall 0.
PrCurve pr_curve(const std::vector<Map>& preds, const std::vector<Map>& gts,
                 const std::vector<double>& thresholds = default_thresholds());

double max_fbeta(const PrCurve& curve);

double mae(const Map& pred, const Map& gt);
double mean_mae(const std::vector<Map>& preds, const std::vector<Map>& gts);

/// ROC AUC over all pixels of the dataset pooled together (rank statistic,
/// ties count one half).
double pooled_auc(const std::vector<Map>& preds, const std::vector<Map>& gts);

// Weighted F-beta with the reference defaults: 7x7 Gaussian of sigma 5 for
// dependency smoothing, distance decay ln(0.5)/5 on background errors, beta^2 = 1.
struct WeightedFbetaConfig {
  int gaussian_size = 7;
  double gaussian_sigma = 5.0;
  double decay_distance = 5.0;
  double beta_sq = 1.0;
  double eps = 2.220446049250313e-16;
};

/// Empty ground truth yields 0 with a warning on std::clog.
double weighted_fbeta(const Map& pred, const Map& gt, const WeightedFbetaConfig& config = {});
double mean_weighted_fbeta(const std::vector<Map>& preds, const std::vector<Map>& gts,
                           const WeightedFbetaConfig& config = {});

MetricsReport evaluate(const std::vector<Map>& preds, const std::vector<Map>& gts);

/// `max_fbeta,mae,wfbeta,auc,images` header plus one row.
void write_report_csv(std::ostream& os, const MetricsReport& report, std::size_t images);
/// `threshold,precision,recall,fbeta` rows.
void write_curve_csv(std::ostream& os, const PrCurve& curve);

}  // namespace dna
