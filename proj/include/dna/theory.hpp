#pragma once

// Linear side-output aggregation and what it can and cannot do: the fused
// prediction sigma(sum_i w_i O_i), its per-pixel MAE bound, the weight
// normalization behind it, and ROC/AUC invariance under increasing maps.
// The suites at the bottom are what `dna verify-theory` runs.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dna/tensor.hpp"

namespace dna {

using Map = Tensor<double>;

/// sigma(sum_i w_i O_i) elementwise. Throws std::invalid_argument on a
/// negative weight or a weight count that differs from the logit count, and
/// ShapeError when the logits disagree in shape.
Map linear_aggregate(const std::vector<Map>& logits, const std::vector<double>& weights);

struct NormalizedWeights {
  std::vector<double> unit;  // w / ||w||_1
  double scale = 0.0;        // ||w||_1
};
NormalizedWeights normalize_weights(const std::vector<double>& weights);

struct BoundViolation {
  Index pixel = 0;
  double lower = 0, fused = 0, upper = 0;
};

struct MaeBoundReport {
  bool pass = true;
  Index pixels = 0;
  double worst_slack = 0.0;  // largest amount by which the bound is exceeded (<= 0 when it holds)
  std::vector<BoundViolation> violations;
};

/// Checks min_i |g - P_i| <= |g - P_hat| <= max_i |g - P_i| at every pixel,
/// with P_i = sigma(O_i) and P_hat the linear aggregate. Weights must lie on
/// the simplex (to 1e-12), otherwise std::invalid_argument.
MaeBoundReport check_mae_bound(const std::vector<Map>& logits, const std::vector<double>& weights, const Map& gt,
                               double slack = 1e-12);

struct RocPoint {
  double fpr = 0, tpr = 0;
  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

/// Curve ordered by increasing threshold: one point per distinct score value
/// (predict positive when score >= value), starting at (1, 1), ending at (0, 0).
struct RocResult {
  std::vector<RocPoint> curve;
  double auc = 0.0;       // trapezoid rule over the curve
  double rank_auc = 0.0;  // Mann-Whitney statistic, ties count one half
};

/// Throws std::invalid_argument when labels hold a single class or sizes differ.
RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);
double rank_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// ROC operating points as exact (false positive, true positive) counts, in
/// the same order as RocResult::curve.
std::vector<std::pair<std::int64_t, std::int64_t>> roc_counts(const std::vector<double>& scores,
                                                              const std::vector<int>& labels);

struct InvarianceReport {
  double auc_before = 0, auc_after = 0;
  bool same_points = false;
  bool pass(double tol = 1e-12) const { return same_points && std::abs(auc_before - auc_after) < tol; }
};

/// Applies phi(x) = sigma(k x) to every score; k <= 0 throws std::invalid_argument.
InvarianceReport monotone_invariance_check(const std::vector<double>& scores, const std::vector<int>& labels,
                                           double k);
InvarianceReport monotone_invariance_check(const std::vector<double>& scores, const std::vector<int>& labels,
                                           const std::function<double(double)>& increasing_map);

struct LimitDemo {
  std::vector<double> side_mae;
  double best_linear_mae = 0;
  std::vector<double> best_weights;
  double fine_linear_mae = 0;  // best on a grid twice as fine
  double refinement_bound = 0; // coarse best may exceed fine best by at most this
  double nonlinear_mae = 0;    // two-layer fuser trained on the same logits
  bool refinement_ok() const { return best_linear_mae - fine_linear_mae <= refinement_bound + 1e-12; }
};

struct FuserConfig {
  int hidden = 8;
  int iterations = 1500;
  double lr = 0.5;
  double momentum = 0.9;
  std::uint64_t seed = 7;
};

/// Grid search of simplex weights (step 1/resolution) for the best linear
/// fused MAE, plus a small nonlinear fuser for comparison. N <= 4 sides.
LimitDemo empirical_limit_demo(const std::vector<Map>& logits, const Map& gt, int resolution = 50,
                               const FuserConfig& fuser = {});

/// Two sides that each get a different half of the positives right, so no
/// weighting of their logits can separate the classes.
std::pair<std::vector<Map>, Map> xor_ensemble(int height, int width);

// ---------------------------------------------------------------------------
// Property suites

struct SuiteResult {
  std::string name;
  int trials = 0;
  int failures = 0;
  double worst = 0.0;  // largest error or slack seen
  double seconds = 0.0;
  std::string detail;
  bool pass() const { return failures == 0; }
};

/// Random ensembles (N in 2..6, simplex weights, logits in [-6, 6], masks up
/// to 32x32); a failure is any pixel outside the bound by more than 1e-12.
SuiteResult theorem1_suite(int trials = 1000, std::uint64_t seed = 1);

/// Random non-negative weights: sigma(sum w O) against sigma(s sum w~ O).
SuiteResult lemma1_suite(int trials = 1000, std::uint64_t seed = 2);

/// Random score/label sets (sizes 10..500, scores on a 0.01 grid so ties are
/// common) under sigma(k x) for k in {0.1, 1, 10} and under x^3; also checks
/// sweep AUC against the rank statistic.
SuiteResult theorem2_suite(int sets = 100, std::uint64_t seed = 3);

/// XOR ensemble: linear best stays at the best side, the nonlinear fuser does better.
SuiteResult limit_suite();

/// ROC curve CSV `fpr,tpr`.
void write_roc_csv(std::ostream& os, const RocResult& roc);

}  // namespace dna
