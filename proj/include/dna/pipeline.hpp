#pragma once

// End-to-end runs shared by the command-line tool and the acceptance checks:
// dataset assembly, training one variant, prediction and evaluation.

#include <filesystem>
#include <vector>

#include "dna/config.hpp"
#include "dna/metrics.hpp"

namespace dna {

struct Datasets {
  std::vector<TrainSample> train;
  std::vector<TrainSample> test;
};

/// Synthesizes the [scene] dataset in memory or loads both manifests.
Datasets load_datasets(const RunConfig& config);

/// Fused probability maps of `graph` for every sample, in sample order.
template <typename S>
std::vector<Map> predict_maps(const NetGraph<S>& graph, const std::vector<TrainSample>& samples);

std::vector<Map> masks_of(const std::vector<TrainSample>& samples);

struct VariantRun {
  Variant variant = Variant::Dna;
  MetricsReport report;
  std::int64_t params = 0;
  double seconds = 0.0;  // wall-clock training time
  std::vector<LossRecord> history;
};

/// Builds, initializes (seeded by config.seed), trains on `data.train` and
/// evaluates on `data.test`. With a non-empty `out_dir` the checkpoint and loss
/// log land there as `checkpoint.bin` and `loss.csv`.
VariantRun run_variant(const RunConfig& config, Variant variant, const Datasets& data,
                       const std::filesystem::path& out_dir = {});

}  // namespace dna
