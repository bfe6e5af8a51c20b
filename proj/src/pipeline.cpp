#include "dna/pipeline.hpp"

#include <chrono>

namespace dna {

Datasets load_datasets(const RunConfig& config) {
  Datasets d;
  if (config.synthesize()) {
    d.train = generate_range(config.scene, 0, std::uint64_t(config.train_count));
    d.test = generate_range(config.scene, std::uint64_t(config.train_count), std::uint64_t(config.test_count));
  } else {
    d.train = load_samples(config.train_manifest);
    d.test = load_samples(config.test_manifest);
  }
  if (d.train.empty()) throw DataError("training set is empty");
  return d;
}

template <typename S>
std::vector<Map> predict_maps(const NetGraph<S>& graph, const std::vector<TrainSample>& samples) {
  std::vector<Map> maps;
  maps.reserve(samples.size());
  for (const auto& s : samples) maps.push_back(forward(graph, to_network_input<S>(s.image), Mode::Test).fused_prob.template cast<double>());
  return maps;
}

std::vector<Map> masks_of(const std::vector<TrainSample>& samples) {
  std::vector<Map> masks;
  masks.reserve(samples.size());
  for (const auto& s : samples) masks.push_back(s.mask);
  return masks;
}

namespace {

template <typename S>
VariantRun run_typed(const RunConfig& config, Variant variant, const Datasets& data, const std::filesystem::path& out) {
  auto graph = NetGraph<S>::build(variant, config.net);
  init_params(graph, config.seed, config.init);
  TrainConfig tc;
  tc.optim = config.optim;
  tc.seed = config.seed;
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    tc.checkpoint = out / "checkpoint.bin";
    tc.loss_csv = out / "loss.csv";
  }
  VariantRun run;
  run.variant = variant;
  run.params = graph.trainable_parameter_count();
  const auto t0 = std::chrono::steady_clock::now();
  run.history = train(graph, data.train, tc).history;
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!data.test.empty()) run.report = evaluate(predict_maps(graph, data.test), masks_of(data.test));
  return run;
}

}  // namespace

VariantRun run_variant(const RunConfig& config, Variant variant, const Datasets& data,
                       const std::filesystem::path& out_dir) {
  return config.precision == Precision::Float ? run_typed<float>(config, variant, data, out_dir)
                                              : run_typed<double>(config, variant, data, out_dir);
}

template std::vector<Map> predict_maps<float>(const NetGraph<float>&, const std::vector<TrainSample>&);
template std::vector<Map> predict_maps<double>(const NetGraph<double>&, const std::vector<TrainSample>&);

}  // namespace dna
