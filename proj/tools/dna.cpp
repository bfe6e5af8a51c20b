// dna: command-line front end.
//
//   dna synth          --config run.ini --out data/
//   dna train          --config run.ini [--out runs/dna]
//   dna predict        --config run.ini --checkpoint ckpt.bin --manifest test.txt --out preds/
//   dna eval           --manifest preds/predictions.txt --out report.csv [--plot-csv curve.csv]
//   dna verify-theory  [--plot-csv roc.csv]
//   dna flops          [--config run.ini] [--variant DNA]
//   dna ablate         --config run.ini --out ablation/
//
// Exit codes: 0 ok, 2 configuration, 3 data, 4 numeric failure, 5 theory violation.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "dna/config.hpp"
#include "dna/pipeline.hpp"
#include "dna/rng.hpp"
#include "dna/theory.hpp"

namespace fs = std::filesystem;
using namespace dna;

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4, kTheory = 5 };

struct Options {
  fs::path config, out, checkpoint, manifest, plot_csv;
  std::string variant;
  std::vector<std::string> variants;
  int train_count = -1, test_count = -1;
};

RunConfig config_from(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (!o.out.empty()) c.output = o.out;
  if (!o.variant.empty()) c.variant = parse_variant(o.variant);
  if (o.train_count >= 0) c.train_count = o.train_count;
  if (o.test_count >= 0) c.test_count = o.test_count;
  c.validate();
  return c;
}

// Archives the config as given (verbatim when it came from a file).
void archive_config(const Options& o, const RunConfig& c, const fs::path& dir) {
  fs::create_directories(dir);
  if (!o.config.empty()) {
    fs::copy_file(o.config, dir / "config.ini", fs::copy_options::overwrite_existing);
  } else {
    std::ofstream os(dir / "config.ini");
    write_run_config(os, c);
  }
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  return os;
}

int cmd_synth(const Options& o) {
  const RunConfig c = config_from(o);
  const fs::path dir = o.out.empty() ? c.output : o.out;
  const DatasetLayout layout = write_dataset(dir, c.scene, c.train_count, c.test_count);
  std::cout << "wrote " << c.train_count << " training and " << c.test_count << " test scenes\n"
            << "  " << layout.train_manifest.string() << "\n  " << layout.test_manifest.string() << "\n";
  return kOk;
}

int cmd_train(const Options& o) {
  const RunConfig c = config_from(o);
  archive_config(o, c, c.output);
  const Datasets data = load_datasets(c);
  std::cout << "training " << to_string(c.variant) << " for " << c.optim.max_iter << " iterations on "
            << data.train.size() << " scenes\n";
  const VariantRun run = run_variant(c, c.variant, Datasets{data.train, {}}, c.output);
  const auto& last = run.history.back();
  std::cout << std::setprecision(6) << "final loss " << last.loss.total << ", " << run.seconds << " s\n"
            << "  " << (c.output / "checkpoint.bin").string() << "\n  " << (c.output / "loss.csv").string() << "\n";
  return kOk;
}

template <typename S>
int predict_typed(const Options& o, const RunConfig& c) {
  const Variant stored = checkpoint_variant(o.checkpoint);
  if (!o.config.empty() && stored != c.variant)
    throw ConfigError("checkpoint holds variant " + std::string(to_string(stored)) + " but the config asks for " +
                      std::string(to_string(c.variant)));
  auto graph = NetGraph<S>::build(stored, c.net);
  load_checkpoint(o.checkpoint, graph);
  const auto entries = read_manifest(o.manifest);
  const auto samples = load_samples(o.manifest);
  fs::create_directories(o.out);
  std::vector<ManifestEntry> written;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Map map =
        forward(graph, to_network_input<S>(samples[i].image), Mode::Test).fused_prob.template cast<double>();
    const fs::path path = o.out / (entries[i].first.stem().string() + ".pgm");
    save_image(path, map);
    written.push_back({path, entries[i].second});
  }
  write_manifest(o.out / "predictions.txt", written);
  std::cout << "wrote " << written.size() << " saliency maps and " << (o.out / "predictions.txt").string() << "\n";
  return kOk;
}

int cmd_predict(const Options& o) {
  const RunConfig c = config_from(o);
  return c.precision == Precision::Float ? predict_typed<float>(o, c) : predict_typed<double>(o, c);
}

int cmd_eval(const Options& o) {
  std::vector<Map> preds, gts;
  for (const auto& e : read_manifest(o.manifest)) {
    preds.push_back(load_image(e.first));
    gts.push_back(load_image(e.second));
    if (preds.back().shape().c != 1 || gts.back().shape().c != 1)
      throw DataError("eval expects single-channel maps: " + e.first.string());
    for (Index i = 0; i < gts.back().size(); ++i) gts.back()[i] = gts.back()[i] >= 0.5 ? 1.0 : 0.0;
  }
  const MetricsReport r = evaluate(preds, gts);
  if (!o.out.empty()) {
    auto os = open_out(o.out);
    write_report_csv(os, r, preds.size());
  }
  write_report_csv(std::cout, r, preds.size());
  if (!o.plot_csv.empty()) {
    auto os = open_out(o.plot_csv);
    write_curve_csv(os, r.curve);
  }
  return kOk;
}

int cmd_verify_theory(const Options& o) {
  const std::vector<SuiteResult> suites{theorem1_suite(), lemma1_suite(), theorem2_suite(), limit_suite()};
  bool ok = true;
  for (const auto& s : suites) {
    std::cout << (s.pass() ? "PASS " : "FAIL ") << std::left << std::setw(30) << s.name << std::right << " trials "
              << std::setw(5) << s.trials << "  failures " << s.failures << "  worst " << std::setprecision(3)
              << s.worst << "  " << std::fixed << std::setprecision(2) << s.seconds << " s" << std::defaultfloat;
    if (!s.detail.empty()) std::cout << "  (" << s.detail << ")";
    std::cout << "\n";
    ok = ok && s.pass();
  }
  if (!o.plot_csv.empty()) {
    // ROC of one sample score set before and after a steep sigmoid: the two curves coincide.
    std::vector<double> scores;
    std::vector<int> labels;
    CounterRng rng(11, 0);
    for (int i = 0; i < 200; ++i) {
      labels.push_back(int(rng.uniform_int(0, 1)));
      scores.push_back(double(rng.uniform_int(-300, 300)) / 100.0 + (labels.back() ? 0.8 : 0.0));
    }
    auto os = open_out(o.plot_csv);
    os << "curve,fpr,tpr\n" << std::setprecision(10);
    for (double k : {0.0, 10.0}) {
      std::vector<double> mapped = scores;
      if (k > 0)
        for (double& s : mapped) s = sigmoid(k * s);
      for (const auto& p : roc_auc(mapped, labels).curve)
        os << (k > 0 ? "sigmoid10" : "raw") << "," << p.fpr << "," << p.tpr << "\n";
    }
  }
  std::cout << (ok ? "all suites passed\n" : "theory violation\n");
  return ok ? kOk : kTheory;
}

int cmd_flops(const Options& o) {
  const RunConfig c = config_from(o);
  const auto graph = NetGraph<float>::build(c.variant, c.net);
  write_summary(std::cout, graph);
  const FlopReport rep = count_flops(graph, graph.input_shape());
  std::cout << std::fixed << std::setprecision(2);
  if (rep.asymmetric > 0)
    std::cout << "\nasymmetric head: " << rep.asymmetric << " multiply-adds, " << rep.standard_equivalent
              << " with square kernels, ratio " << double(rep.standard_equivalent) / double(rep.asymmetric) << "\n";

  const int n = c.net.asym_kernel;
  const int mid = c.net.dna_mid_channels;
  const AsymmetricFlops equal = asymmetric_head_flops(c.net.input_height, c.net.input_width, mid, mid, n, 1);
  std::cout << "\n" << n << "x" << n << " vs 1x" << n << "+" << n << "x1 at " << mid << " in/out channels: "
            << equal.standard << " vs " << equal.asymmetric << " multiply-adds, ratio " << equal.ratio() << "\n";

  // Head cost at a 300x300 input, first with this config's widths and then with
  // 6 sides x 25 channels and 64 intermediate channels, which matches the
  // published 13.8G / 60.4G figures.
  const int hybrid = 6 * c.net.dna_side_channels;
  const AsymmetricFlops here = asymmetric_head_flops(300, 300, hybrid, mid, n);
  const AsymmetricFlops published = asymmetric_head_flops(300, 300, 150, 64, n);
  std::cout << "head at 300x300, hybrid " << hybrid << " / mid " << mid << ": " << here.asymmetric / 1e9
            << "G asymmetric vs " << here.standard / 1e9 << "G square\n"
            << "head at 300x300, hybrid 150 / mid 64:  " << published.asymmetric / 1e9 << "G asymmetric vs "
            << published.standard / 1e9 << "G square (published: 13.8G vs 60.4G)\n";
  return kOk;
}

int cmd_ablate(const Options& o) {
  const RunConfig c = config_from(o);
  archive_config(o, c, c.output);
  std::vector<Variant> variants{Variant::Unet, Variant::EncDec, Variant::EncDecK3, Variant::EncDecLin,
                                Variant::DnaNoDs, Variant::Dna};
  if (!o.variants.empty()) {
    variants.clear();
    for (const auto& v : o.variants) variants.push_back(parse_variant(v));
  }
  const Datasets data = load_datasets(c);
  auto os = open_out(c.output / "ablation.csv");
  os << "variant,max_fbeta,mae,wfbeta,params,seconds\n";
  for (Variant v : variants) {
    std::cout << "training " << to_string(v) << "..." << std::flush;
    const VariantRun run = run_variant(c, v, data, c.output / std::string(to_string(v)));
    std::ostringstream row;
    row << to_string(v) << "," << std::setprecision(6) << run.report.max_fbeta << "," << run.report.mae << ","
        << run.report.weighted_fbeta << "," << run.params << "," << std::fixed << std::setprecision(1)
        << run.seconds;
    os << row.str() << "\n" << std::flush;
    std::cout << " " << row.str() << "\n";
  }
  std::cout << "wrote " << (c.output / "ablation.csv").string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deeply-supervised nonlinear aggregation for salient object detection"};
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  synth->add_option("--config", o.config, "Run config (uses its [scene] and [data] counts)");
  synth->add_option("--out", o.out, "Dataset directory")->required();
  synth->add_option("--train", o.train_count, "Training scenes");
  synth->add_option("--test", o.test_count, "Test scenes");

  auto* train = app.add_subcommand("train", "Train one variant");
  train->add_option("--config", o.config, "Run config")->required();
  train->add_option("--out", o.out, "Output directory (overrides [run] output)");
  train->add_option("--variant", o.variant, "Variant (overrides [run] variant)");

  auto* predict = app.add_subcommand("predict", "Write 8-bit saliency maps");
  predict->add_option("--config", o.config, "Run config (network settings)");
  predict->add_option("--checkpoint", o.checkpoint, "Checkpoint")->required();
  predict->add_option("--manifest", o.manifest, "Image/mask manifest")->required();
  predict->add_option("--out", o.out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Score saliency maps");
  eval->add_option("--manifest", o.manifest, "Prediction/ground-truth manifest")->required();
  eval->add_option("--out", o.out, "Report CSV");
  eval->add_option("--plot-csv", o.plot_csv, "Per-threshold precision/recall CSV");

  auto* theory = app.add_subcommand("verify-theory", "Run the aggregation property suites");
  theory->add_option("--plot-csv", o.plot_csv, "ROC curves before/after a monotone map");

  auto* flops = app.add_subcommand("flops", "Per-layer multiply-add table");
  flops->add_option("--config", o.config, "Run config");
  flops->add_option("--variant", o.variant, "Variant");

  auto* ablate = app.add_subcommand("ablate", "Train and compare the ablation variants");
  ablate->add_option("--config", o.config, "Run config")->required();
  ablate->add_option("--out", o.out, "Output directory (overrides [run] output)");
  ablate->add_option("--variants", o.variants, "Subset of variants")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*train) return cmd_train(o);
    if (*predict) return cmd_predict(o);
    if (*eval) return cmd_eval(o);
    if (*theory) return cmd_verify_theory(o);
    if (*flops) return cmd_flops(o);
    if (*ablate) return cmd_ablate(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  }
  return kOk;
}
