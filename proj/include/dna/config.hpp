#pragma once

// INI run configuration. Sections and keys:
//
//   [run]    variant, seed, precision (float|double), output
//   [net]    height, width, channels, side_channels (5 ints), side_kernels (5 ints),
//            top_channels_1, top_channels_2, dna_side_channels, dna_mid_channels,
//            asym_kernel, scale (tiny|full), tiny_divisor
//   [init]   backbone (he|gaussian), other (he|gaussian), gaussian_std
//   [optim]  base_lr, momentum, weight_decay, power, max_iter
//   [data]   train_manifest, test_manifest   (relative to the config file; when
//            both are empty the [scene] section is synthesized in memory)
//            train_count, test_count
//   [scene]  seed, height, width, min_objects, max_objects, shapes, contrast,
//            texture, distractors, min_radius, max_radius
//
// Every key is optional; unknown sections or keys are a ConfigError.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "dna/model.hpp"
#include "dna/synth.hpp"
#include "dna/training.hpp"

namespace dna {

enum class Precision { Float, Double };

struct RunConfig {
  Variant variant = Variant::Dna;
  std::uint64_t seed = 1;
  Precision precision = Precision::Float;
  std::filesystem::path output = "run";

  NetConfig net;
  InitConfig init = desk_init();
  OptimConfig optim = desk_optim();

  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
  int train_count = 500;
  int test_count = 100;
  SceneSpec scene;

  bool synthesize() const { return train_manifest.empty() && test_manifest.empty(); }
  void validate() const;

  /// Settings for the desk-scale synthetic task: He-normal weights everywhere
  /// (heads started at N(0, 0.01^2) stay stuck at the all-0.5 map when the
  /// backbone is trained from scratch), and base lr 1e-6.
  static InitConfig desk_init();
  static OptimConfig desk_optim();
};

RunConfig parse_run_config(std::istream& is, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
void write_run_config(std::ostream& os, const RunConfig& config);

std::string shapes_to_string(unsigned shapes);
unsigned parse_shapes(const std::string& text);

void write_scene_spec(std::ostream& os, const SceneSpec& spec, int train_count, int test_count);
void save_scene_spec(const std::filesystem::path& path, const SceneSpec& spec, int train_count, int test_count);
SceneSpec load_scene_spec(const std::filesystem::path& path);

}  // namespace dna
