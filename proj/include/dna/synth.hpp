#pragma once

// Deterministic synthetic saliency scenes and the portable image / manifest
// formats used to store them.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dna/training.hpp"

namespace dna {

enum class Texture { Flat, Gradient, Noise };
std::string_view to_string(Texture t);
Texture parse_texture(std::string_view name);

enum ShapeKind : unsigned { kEllipse = 1u, kPolygon = 2u, kAnnulus = 4u };

struct SceneSpec {
  std::uint64_t seed = 2019;
  int height = 96;
  int width = 96;
  int min_objects = 1;
  int max_objects = 2;
  unsigned shapes = kEllipse | kPolygon | kAnnulus;
  double contrast = 0.5;      // salient-object color offset, in [0, 1]
  Texture texture = Texture::Noise;
  int distractors = 3;
  double min_radius = 0.14;   // salient-object radius range, fraction of min(h, w)
  double max_radius = 0.30;

  void validate() const;  // throws ConfigError
};

/// Scene `index` of the dataset described by `spec`: a 1x3xHxW image with
/// 8-bit quantized values k/255 and a 1x1xHxW binary mask that is exactly the
/// union of the salient shapes. A pure function of (spec, index).
TrainSample generate(const SceneSpec& spec, std::uint64_t index);

std::vector<TrainSample> generate_range(const SceneSpec& spec, std::uint64_t first, std::uint64_t count);

// Images: binary PGM (P5, one channel) and PPM (P6, three channels), 8-bit.

/// Nearest 8-bit level of v clamped to [0, 1], as a value k/255.
double quantize8(double v);

void save_image(const std::filesystem::path& path, const Tensor<double>& image);
/// Loads a P5 or P6 file as a 1xCxHxW tensor with values k/255.
Tensor<double> load_image(const std::filesystem::path& path);

struct ManifestEntry {
  std::filesystem::path first;   // image (or prediction) path
  std::filesystem::path second;  // mask (or ground-truth) path
};

/// One `first<TAB>second` pair per line; blank lines and `#` comments are
/// skipped. Relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

std::vector<TrainSample> load_samples(const std::filesystem::path& manifest);

struct DatasetLayout {
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
};

/// Writes train/test scenes (test scenes continue the index sequence after the
/// training ones), both manifests, and a `spec.ini` provenance record.
DatasetLayout write_dataset(const std::filesystem::path& dir, const SceneSpec& spec, int train_count,
                            int test_count);

}  // namespace dna
