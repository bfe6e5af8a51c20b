#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dna/config.hpp"
#include "dna/rng.hpp"
#include "dna/synth.hpp"

using namespace dna;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dna_test_synth_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// 8-connected foreground components by flood fill.
int components(const Tensor<double>& mask) {
  const int h = mask.shape().h, w = mask.shape().w;
  std::vector<char> seen(std::size_t(h) * w, 0);
  int count = 0;
  for (int y0 = 0; y0 < h; ++y0)
    for (int x0 = 0; x0 < w; ++x0) {
      if (mask(0, 0, y0, x0) == 0 || seen[std::size_t(y0) * w + x0]) continue;
      ++count;
      std::vector<std::pair<int, int>> stack{{y0, x0}};
      seen[std::size_t(y0) * w + x0] = 1;
      while (!stack.empty()) {
        const auto [y, x] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
            if (mask(0, 0, ny, nx) == 0 || seen[std::size_t(ny) * w + nx]) continue;
            seen[std::size_t(ny) * w + nx] = 1;
            stack.push_back({ny, nx});
          }
      }
    }
  return count;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST_CASE("generation is a pure function of spec and index") {
  SceneSpec spec;
  const auto a = generate(spec, 17), b = generate(spec, 17), c = generate(spec, 18);
  CHECK(a.image.values() == b.image.values());
  CHECK(a.mask.values() == b.mask.values());
  CHECK(a.image.values() != c.image.values());
  CHECK(a.image.shape() == Shape{1, 3, 96, 96});
  for (Index i = 0; i < a.mask.size(); ++i) CHECK((a.mask[i] == 0.0 || a.mask[i] == 1.0));
  for (Index i = 0; i < a.image.size(); ++i) {
    const double k = a.image[i] * 255.0;
    REQUIRE(k == std::round(k));
  }
}

TEST_CASE("contrast 1 on a flat background is separable by a global threshold") {
  SceneSpec spec;
  spec.contrast = 1.0;
  spec.texture = Texture::Flat;
  spec.distractors = 0;
  for (std::uint64_t idx = 0; idx < 20; ++idx) {
    const auto s = generate(spec, idx);
    // Objects never reach the corners, so pixel (0, 0) is background.
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (int y = 0; y < 96; ++y)
      for (int x = 0; x < 96; ++x) {
        double d = 0;
        for (int c = 0; c < 3; ++c) d = std::max(d, std::abs(s.image(0, c, y, x) - s.image(0, c, 0, 0)));
        const bool pred = d > 0.2, gt = s.mask(0, 0, y, x) == 1.0;
        tp += pred && gt;
        fp += pred && !gt;
        fn += !pred && gt;
      }
    CAPTURE(idx);
    REQUIRE(tp > 0);
    const double p = double(tp) / (tp + fp), r = double(tp) / (tp + fn);
    CHECK((1.3 * p * r) / (0.3 * p + r) == 1.0);
  }
}

TEST_CASE("an object count range of (1, 1) gives one connected component") {
  SceneSpec spec;
  spec.min_objects = spec.max_objects = 1;
  for (unsigned shapes : {unsigned(kEllipse), unsigned(kPolygon), unsigned(kAnnulus)}) {
    spec.shapes = shapes;
    for (std::uint64_t idx = 0; idx < 15; ++idx) {
      CAPTURE(shapes);
      CAPTURE(idx);
      CHECK(components(generate(spec, idx).mask) == 1);
    }
  }
}

TEST_CASE("invalid scene specs are rejected") {
  SceneSpec spec;
  spec.height = 48;
  CHECK_THROWS_AS(generate(spec, 0), ConfigError);
  spec = SceneSpec{};
  spec.max_radius = 0.7;
  CHECK_THROWS_AS(generate(spec, 0), ConfigError);
  spec = SceneSpec{};
  spec.contrast = 1.5;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = SceneSpec{};
  spec.min_objects = 3;
  spec.max_objects = 2;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("8-bit quantization error is at most half a level") {
  CounterRng rng(3);
  for (int i = 0; i < 100000; ++i) {
    const double v = rng.uniform();
    CHECK(std::abs(quantize8(v) - v) <= 1.0 / 510.0 + 1e-15);
  }
  CHECK(quantize8(-0.2) == 0.0);
  CHECK(quantize8(1.7) == 1.0);
}

TEST_CASE("image and mask files round-trip bit-exactly") {
  const fs::path dir = scratch("io");
  const auto s = generate(SceneSpec{}, 4);
  save_image(dir / "a.ppm", s.image);
  save_image(dir / "a.pgm", s.mask);
  CHECK(load_image(dir / "a.ppm").values() == s.image.values());
  CHECK(load_image(dir / "a.pgm").values() == s.mask.values());
  CHECK(load_image(dir / "a.ppm").shape() == s.image.shape());
}

TEST_CASE("corrupt images report a byte offset") {
  const fs::path dir = scratch("corrupt");
  save_image(dir / "ok.pgm", Tensor<double>({1, 1, 4, 4}, 0.5));
  std::string bytes = slurp(dir / "ok.pgm");

  std::ofstream(dir / "magic.pgm", std::ios::binary) << "P9\n4 4\n255\n";
  CHECK_THROWS_WITH_AS(load_image(dir / "magic.pgm"), doctest::Contains("byte 0"), DataError);

  std::ofstream(dir / "short.pgm", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  CHECK_THROWS_WITH_AS(load_image(dir / "short.pgm"), doctest::Contains("byte"), DataError);

  std::ofstream(dir / "width.pgm", std::ios::binary) << "P5\nx 4\n255\n";
  CHECK_THROWS_WITH_AS(load_image(dir / "width.pgm"), doctest::Contains("byte 3"), DataError);

  CHECK_THROWS_AS(load_image(dir / "missing.pgm"), DataError);
}

TEST_CASE("manifests: comments, relative paths and line-numbered errors") {
  const fs::path dir = scratch("manifest");
  fs::create_directories(dir / "img");
  for (int i = 0; i < 3; ++i) {
    const auto s = generate(SceneSpec{}, i);
    save_image(dir / "img" / (std::to_string(i) + ".ppm"), s.image);
    save_image(dir / "img" / (std::to_string(i) + ".pgm"), s.mask);
  }
  {
    std::ofstream os(dir / "list.txt");
    os << "# three scenes\n";
    for (int i = 0; i < 3; ++i) os << "img/" << i << ".ppm\timg/" << i << ".pgm\n";
    os << "\n";
  }
  const auto samples = load_samples(dir / "list.txt");
  REQUIRE(samples.size() == 3);
  CHECK(samples[2].mask.values() == generate(SceneSpec{}, 2).mask.values());

  std::ofstream(dir / "bad.txt") << "# header\nimg/0.ppm\timg/0.pgm\nimg/1.ppm\n";
  CHECK_THROWS_WITH_AS(read_manifest(dir / "bad.txt"), doctest::Contains("line 3"), DataError);

  std::ofstream(dir / "gone.txt") << "img/0.ppm\timg/404.pgm\n";
  CHECK_THROWS_AS(load_samples(dir / "gone.txt"), DataError);
}

TEST_CASE("write_dataset lays out manifests and a provenance record") {
  const fs::path dir = scratch("dataset");
  SceneSpec spec;
  spec.seed = 99;
  const auto layout = write_dataset(dir, spec, 4, 2);
  const auto train = read_manifest(layout.train_manifest);
  const auto test = read_manifest(layout.test_manifest);
  CHECK(train.size() == 4);
  CHECK(test.size() == 2);
  // Test scenes continue the index sequence.
  CHECK(load_image(test[0].second).values() == generate(spec, 4).mask.values());
  const SceneSpec back = load_scene_spec(dir / "spec.ini");
  CHECK(back.seed == 99);
  CHECK(back.shapes == spec.shapes);

  const fs::path again = scratch("dataset2");
  write_dataset(again, spec, 4, 2);
  CHECK(slurp(dir / "images" / "000000.ppm") == slurp(again / "images" / "000000.ppm"));
}
