#include "dna/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dna/config.hpp"
#include "dna/rng.hpp"

namespace dna {

namespace fs = std::filesystem;

std::string_view to_string(Texture t) {
  switch (t) {
    case Texture::Flat: return "flat";
    case Texture::Gradient: return "gradient";
    case Texture::Noise: return "noise";
  }
  return "?";
}

Texture parse_texture(std::string_view name) {
  for (Texture t : {Texture::Flat, Texture::Gradient, Texture::Noise})
    if (to_string(t) == name) return t;
  throw ConfigError("unknown texture '" + std::string(name) + "'");
}

void SceneSpec::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("scene spec: " + m); };
  if (height < 64 || width < 64) fail("scenes must be at least 64x64");
  if (min_objects < 1 || max_objects < min_objects) fail("object count range must satisfy 1 <= min <= max");
  if ((shapes & (kEllipse | kPolygon | kAnnulus)) == 0) fail("empty shape set");
  if (!(contrast >= 0 && contrast <= 1)) fail("contrast must lie in [0, 1]");
  if (distractors < 0) fail("distractor count must be >= 0");
  if (!(min_radius > 0 && min_radius <= max_radius)) fail("radius range must satisfy 0 < min <= max");
  if (max_radius > 0.5) fail("object radius larger than the canvas allows");
}

namespace {

using Rgb = std::array<double, 3>;

// Smooth value noise in about [-1, 1]: bilinear interpolation of a coarse random grid.
class ValueNoise {
 public:
  ValueNoise(CounterRng& rng, int h, int w, int cell) : cell_(cell), gw_(w / cell + 2) {
    const int gh = h / cell + 2;
    grid_.resize(std::size_t(gh) * gw_);
    for (double& v : grid_) v = rng.uniform(-1.0, 1.0);
  }
  double operator()(double y, double x) const {
    const double gy = y / cell_, gx = x / cell_;
    const int iy = int(gy), ix = int(gx);
    const double fy = gy - iy, fx = gx - ix;
    auto at = [&](int r, int c) { return grid_[std::size_t(r) * gw_ + c]; };
    return (1 - fy) * ((1 - fx) * at(iy, ix) + fx * at(iy, ix + 1)) +
           fy * ((1 - fx) * at(iy + 1, ix) + fx * at(iy + 1, ix + 1));
  }

 private:
  int cell_;
  int gw_;
  std::vector<double> grid_;
};

struct Region {
  unsigned kind;
  double cy, cx;
  double ra, rb, angle;          // ellipse radii and rotation; annulus uses ra (outer), rb (inner)
  std::vector<double> px, py;    // convex polygon, counter-clockwise

  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    switch (kind) {
      case kEllipse: {
        const double c = std::cos(angle), s = std::sin(angle);
        const double u = c * dx + s * dy, v = -s * dx + c * dy;
        return (u * u) / (ra * ra) + (v * v) / (rb * rb) <= 1.0;
      }
      case kAnnulus: {
        const double r2 = dx * dx + dy * dy;
        return r2 <= ra * ra && r2 >= rb * rb;
      }
      default: {
        const std::size_t n = px.size();
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t j = (i + 1) % n;
          const double cross = (px[j] - px[i]) * (y - py[i]) - (py[j] - py[i]) * (x - px[i]);
          if (cross < 0) return false;
        }
        return true;
      }
    }
  }
};

unsigned pick_shape(CounterRng& rng, unsigned allowed) {
  std::vector<unsigned> kinds;
  for (unsigned k : {unsigned(kEllipse), unsigned(kPolygon), unsigned(kAnnulus)})
    if (allowed & k) kinds.push_back(k);
  return kinds[std::size_t(rng.uniform_int(0, std::int64_t(kinds.size()) - 1))];
}

Region make_region(CounterRng& rng, unsigned kind, double radius, int h, int w) {
  Region r;
  r.kind = kind;
  r.cy = rng.uniform(radius, h - radius);
  r.cx = rng.uniform(radius, w - radius);
  r.ra = radius;
  switch (kind) {
    case kEllipse:
      r.rb = radius * rng.uniform(0.55, 1.0);
      r.angle = rng.uniform(0.0, std::numbers::pi);
      break;
    case kAnnulus:
      r.rb = radius * rng.uniform(0.4, 0.6);
      break;
    default: {
      const int n = int(rng.uniform_int(3, 7));
      std::vector<double> angles(n);
      for (double& a : angles) a = rng.uniform(0.0, 2.0 * std::numbers::pi);
      std::sort(angles.begin(), angles.end());
      for (double a : angles) {
        const double rr = radius * rng.uniform(0.75, 1.0);
        r.px.push_back(r.cx + rr * std::cos(a));
        r.py.push_back(r.cy + rr * std::sin(a));
      }
      // Random angles can leave the polygon degenerate; fall back to a square.
      double area = 0;
      for (int i = 0; i < n; ++i) {
        const int j = (i + 1) % n;
        area += r.px[i] * r.py[j] - r.px[j] * r.py[i];
      }
      if (std::abs(area) < 0.5 * radius * radius) {
        const double s = radius / std::numbers::sqrt2;
        r.px = {r.cx - s, r.cx + s, r.cx + s, r.cx - s};
        r.py = {r.cy - s, r.cy - s, r.cy + s, r.cy + s};
      }
      break;
    }
  }
  return r;
}

// Offset whose largest channel magnitude is `magnitude`, pointing away from the
// nearer [0, 1] bound of `base` in every channel so it never clips.
Rgb color_offset(CounterRng& rng, const Rgb& base, double magnitude) {
  Rgb off{};
  const int lead = int(rng.uniform_int(0, 2));
  for (int c = 0; c < 3; ++c) {
    const double m = c == lead ? 1.0 : rng.uniform(0.3, 1.0);
    off[c] = (base[c] < 0.5 ? 1.0 : -1.0) * m * magnitude;
  }
  return off;
}

constexpr double kObjectOffset = 0.45;      // object offset at contrast 1
constexpr double kDistractorOffset = 0.18;  // distractor offset, relative to the background
constexpr double kNoiseAmplitude = 0.10;
constexpr double kGradientAmplitude = 0.12;

}  // namespace

TrainSample generate(const SceneSpec& spec, std::uint64_t index) {
  spec.validate();
  const int h = spec.height, w = spec.width;
  CounterRng rng(spec.seed, index);

  Rgb bg{};
  for (double& c : bg) c = rng.uniform(0.3, 0.7);
  const double gdir = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const ValueNoise noise(rng, h, w, 12);
  const ValueNoise fine(rng, h, w, 4);
  auto texture = [&](double y, double x) {
    switch (spec.texture) {
      case Texture::Flat: return 0.0;
      case Texture::Gradient:
        return kGradientAmplitude * ((std::cos(gdir) * (x / w - 0.5) + std::sin(gdir) * (y / h - 0.5)) * 2.0);
      case Texture::Noise: return kNoiseAmplitude * (0.7 * noise(y, x) + 0.3 * fine(y, x));
    }
    return 0.0;
  };

  std::vector<Region> distractors;
  std::vector<Rgb> distractor_offsets;
  for (int i = 0; i < spec.distractors; ++i) {
    const double radius = std::min(h, w) * rng.uniform(0.03, 0.08);
    distractors.push_back(make_region(rng, pick_shape(rng, spec.shapes), radius, h, w));
    distractor_offsets.push_back(color_offset(rng, bg, kDistractorOffset));
  }

  const int objects = int(rng.uniform_int(spec.min_objects, spec.max_objects));
  std::vector<Region> salient;
  std::vector<Rgb> colors;
  for (int i = 0; i < objects; ++i) {
    const double radius = std::min(h, w) * rng.uniform(spec.min_radius, spec.max_radius);
    salient.push_back(make_region(rng, pick_shape(rng, spec.shapes), radius, h, w));
    const Rgb off = color_offset(rng, bg, kObjectOffset * spec.contrast);
    colors.push_back({bg[0] + off[0], bg[1] + off[1], bg[2] + off[2]});
  }

  TrainSample s{Tensor<double>({1, 3, h, w}), Tensor<double>({1, 1, h, w})};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double py = y + 0.5, px = x + 0.5;
      const double t = texture(py, px);
      Rgb c{bg[0] + t, bg[1] + t, bg[2] + t};
      for (std::size_t k = 0; k < distractors.size(); ++k)
        if (distractors[k].contains(py, px))
          for (int ch = 0; ch < 3; ++ch) c[ch] = bg[ch] + t + distractor_offsets[k][ch];
      bool fg = false;
      for (std::size_t k = 0; k < salient.size(); ++k)
        if (salient[k].contains(py, px)) {
          fg = true;
          for (int ch = 0; ch < 3; ++ch) c[ch] = colors[k][ch] + 0.25 * t;
        }
      for (int ch = 0; ch < 3; ++ch) s.image(0, ch, y, x) = quantize8(c[ch]);
      s.mask(0, 0, y, x) = fg ? 1.0 : 0.0;
    }
  }
  return s;
}

std::vector<TrainSample> generate_range(const SceneSpec& spec, std::uint64_t first, std::uint64_t count) {
  std::vector<TrainSample> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) out.push_back(generate(spec, first + i));
  return out;
}

// ---------------------------------------------------------------------------
// PGM / PPM

double quantize8(double v) { return std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

void save_image(const fs::path& path, const Tensor<double>& image) {
  const Shape s = image.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) throw ShapeError("save_image: expected 1x1xHxW or 1x3xHxW, got " + s.str());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write image " + path.string());
  os << (s.c == 1 ? "P5" : "P6") << "\n" << s.w << " " << s.h << "\n255\n";
  std::vector<unsigned char> buf(std::size_t(s.plane()) * s.c);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x)
      for (int c = 0; c < s.c; ++c)
        buf[(std::size_t(y) * s.w + x) * s.c + c] =
            static_cast<unsigned char>(std::lround(std::clamp(image(0, c, y, x), 0.0, 1.0) * 255.0));
  os.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
  if (!os) throw DataError("failed writing image " + path.string());
}

namespace {

class HeaderParser {
 public:
  HeaderParser(const std::string& bytes, const fs::path& path) : bytes_(bytes), path_(path) {}

  int integer(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    int v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1 << 20) fail(std::string("implausible ") + what);
      ++pos_;
    }
    if (pos_ == start) fail(std::string("expected ") + what);
    return v;
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
      fail("expected whitespace before raster");
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(path_.string() + ": " + what + " at byte " + std::to_string(pos_), std::int64_t(pos_));
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  fs::path path_;
  std::size_t pos_ = 2;
};

}  // namespace

Tensor<double> load_image(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw DataError(path.string() + ": not a binary PGM/PPM file (bad magic at byte 0)", 0);
  const int channels = bytes[1] == '5' ? 1 : 3;
  HeaderParser p(bytes, path);
  const int w = p.integer("width");
  const int h = p.integer("height");
  const int maxval = p.integer("maxval");
  if (w < 1 || h < 1) p.fail("empty image");
  if (maxval != 255) p.fail("only 8-bit images (maxval 255) are supported");
  const std::size_t start = p.raster_start();
  const std::size_t need = std::size_t(w) * h * channels;
  if (bytes.size() - start < need)
    throw DataError(path.string() + ": truncated raster, " + std::to_string(bytes.size() - start) + " of " +
                        std::to_string(need) + " bytes at byte " + std::to_string(bytes.size()),
                    std::int64_t(bytes.size()));
  Tensor<double> t({1, channels, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        t(0, c, y, x) =
            static_cast<unsigned char>(bytes[start + (std::size_t(y) * w + x) * channels + c]) / 255.0;
  return t;
}

// ---------------------------------------------------------------------------
// Manifests

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab + 1 >= line.size())
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": missing mask path", -1, line_no);
    entries.push_back({resolve(line.substr(0, tab)), resolve(line.substr(tab + 1))});
  }
  return entries;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write manifest " + path.string());
  const fs::path base = path.parent_path();
  os << "# image\tmask\n";
  for (const auto& e : entries)
    os << fs::relative(e.first, base).generic_string() << "\t" << fs::relative(e.second, base).generic_string()
       << "\n";
}

std::vector<TrainSample> load_samples(const fs::path& manifest) {
  std::vector<TrainSample> samples;
  for (const auto& e : read_manifest(manifest)) {
    TrainSample s{load_image(e.first), load_image(e.second)};
    if (s.mask.shape().c != 1) throw DataError(e.second.string() + ": mask must be single-channel");
    if (s.mask.shape().h != s.image.shape().h || s.mask.shape().w != s.image.shape().w)
      throw DataError(e.second.string() + ": mask size differs from image " + e.first.string());
    for (Index i = 0; i < s.mask.size(); ++i) s.mask[i] = s.mask[i] >= 0.5 ? 1.0 : 0.0;
    samples.push_back(std::move(s));
  }
  return samples;
}

DatasetLayout write_dataset(const fs::path& dir, const SceneSpec& spec, int train_count, int test_count) {
  spec.validate();
  if (train_count < 0 || test_count < 0) throw ConfigError("dataset sizes must be >= 0");
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  auto write_split = [&](const std::string& name, std::uint64_t first, int count) {
    std::vector<ManifestEntry> entries;
    for (int i = 0; i < count; ++i) {
      const std::uint64_t index = first + std::uint64_t(i);
      char stem[32];
      std::snprintf(stem, sizeof stem, "%06llu", static_cast<unsigned long long>(index));
      const TrainSample s = generate(spec, index);
      ManifestEntry e{dir / "images" / (std::string(stem) + ".ppm"), dir / "masks" / (std::string(stem) + ".pgm")};
      save_image(e.first, s.image);
      save_image(e.second, s.mask);
      entries.push_back(std::move(e));
    }
    const fs::path manifest = dir / (name + ".txt");
    write_manifest(manifest, entries);
    return manifest;
  };
  DatasetLayout layout;
  layout.train_manifest = write_split("train", 0, train_count);
  layout.test_manifest = write_split("test", std::uint64_t(train_count), test_count);
  save_scene_spec(dir / "spec.ini", spec, train_count, test_count);
  return layout;
}

}  // namespace dna
