#include "dna/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dna {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

InitConfig RunConfig::desk_init() {
  InitConfig i;
  i.backbone = InitScheme::HeNormal;
  i.other = InitScheme::HeNormal;
  return i;
}

OptimConfig RunConfig::desk_optim() {
  OptimConfig o;
  o.base_lr = 1e-6;
  o.momentum = 0.9;
  o.weight_decay = 5e-4;
  o.power = 0.9;
  o.max_iter = 2000;
  return o;
}

void RunConfig::validate() const {
  net.validate();
  optim.validate();
  scene.validate();
  if (!(init.gaussian_std > 0)) throw ConfigError("init.gaussian_std must be > 0");
  if (train_count < 1 || test_count < 0) throw ConfigError("data: need train_count >= 1 and test_count >= 0");
  if (train_manifest.empty() != test_manifest.empty())
    throw ConfigError("data: set both train_manifest and test_manifest, or neither");
  if (scene.height != net.input_height || scene.width != net.input_width)
    if (synthesize()) throw ConfigError("scene size must match the network input size");
}

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"run", {"variant", "seed", "precision", "output"}},
      {"net",
       {"height", "width", "channels", "side_channels", "side_kernels", "top_channels_1", "top_channels_2",
        "dna_side_channels", "dna_mid_channels", "asym_kernel", "scale", "tiny_divisor"}},
      {"init", {"backbone", "other", "gaussian_std"}},
      {"optim", {"base_lr", "momentum", "weight_decay", "power", "max_iter"}},
      {"data", {"train_manifest", "test_manifest", "train_count", "test_count"}},
      {"scene",
       {"seed", "height", "width", "min_objects", "max_objects", "shapes", "contrast", "texture", "distractors",
        "min_radius", "max_radius"}},
  };
  return keys;
}

void check_keys(const pt::ptree& tree, const std::set<std::string>& allowed_sections) {
  for (const auto& [section, body] : tree) {
    auto it = known_keys().find(section);
    if (it == known_keys().end() || !allowed_sections.count(section))
      throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, value] : body)
      if (!it->second.count(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
  }
}

template <typename T>
T get(const pt::ptree& tree, const std::string& path, T fallback) {
  auto node = tree.get_child_optional(path);
  if (!node) return fallback;
  std::istringstream is(node->data());
  T v{};
  is >> v;
  if (!is || !(is >> std::ws).eof()) throw ConfigError("bad value '" + node->data() + "' for " + path);
  return v;
}

std::string get_string(const pt::ptree& tree, const std::string& path, const std::string& fallback) {
  return tree.get<std::string>(path, fallback);
}

std::array<int, 5> get_five(const pt::ptree& tree, const std::string& path, std::array<int, 5> fallback) {
  auto node = tree.get_child_optional(path);
  if (!node) return fallback;
  std::string text = node->data();
  for (char& c : text)
    if (c == ',') c = ' ';
  std::istringstream is(text);
  std::array<int, 5> v{};
  for (int& x : v)
    if (!(is >> x)) throw ConfigError(path + " needs five integers, got '" + node->data() + "'");
  if (!(is >> std::ws).eof()) throw ConfigError(path + " needs five integers, got '" + node->data() + "'");
  return v;
}

std::string join_five(const std::array<int, 5>& v) {
  std::ostringstream os;
  for (int i = 0; i < 5; ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

InitScheme parse_scheme(const std::string& s) {
  if (s == "he") return InitScheme::HeNormal;
  if (s == "gaussian") return InitScheme::Gaussian;
  throw ConfigError("unknown init scheme '" + s + "' (expected he or gaussian)");
}

std::string scheme_name(InitScheme s) { return s == InitScheme::HeNormal ? "he" : "gaussian"; }

SceneSpec read_scene(const pt::ptree& tree, SceneSpec s) {
  s.seed = get(tree, "scene.seed", s.seed);
  s.height = get(tree, "scene.height", s.height);
  s.width = get(tree, "scene.width", s.width);
  s.min_objects = get(tree, "scene.min_objects", s.min_objects);
  s.max_objects = get(tree, "scene.max_objects", s.max_objects);
  s.shapes = parse_shapes(get_string(tree, "scene.shapes", shapes_to_string(s.shapes)));
  s.contrast = get(tree, "scene.contrast", s.contrast);
  s.texture = parse_texture(get_string(tree, "scene.texture", std::string(to_string(s.texture))));
  s.distractors = get(tree, "scene.distractors", s.distractors);
  s.min_radius = get(tree, "scene.min_radius", s.min_radius);
  s.max_radius = get(tree, "scene.max_radius", s.max_radius);
  return s;
}

void put_scene(pt::ptree& tree, const SceneSpec& s) {
  tree.put("scene.seed", s.seed);
  tree.put("scene.height", s.height);
  tree.put("scene.width", s.width);
  tree.put("scene.min_objects", s.min_objects);
  tree.put("scene.max_objects", s.max_objects);
  tree.put("scene.shapes", shapes_to_string(s.shapes));
  tree.put("scene.contrast", s.contrast);
  tree.put("scene.texture", std::string(to_string(s.texture)));
  tree.put("scene.distractors", s.distractors);
  tree.put("scene.min_radius", s.min_radius);
  tree.put("scene.max_radius", s.max_radius);
}

pt::ptree read_tree(std::istream& is) {
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  return tree;
}

}  // namespace

std::string shapes_to_string(unsigned shapes) {
  std::string out;
  auto add = [&](unsigned bit, const char* name) {
    if (shapes & bit) out += (out.empty() ? "" : ",") + std::string(name);
  };
  add(kEllipse, "ellipse");
  add(kPolygon, "polygon");
  add(kAnnulus, "annulus");
  return out;
}

unsigned parse_shapes(const std::string& text) {
  unsigned shapes = 0;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (item == "ellipse") shapes |= kEllipse;
    else if (item == "polygon") shapes |= kPolygon;
    else if (item == "annulus") shapes |= kAnnulus;
    else throw ConfigError("unknown shape '" + item + "'");
  }
  return shapes;
}

RunConfig parse_run_config(std::istream& is, const fs::path& base_dir) {
  const pt::ptree tree = read_tree(is);
  check_keys(tree, {"run", "net", "init", "optim", "data", "scene"});

  RunConfig c;
  c.variant = parse_variant(get_string(tree, "run.variant", std::string(to_string(c.variant))));
  c.seed = get(tree, "run.seed", c.seed);
  const std::string precision = get_string(tree, "run.precision", "float");
  if (precision == "float") c.precision = Precision::Float;
  else if (precision == "double") c.precision = Precision::Double;
  else throw ConfigError("run.precision must be float or double");
  c.output = get_string(tree, "run.output", c.output.string());

  NetConfig& n = c.net;
  n.input_height = get(tree, "net.height", n.input_height);
  n.input_width = get(tree, "net.width", n.input_width);
  n.input_channels = get(tree, "net.channels", n.input_channels);
  std::array<int, 5> ch{}, k{};
  for (int i = 0; i < 5; ++i) {
    ch[i] = n.sides[i].channels;
    k[i] = n.sides[i].kernel;
  }
  ch = get_five(tree, "net.side_channels", ch);
  k = get_five(tree, "net.side_kernels", k);
  for (int i = 0; i < 5; ++i) n.sides[i] = {k[i], ch[i]};
  n.top_channels_1 = get(tree, "net.top_channels_1", n.top_channels_1);
  n.top_channels_2 = get(tree, "net.top_channels_2", n.top_channels_2);
  n.dna_side_channels = get(tree, "net.dna_side_channels", n.dna_side_channels);
  n.dna_mid_channels = get(tree, "net.dna_mid_channels", n.dna_mid_channels);
  n.asym_kernel = get(tree, "net.asym_kernel", n.asym_kernel);
  const std::string scale = get_string(tree, "net.scale", n.scale == BackboneScale::Tiny ? "tiny" : "full");
  if (scale == "tiny") n.scale = BackboneScale::Tiny;
  else if (scale == "full") n.scale = BackboneScale::Full;
  else throw ConfigError("net.scale must be tiny or full");
  n.tiny_divisor = get(tree, "net.tiny_divisor", n.tiny_divisor);

  c.init.backbone = parse_scheme(get_string(tree, "init.backbone", scheme_name(c.init.backbone)));
  c.init.other = parse_scheme(get_string(tree, "init.other", scheme_name(c.init.other)));
  c.init.gaussian_std = get(tree, "init.gaussian_std", c.init.gaussian_std);

  c.optim.base_lr = get(tree, "optim.base_lr", c.optim.base_lr);
  c.optim.momentum = get(tree, "optim.momentum", c.optim.momentum);
  c.optim.weight_decay = get(tree, "optim.weight_decay", c.optim.weight_decay);
  c.optim.power = get(tree, "optim.power", c.optim.power);
  c.optim.max_iter = get(tree, "optim.max_iter", c.optim.max_iter);

  auto path_key = [&](const std::string& key) {
    const std::string v = get_string(tree, key, "");
    if (v.empty()) return fs::path{};
    const fs::path p(v);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  c.train_manifest = path_key("data.train_manifest");
  c.test_manifest = path_key("data.test_manifest");
  c.train_count = get(tree, "data.train_count", c.train_count);
  c.test_count = get(tree, "data.test_count", c.test_count);

  c.scene = read_scene(tree, c.scene);
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  return parse_run_config(in, path.parent_path());
}

void write_run_config(std::ostream& os, const RunConfig& c) {
  pt::ptree tree;
  tree.put("run.variant", std::string(to_string(c.variant)));
  tree.put("run.seed", c.seed);
  tree.put("run.precision", c.precision == Precision::Float ? "float" : "double");
  tree.put("run.output", c.output.string());
  const NetConfig& n = c.net;
  tree.put("net.height", n.input_height);
  tree.put("net.width", n.input_width);
  tree.put("net.channels", n.input_channels);
  std::array<int, 5> ch{}, k{};
  for (int i = 0; i < 5; ++i) {
    ch[i] = n.sides[i].channels;
    k[i] = n.sides[i].kernel;
  }
  tree.put("net.side_channels", join_five(ch));
  tree.put("net.side_kernels", join_five(k));
  tree.put("net.top_channels_1", n.top_channels_1);
  tree.put("net.top_channels_2", n.top_channels_2);
  tree.put("net.dna_side_channels", n.dna_side_channels);
  tree.put("net.dna_mid_channels", n.dna_mid_channels);
  tree.put("net.asym_kernel", n.asym_kernel);
  tree.put("net.scale", n.scale == BackboneScale::Tiny ? "tiny" : "full");
  tree.put("net.tiny_divisor", n.tiny_divisor);
  tree.put("init.backbone", scheme_name(c.init.backbone));
  tree.put("init.other", scheme_name(c.init.other));
  tree.put("init.gaussian_std", c.init.gaussian_std);
  tree.put("optim.base_lr", c.optim.base_lr);
  tree.put("optim.momentum", c.optim.momentum);
  tree.put("optim.weight_decay", c.optim.weight_decay);
  tree.put("optim.power", c.optim.power);
  tree.put("optim.max_iter", c.optim.max_iter);
  tree.put("data.train_manifest", c.train_manifest.string());
  tree.put("data.test_manifest", c.test_manifest.string());
  tree.put("data.train_count", c.train_count);
  tree.put("data.test_count", c.test_count);
  put_scene(tree, c.scene);
  pt::write_ini(os, tree);
}

void write_scene_spec(std::ostream& os, const SceneSpec& spec, int train_count, int test_count) {
  pt::ptree tree;
  tree.put("data.train_count", train_count);
  tree.put("data.test_count", test_count);
  put_scene(tree, spec);
  pt::write_ini(os, tree);
}

void save_scene_spec(const fs::path& path, const SceneSpec& spec, int train_count, int test_count) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  write_scene_spec(os, spec, train_count, test_count);
}

SceneSpec load_scene_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read scene spec " + path.string());
  const pt::ptree tree = read_tree(in);
  check_keys(tree, {"data", "scene"});
  SceneSpec s = read_scene(tree, SceneSpec{});
  s.validate();
  return s;
}

}  // namespace dna
