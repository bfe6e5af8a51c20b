#include "dna/model.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <ostream>
#include <sstream>

#include "dna/rng.hpp"

namespace dna {

namespace {

struct VariantName {
  Variant variant;
  std::string_view name;
};

constexpr VariantName kVariantNames[] = {
    {Variant::Dna, "DNA"},           {Variant::EncDec, "ENC_DEC"},
    {Variant::EncDecLin, "ENC_DEC_LIN"}, {Variant::EncDecK3, "ENC_DEC_K3"},
    {Variant::DnaNoDs, "DNA_NO_DS"}, {Variant::HedStyle, "HED_STYLE"},
    {Variant::Unet, "UNET"},
};

constexpr int kConvsPerBlock[5] = {2, 2, 3, 3, 3};
constexpr int kVggWidths[5] = {64, 128, 256, 512, 512};

template <typename S>
void accumulate(Tensor<S>& dst, Tensor<S>&& src) {
  if (dst.empty())
    dst = std::move(src);
  else
    dst.values() += src.values();
}

}  // namespace

std::string_view to_string(Variant v) {
  for (const auto& e : kVariantNames)
    if (e.variant == v) return e.name;
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (const auto& e : kVariantNames)
    if (e.name == name) return e.variant;
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

std::vector<Variant> all_variants() {
  std::vector<Variant> v;
  for (const auto& e : kVariantNames) v.push_back(e.variant);
  return v;
}

bool has_side_outputs(Variant v) {
  return v == Variant::Dna || v == Variant::EncDecLin || v == Variant::HedStyle;
}

std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Input: return "input";
    case NodeKind::Conv: return "conv";
    case NodeKind::Relu: return "relu";
    case NodeKind::MaxPool: return "maxpool";
    case NodeKind::Upsample: return "upsample";
    case NodeKind::Concat: return "concat";
    case NodeKind::Crop: return "crop";
  }
  return "?";
}

void NetConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("net config: " + m); };
  if (input_channels < 1) fail("input_channels must be >= 1");
  for (std::size_t i = 0; i < sides.size(); ++i) {
    if (sides[i].kernel < 1 || sides[i].kernel % 2 == 0)
      fail("side " + std::to_string(i + 1) + " kernel must be odd and >= 1");
    if (sides[i].channels < 1) fail("side " + std::to_string(i + 1) + " channels must be >= 1");
  }
  if (top_channels_1 < 1 || top_channels_2 < 1) fail("top block channels must be >= 1");
  if (dna_side_channels < 1 || dna_mid_channels < 1) fail("DNA channels must be >= 1");
  if (asym_kernel < 1 || asym_kernel % 2 == 0) fail("asymmetric kernel length must be odd");
  if (tiny_divisor < 1) fail("tiny_divisor must be >= 1");
}

int NetConfig::width(int full) const {
  if (scale == BackboneScale::Full) return full;
  return std::max(1, full / tiny_divisor);
}

std::array<int, 5> NetConfig::backbone_widths() const {
  std::array<int, 5> w{};
  for (int i = 0; i < 5; ++i) w[i] = width(kVggWidths[i]);
  return w;
}

// ---------------------------------------------------------------------------
// Shape inference

namespace {

Shape node_shape(const Node& node, const std::vector<Shape>& shapes) {
  auto in = [&](int k) { return shapes[node.inputs[k]]; };
  switch (node.kind) {
    case NodeKind::Input: return shapes.front();
    case NodeKind::Conv: return node.conv.output_shape(in(0));
    case NodeKind::Relu: return in(0);
    case NodeKind::MaxPool: {
      const Shape s = in(0);
      return {s.n, s.c, (s.h + 1) / 2, (s.w + 1) / 2};
    }
    case NodeKind::Upsample: {
      const Shape s = in(0);
      return {s.n, s.c, s.h * node.factor, s.w * node.factor};
    }
    case NodeKind::Concat: {
      Shape s = in(0);
      s.c = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const Shape t = in(int(k));
        if (t.n != s.n || t.h != s.h || t.w != s.w)
          throw ShapeError(node.name + ": concat spatial mismatch " + t.str());
        s.c += t.c;
      }
      return s;
    }
    case NodeKind::Crop: {
      const Shape s = in(0), ref = in(1);
      if (s.h < ref.h || s.w < ref.w)
        throw ShapeError(node.name + ": cannot crop " + s.str() + " to " + ref.str());
      return {s.n, s.c, ref.h, ref.w};
    }
  }
  return {};
}

}  // namespace

template <typename S>
std::vector<Shape> NetGraph<S>::infer_shapes(const Shape& input) const {
  std::vector<Shape> shapes;
  shapes.reserve(nodes_.size());
  shapes.push_back(input);
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    shapes.push_back(Shape{});
    shapes.back() = node_shape(nodes_[i], shapes);
  }
  return shapes;
}

// ---------------------------------------------------------------------------
// Construction

template <typename S>
int NetGraph<S>::add_node(Node node) {
  const int id = int(nodes_.size());
  nodes_.push_back(std::move(node));
  if (id == 0) {
    shapes_.push_back({1, config_.input_channels, config_.input_height, config_.input_width});
  } else {
    shapes_.push_back(Shape{});
    shapes_.back() = node_shape(nodes_.back(), shapes_);
    const Node& n = nodes_.back();
    if (n.kind == NodeKind::Crop && shapes_[n.inputs[0]] != shapes_.back())
      std::clog << "dna: " << n.name << " center-crops " << shapes_[n.inputs[0]] << " to "
                << shapes_.back() << "\n";
  }
  return id;
}

template <typename S>
int NetGraph<S>::add_conv(const std::string& name, int input, const ConvSpec& spec, const std::string& group) {
  Node node{name, NodeKind::Conv, {input}, group, spec};
  node.weight = int(params_.size());
  params_.push_back({name + ".weight", Tensor<S>(spec.weight_shape()), true, false, group});
  if (spec.has_bias) {
    node.bias = int(params_.size());
    params_.push_back({name + ".bias", Tensor<S>({spec.out_channels, 1, 1, 1}), true, true, group});
  }
  return add_node(std::move(node));
}

template <typename S>
int NetGraph<S>::add_conv_relu(const std::string& name, int input, const ConvSpec& spec, const std::string& group) {
  const int conv = add_conv(name, input, spec, group);
  return add_simple(name + ".relu", NodeKind::Relu, {conv}, group);
}

template <typename S>
int NetGraph<S>::add_simple(const std::string& name, NodeKind kind, std::vector<int> inputs,
                            const std::string& group, int factor) {
  Node node;
  node.name = name;
  node.kind = kind;
  node.inputs = std::move(inputs);
  node.group = group;
  node.factor = factor;
  return add_node(std::move(node));
}

template <typename S>
int NetGraph<S>::add_upsample_to_input(const std::string& name, int input, int factor, const std::string& group) {
  if (factor == 1) return input;
  const int up = add_simple(name, NodeKind::Upsample, {input}, group, factor);
  return add_simple(name + ".crop", NodeKind::Crop, {up, input_node()}, group);
}

template <typename S>
NetGraph<S> NetGraph<S>::build(Variant variant, const NetConfig& cfg) {
  cfg.validate();
  if (cfg.input_height < 32 || cfg.input_width < 32)
    throw ShapeError("input " + std::to_string(cfg.input_height) + "x" + std::to_string(cfg.input_width) +
                     " is smaller than 32 and cannot sustain five poolings");

  NetGraph g;
  g.variant_ = variant;
  g.config_ = cfg;
  auto channels = [&g](int node) { return g.shapes_[node].c; };

  g.add_simple("input", NodeKind::Input, {}, "input");

  // Encoder: VGG16 conv blocks 1-5, then the top block replacing the FC layers.
  const auto widths = cfg.backbone_widths();
  int x = g.input_node();
  for (int b = 0; b < 5; ++b) {
    if (b > 0) x = g.add_simple("pool" + std::to_string(b), NodeKind::MaxPool, {x}, "backbone");
    for (int k = 0; k < kConvsPerBlock[b]; ++k) {
      const std::string name = "conv" + std::to_string(b + 1) + "_" + std::to_string(k + 1);
      x = g.add_conv_relu(name, x, ConvSpec::same(channels(x), widths[b], 3, 3), "backbone");
    }
    g.encoder_[b] = x;
  }
  x = g.add_simple("pool5", NodeKind::MaxPool, {x}, "backbone");
  x = g.add_conv_relu("conv6_1", x, ConvSpec::same(channels(x), cfg.width(cfg.top_channels_1), 3, 3), "top");
  x = g.add_conv_relu("conv6_2", x, ConvSpec::same(channels(x), cfg.width(cfg.top_channels_2), 7, 7), "top");
  g.encoder_[5] = x;

  // Decoder: S~i = phi(Concat(phi1(Si), phi2(S~i+1))), S~6 = S6.
  g.decoder_ = g.encoder_;
  if (variant != Variant::HedStyle) {
    for (int i = 4; i >= 0; --i) {
      const std::string side = "dec" + std::to_string(i + 1);
      int c = cfg.width(cfg.sides[i].channels);
      int k = variant == Variant::EncDecK3 ? 3 : cfg.sides[i].kernel;
      int lateral = g.encoder_[i];
      if (variant == Variant::Unet) {
        c = widths[i];
        k = 3;
      } else {
        lateral = g.add_conv(side + ".lateral", lateral, ConvSpec::same(channels(lateral), c, 1, 1), "decoder");
      }
      int top = g.add_conv(side + ".top", g.decoder_[i + 1], ConvSpec::same(channels(g.decoder_[i + 1]), c, 1, 1),
                           "decoder");
      top = g.add_simple(side + ".up", NodeKind::Upsample, {top}, "decoder", 2);
      top = g.add_simple(side + ".up.crop", NodeKind::Crop, {top, lateral}, "decoder");
      const int cat = g.add_simple(side + ".concat", NodeKind::Concat, {lateral, top}, "decoder");
      const int h = g.add_conv_relu(side + ".conv1", cat, ConvSpec::same(channels(cat), c, k, k), "decoder");
      g.decoder_[i] = g.add_conv_relu(side + ".conv2", h, ConvSpec::same(c, c, k, k), "decoder");
    }
  }

  switch (variant) {
    case Variant::EncDec:
    case Variant::EncDecK3:
    case Variant::Unet:
      g.fused_ = g.add_conv("fuse", g.decoder_[0], ConvSpec::same(channels(g.decoder_[0]), 1, 1, 1), "head");
      break;

    case Variant::EncDecLin:
    case Variant::HedStyle: {
      const auto& sides = variant == Variant::EncDecLin ? g.decoder_ : g.encoder_;
      for (int i = 0; i < 6; ++i) {
        const std::string side = "side" + std::to_string(i + 1);
        int p = g.add_conv(side + ".pred", sides[i], ConvSpec::same(channels(sides[i]), 1, 1, 1), "head");
        p = g.add_upsample_to_input(side + ".up", p, 1 << i, "head");
        g.side_logits_.push_back(p);
      }
      const int cat = g.add_simple("fuse.concat", NodeKind::Concat, g.side_logits_, "head");
      g.fused_ = g.add_conv("fuse", cat, ConvSpec::same(6, 1, 1, 1), "head");
      break;
    }

    case Variant::Dna:
    case Variant::DnaNoDs: {
      const int side_c = cfg.width(cfg.dna_side_channels);
      const int mid_c = cfg.width(cfg.dna_mid_channels);
      const int n = cfg.asym_kernel;
      std::vector<int> features;
      for (int i = 0; i < 6; ++i) {
        const std::string side = "dna.side" + std::to_string(i + 1);
        const int src = g.decoder_[i];
        int f = g.add_conv_relu(side + ".conv", src, ConvSpec::same(channels(src), side_c, 3, 3), "dna.side");
        f = g.add_upsample_to_input(side + ".up", f, 1 << i, "dna.side");
        features.push_back(f);
        if (variant == Variant::Dna)
          g.side_logits_.push_back(g.add_conv(side + ".pred", f, ConvSpec::same(side_c, 1, 1, 1), "dna.side"));
      }
      int h = g.add_simple("dna.hybrid", NodeKind::Concat, features, "dna.asym");
      for (int grp = 1; grp <= 2; ++grp) {
        const std::string name = "dna.asym" + std::to_string(grp);
        h = g.add_conv_relu(name + ".row", h, ConvSpec::same(channels(h), mid_c, 1, n), "dna.asym");
        h = g.add_conv_relu(name + ".col", h, ConvSpec::same(mid_c, mid_c, n, 1), "dna.asym");
      }
      g.fused_ = g.add_conv("dna.fuse", h, ConvSpec::same(mid_c, 1, 1, 1), "dna.fuse");
      break;
    }
  }
  return g;
}

template <typename S>
const Parameter<S>& NetGraph<S>::param(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw ConfigError("no parameter named '" + std::string(name) + "'");
}

template <typename S>
Parameter<S>& NetGraph<S>::param(std::string_view name) {
  return const_cast<Parameter<S>&>(std::as_const(*this).param(name));
}

template <typename S>
int NetGraph<S>::node_index(std::string_view name) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].name == name) return int(i);
  return -1;
}

template <typename S>
std::int64_t NetGraph<S>::trainable_parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_)
    if (p.trainable) n += p.value.size();
  return n;
}

template <typename S>
template <typename To>
NetGraph<To> NetGraph<S>::cast() const {
  NetGraph<To> g;
  g.variant_ = variant_;
  g.config_ = config_;
  g.nodes_ = nodes_;
  g.shapes_ = shapes_;
  g.side_logits_ = side_logits_;
  g.fused_ = fused_;
  g.encoder_ = encoder_;
  g.decoder_ = decoder_;
  for (const auto& p : params_)
    g.params_.push_back({p.name, p.value.template cast<To>(), p.trainable, p.is_bias, p.group});
  return g;
}

// ---------------------------------------------------------------------------
// Initialization

template <typename S>
void init_params(NetGraph<S>& graph, std::uint64_t seed, const InitConfig& init) {
  for (auto& p : graph.params()) {
    if (p.is_bias) {
      p.value.set_zero();
      continue;
    }
    const Shape s = p.value.shape();
    const InitScheme scheme = p.group == "backbone" ? init.backbone : init.other;
    const double stddev =
        scheme == InitScheme::Gaussian ? init.gaussian_std : std::sqrt(2.0 / (double(s.c) * s.h * s.w));
    CounterRng rng(seed, fnv1a(p.name.c_str()));
    for (Index i = 0; i < p.value.size(); ++i) p.value[i] = S(rng.normal(0.0, stddev));
  }
}

// ---------------------------------------------------------------------------
// Execution

namespace {

template <typename S>
std::vector<char> required_nodes(const NetGraph<S>& g, Mode mode) {
  std::vector<char> need(g.nodes().size(), 0);
  need[g.fused_logit_node()] = 1;
  if (mode == Mode::Train)
    for (int s : g.side_logit_nodes()) need[s] = 1;
  for (std::size_t i = need.size(); i-- > 0;)
    if (need[i])
      for (int in : g.nodes()[i].inputs) need[in] = 1;
  return need;
}

}  // namespace

template <typename S>
SideOutputs<S> forward(const NetGraph<S>& g, const Tensor<S>& image, Mode mode, Activations<S>* acts) {
  if (!g.built()) throw ConfigError("forward on an unbuilt graph");
  if (image.shape() != g.input_shape())
    throw ShapeError("image " + image.shape().str() + " does not match graph input " + g.input_shape().str());

  Activations<S> local;
  Activations<S>& a = acts ? *acts : local;
  const auto& nodes = g.nodes();
  const std::size_t count = nodes.size();
  a.values.assign(count, Tensor<S>());
  a.argmax.assign(count, {});
  a.computed = required_nodes(g, mode);

  a.values[0] = image;
  for (std::size_t i = 1; i < count; ++i) {
    if (!a.computed[i]) continue;
    const Node& node = nodes[i];
    const Tensor<S>& in = a.values[node.inputs[0]];
    switch (node.kind) {
      case NodeKind::Input: break;
      case NodeKind::Conv: {
        static const Eigen::Matrix<S, Eigen::Dynamic, 1> kNoBias;
        const auto& bias = node.bias >= 0 ? g.params()[node.bias].value.values() : kNoBias;
        a.values[i] = conv2d(in, node.conv, g.params()[node.weight].value, bias);
        break;
      }
      case NodeKind::Relu: a.values[i] = activation(in, Activation::Relu); break;
      case NodeKind::MaxPool: {
        auto r = maxpool2(in);
        a.values[i] = std::move(r.output);
        a.argmax[i] = std::move(r.argmax);
        break;
      }
      case NodeKind::Upsample: a.values[i] = upsample_bilinear(in, node.factor); break;
      case NodeKind::Concat: {
        std::vector<const Tensor<S>*> parts;
        for (int k : node.inputs) parts.push_back(&a.values[k]);
        a.values[i] = concat_channels<S>(std::span<const Tensor<S>* const>(parts));
        break;
      }
      case NodeKind::Crop: {
        const Shape ref = a.values[node.inputs[1]].shape();
        a.values[i] = center_crop(in, ref.h, ref.w);
        break;
      }
    }
  }

  SideOutputs<S> out;
  for (int s : g.side_logit_nodes()) {
    if (!a.computed[s]) continue;
    out.side_logits.push_back(a.values[s]);
    out.side_probs.push_back(activation(a.values[s], Activation::Sigmoid));
  }
  out.fused_logit = a.values[g.fused_logit_node()];
  out.fused_prob = activation(out.fused_logit, Activation::Sigmoid);
  return out;
}

template <typename S>
std::vector<Tensor<S>> backward(const NetGraph<S>& g, const Activations<S>& a,
                                const std::vector<Tensor<S>>& side_grads, const Tensor<S>& fused_grad) {
  const auto& nodes = g.nodes();
  if (a.values.size() != nodes.size()) throw ShapeError("backward: activations do not belong to this graph");
  if (side_grads.size() > g.side_logit_nodes().size()) throw ShapeError("backward: too many side gradients");

  std::vector<Tensor<S>> node_grad(nodes.size());
  for (std::size_t k = 0; k < side_grads.size(); ++k) {
    if (side_grads[k].empty()) continue;
    const int s = g.side_logit_nodes()[k];
    if (!a.computed[s]) throw ShapeError("backward: side output was not computed in forward");
    accumulate(node_grad[s], Tensor<S>(side_grads[k]));
  }
  if (!fused_grad.empty()) accumulate(node_grad[g.fused_logit_node()], Tensor<S>(fused_grad));

  std::vector<Tensor<S>> pgrad;
  pgrad.reserve(g.params().size());
  for (const auto& p : g.params()) pgrad.emplace_back(p.value.shape());

  for (std::size_t i = nodes.size(); i-- > 1;) {
    if (node_grad[i].empty()) continue;
    Tensor<S> grad = std::move(node_grad[i]);
    node_grad[i] = Tensor<S>();
    const Node& node = nodes[i];
    const int src = node.inputs[0];
    const bool need_src = src != g.input_node();
    switch (node.kind) {
      case NodeKind::Input: break;
      case NodeKind::Conv: {
        auto r = conv2d_backward(a.values[src], node.conv, g.params()[node.weight].value, grad, need_src);
        pgrad[node.weight].values() += r.weights.values();
        if (node.bias >= 0) pgrad[node.bias].values() += r.bias;
        if (need_src) accumulate(node_grad[src], std::move(r.input));
        break;
      }
      case NodeKind::Relu:
        accumulate(node_grad[src], activation_backward(a.values[i], Activation::Relu, grad));
        break;
      case NodeKind::MaxPool:
        accumulate(node_grad[src], maxpool2_backward<S>(a.values[src].shape(), a.argmax[i], grad));
        break;
      case NodeKind::Upsample:
        accumulate(node_grad[src], upsample_bilinear_backward(a.values[src].shape(), node.factor, grad));
        break;
      case NodeKind::Concat: {
        int first = 0;
        for (int k : node.inputs) {
          const int c = a.values[k].shape().c;
          if (k != g.input_node()) accumulate(node_grad[k], slice_channels(grad, first, c));
          first += c;
        }
        break;
      }
      case NodeKind::Crop:
        if (need_src) accumulate(node_grad[src], center_crop_backward(a.values[src].shape(), grad));
        break;
    }
  }
  for (std::size_t k = 0; k < pgrad.size(); ++k)
    if (!g.params()[k].trainable) pgrad[k].set_zero();
  return pgrad;
}

template <typename S>
Tensor<S> linear_head(const std::vector<Tensor<S>>& side_logits, const Eigen::Matrix<S, Eigen::Dynamic, 1>& weights,
                      S bias) {
  const int n = int(side_logits.size());
  if (weights.size() != n) throw ShapeError("linear head: one weight per side required");
  const Tensor<S> stacked = concat_channels(side_logits);
  const ConvSpec spec = ConvSpec::same(stacked.shape().c, 1, 1, 1);
  if (stacked.shape().c != n) throw ShapeError("linear head: side logits must be single-channel");
  Tensor<S> w(spec.weight_shape(), weights);
  Eigen::Matrix<S, Eigen::Dynamic, 1> b(1);
  b[0] = bias;
  return conv2d(stacked, spec, w, b);
}

// ---------------------------------------------------------------------------
// FLOPs and summaries

template <typename S>
FlopReport count_flops(const NetGraph<S>& g, const Shape& input) {
  const auto shapes = g.infer_shapes(input);
  FlopReport r;
  for (std::size_t i = 0; i < g.nodes().size(); ++i) {
    const Node& node = g.nodes()[i];
    if (node.kind != NodeKind::Conv) continue;
    const Shape in = shapes[node.inputs[0]];
    LayerFlops l{node.name, node.group, node.conv, in, shapes[i], node.conv.multiply_adds(in)};
    r.total += l.multiply_adds;
    if (node.group == "dna.asym") {
      r.asymmetric += l.multiply_adds;
      if (node.conv.kh == 1 && node.conv.kw > 1) {
        const std::int64_t n = node.conv.kw;
        r.standard_equivalent += std::int64_t(shapes[i].n) * shapes[i].h * shapes[i].w * node.conv.in_channels *
                                 node.conv.out_channels * n * n;
      }
    }
    r.layers.push_back(std::move(l));
  }
  return r;
}

AsymmetricFlops asymmetric_head_flops(int height, int width, int hybrid_channels, int mid_channels, int n,
                                      int groups) {
  const std::int64_t px = std::int64_t(height) * width;
  AsymmetricFlops f;
  for (int grp = 0; grp < groups; ++grp) {
    const std::int64_t in = grp == 0 ? hybrid_channels : mid_channels;
    f.asymmetric += px * (in * mid_channels * n + std::int64_t(mid_channels) * mid_channels * n);
    f.standard += px * in * mid_channels * n * n;
  }
  return f;
}

template <typename S>
void write_summary(std::ostream& os, const NetGraph<S>& g) {
  const auto report = count_flops(g, g.input_shape());
  std::size_t next = 0;
  os << "# variant " << to_string(g.variant()) << "\n";
  os << std::left << std::setw(28) << "layer" << std::setw(10) << "type" << std::setw(36) << "inputs"
     << std::setw(16) << "output" << std::right << std::setw(10) << "params" << std::setw(14) << "mult-adds"
     << "\n";
  for (std::size_t i = 0; i < g.nodes().size(); ++i) {
    const Node& node = g.nodes()[i];
    std::ostringstream ins;
    for (std::size_t k = 0; k < node.inputs.size(); ++k) ins << (k ? "," : "") << g.shapes()[node.inputs[k]];
    std::int64_t params = 0, macs = 0;
    if (node.kind == NodeKind::Conv) {
      params = g.params()[node.weight].value.size() + (node.bias >= 0 ? g.params()[node.bias].value.size() : 0);
      macs = report.layers[next++].multiply_adds;
    }
    os << std::left << std::setw(28) << node.name << std::setw(10) << to_string(node.kind) << std::setw(36)
       << ins.str() << std::setw(16) << g.shapes()[i].str() << std::right << std::setw(10) << params
       << std::setw(14) << macs << "\n";
  }
  os << "# trainable parameters " << g.trainable_parameter_count() << "\n";
  os << "# total multiply-adds " << report.total << "\n";
}

template class NetGraph<float>;
template class NetGraph<double>;
template NetGraph<float> NetGraph<double>::cast<float>() const;
template NetGraph<double> NetGraph<float>::cast<double>() const;
template NetGraph<float> NetGraph<float>::cast<float>() const;
template NetGraph<double> NetGraph<double>::cast<double>() const;

#define DNA_INSTANTIATE(S)                                                                                       \
  template void init_params<S>(NetGraph<S>&, std::uint64_t, const InitConfig&);                                 \
  template SideOutputs<S> forward<S>(const NetGraph<S>&, const Tensor<S>&, Mode, Activations<S>*);              \
  template std::vector<Tensor<S>> backward<S>(const NetGraph<S>&, const Activations<S>&,                        \
                                              const std::vector<Tensor<S>>&, const Tensor<S>&);                 \
  template Tensor<S> linear_head<S>(const std::vector<Tensor<S>>&, const Eigen::Matrix<S, Eigen::Dynamic, 1>&, \
                                    S);                                                                         \
  template FlopReport count_flops<S>(const NetGraph<S>&, const Shape&);                                         \
  template void write_summary<S>(std::ostream&, const NetGraph<S>&);

DNA_INSTANTIATE(float)
DNA_INSTANTIATE(double)

#undef DNA_INSTANTIATE

}  // namespace dna
