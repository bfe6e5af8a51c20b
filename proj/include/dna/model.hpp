#pragma once

// Encoder-decoder saliency network with deeply-supervised nonlinear side-output
// aggregation, and the ablation variants built from the same pieces.
//
// A network is a NetGraph: a topologically ordered list of nodes (conv, relu,
// pool, upsample, concat, crop) with named parameter slots. forward() runs the
// nodes in order and backward() walks them in reverse, so every variant gets
// exact gradients from the per-primitive kernels in layers.hpp.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dna/layers.hpp"

namespace dna {

enum class Variant {
  Dna,        // nonlinear side-feature aggregation with deep supervision
  EncDec,     // encoder-decoder, single readout, no deep supervision
  EncDecLin,  // encoder-decoder with linear side-prediction fusion (deeply supervised)
  EncDecK3,   // EncDec with every decoder kernel 3x3
  DnaNoDs,    // DNA head trained on the fused output only
  HedStyle,   // side predictions straight off the encoder blocks, linear fusion
  Unet,       // U-Net style decoder: raw skip features, encoder widths, 3x3 kernels
};

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);  // throws ConfigError
std::vector<Variant> all_variants();

/// Whether the variant emits supervised side-output logits.
bool has_side_outputs(Variant v);

enum class BackboneScale { Full, Tiny };

struct SideSpec {
  int kernel;    // K_i
  int channels;  // C_i
};

struct NetConfig {
  int input_height = 96;
  int input_width = 96;
  int input_channels = 3;
  std::array<SideSpec, 5> sides{{{3, 64}, {3, 128}, {5, 128}, {5, 128}, {5, 128}}};
  int top_channels_1 = 192;  // C6(1), 3x3
  int top_channels_2 = 128;  // C6(2), 7x7
  int dna_side_channels = 32;
  int dna_mid_channels = 64;
  int asym_kernel = 7;
  BackboneScale scale = BackboneScale::Tiny;
  int tiny_divisor = 4;

  void validate() const;  // throws ConfigError

  /// Channel width after applying the tiny-scale divisor (never below 1).
  int width(int full) const;

  /// VGG16 block widths (64, 128, 256, 512, 512) at this scale.
  std::array<int, 5> backbone_widths() const;
};

enum class NodeKind { Input, Conv, Relu, MaxPool, Upsample, Concat, Crop };
std::string_view to_string(NodeKind k);

struct Node {
  std::string name;
  NodeKind kind = NodeKind::Input;
  std::vector<int> inputs;
  std::string group;  // "backbone", "decoder", "dna.side", "dna.asym", "head", ...
  ConvSpec conv;      // Conv only
  int weight = -1;    // Conv only: parameter indices
  int bias = -1;
  int factor = 0;     // Upsample only
};

enum class InitScheme { Gaussian, HeNormal };

template <typename S>
struct Parameter {
  std::string name;
  Tensor<S> value;
  bool trainable = true;
  bool is_bias = false;
  std::string group;
};

template <typename S>
struct SideOutputs {
  std::vector<Tensor<S>> side_logits;
  std::vector<Tensor<S>> side_probs;
  Tensor<S> fused_logit;
  Tensor<S> fused_prob;
};

/// Intermediate values of one forward pass, kept for backward().
template <typename S>
struct Activations {
  std::vector<Tensor<S>> values;
  std::vector<std::vector<std::int64_t>> argmax;
  std::vector<char> computed;
};

enum class Mode { Train, Test };

template <typename S>
class NetGraph {
 public:
  NetGraph() = default;

  /// Builds the variant's graph for the configured input size. Throws
  /// ConfigError on invalid configs and ShapeError on inputs smaller than 32.
  static NetGraph build(Variant variant, const NetConfig& config);

  Variant variant() const { return variant_; }
  const NetConfig& config() const { return config_; }
  bool built() const { return !nodes_.empty(); }

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Shape>& shapes() const { return shapes_; }
  std::vector<Parameter<S>>& params() { return params_; }
  const std::vector<Parameter<S>>& params() const { return params_; }
  const Parameter<S>& param(std::string_view name) const;
  Parameter<S>& param(std::string_view name);

  int input_node() const { return 0; }
  const std::vector<int>& side_logit_nodes() const { return side_logits_; }
  int fused_logit_node() const { return fused_; }
  int node_index(std::string_view name) const;  // -1 when absent

  /// Encoder block outputs S1..S6 and decoder sides S~1..S~6 (S~6 == S6).
  const std::array<int, 6>& encoder_sides() const { return encoder_; }
  const std::array<int, 6>& decoder_sides() const { return decoder_; }

  /// Output shapes of every node for an arbitrary (n, c, h, w) input.
  std::vector<Shape> infer_shapes(const Shape& input) const;

  Shape input_shape() const { return shapes_.front(); }

  std::int64_t trainable_parameter_count() const;

  template <typename To>
  NetGraph<To> cast() const;

 private:
  template <typename>
  friend class NetGraph;

  int add_node(Node node);
  int add_conv(const std::string& name, int input, const ConvSpec& spec, const std::string& group);
  int add_conv_relu(const std::string& name, int input, const ConvSpec& spec, const std::string& group);
  int add_simple(const std::string& name, NodeKind kind, std::vector<int> inputs, const std::string& group,
                 int factor = 0);
  int add_upsample_to_input(const std::string& name, int input, int factor, const std::string& group);

  Variant variant_ = Variant::Dna;
  NetConfig config_;
  std::vector<Node> nodes_;
  std::vector<Shape> shapes_;
  std::vector<Parameter<S>> params_;
  std::vector<int> side_logits_;
  int fused_ = -1;
  std::array<int, 6> encoder_{};
  std::array<int, 6> decoder_{};
};

/// Sets every weight from N(0, sigma^2) (Gaussian) or N(0, 2/fan_in) (HeNormal)
/// using a per-parameter counter-based stream, and every bias to zero.
/// `backbone` applies to the encoder convolutions, `other` to everything else.
struct InitConfig {
  InitScheme backbone = InitScheme::HeNormal;
  InitScheme other = InitScheme::Gaussian;
  double gaussian_std = 0.01;
};

template <typename S>
void init_params(NetGraph<S>& graph, std::uint64_t seed, const InitConfig& init = {});

template <typename S>
SideOutputs<S> forward(const NetGraph<S>& graph, const Tensor<S>& image, Mode mode = Mode::Train,
                       Activations<S>* acts = nullptr);

/// Gradients of every parameter (aligned with graph.params(); frozen ones are
/// zero) given upstream gradients of the side logits and the fused logit.
/// `side_grads` may be empty, and individual entries may be empty tensors.
template <typename S>
std::vector<Tensor<S>> backward(const NetGraph<S>& graph, const Activations<S>& acts,
                                const std::vector<Tensor<S>>& side_grads, const Tensor<S>& fused_grad);

/// Linear side-output fusion on its own: 1x1 convolution over the
/// channel-stacked side logits with one scalar weight per side and a shared bias.
template <typename S>
Tensor<S> linear_head(const std::vector<Tensor<S>>& side_logits, const Eigen::Matrix<S, Eigen::Dynamic, 1>& weights,
                      S bias);

struct LayerFlops {
  std::string name;
  std::string group;
  ConvSpec conv;
  Shape input;
  Shape output;
  std::int64_t multiply_adds = 0;
};

struct FlopReport {
  std::vector<LayerFlops> layers;
  std::int64_t total = 0;
  std::int64_t asymmetric = 0;           // the DNA head's 1xn / nx1 convolutions
  std::int64_t standard_equivalent = 0;  // same groups with each 1xn+nx1 pair replaced by one nxn conv
};

template <typename S>
FlopReport count_flops(const NetGraph<S>& graph, const Shape& input);

/// Multiply-adds of the DNA asymmetric groups when each (1xn, nx1) pair is
/// replaced by a standard n x n convolution with the same in/out channels.
struct AsymmetricFlops {
  std::int64_t asymmetric = 0;
  std::int64_t standard = 0;
  double ratio() const { return double(standard) / double(asymmetric); }
};
AsymmetricFlops asymmetric_head_flops(int height, int width, int hybrid_channels, int mid_channels,
                                      int n, int groups = 2);

/// Plain-text per-layer table: name, type, input/output shapes, parameters, multiply-adds.
template <typename S>
void write_summary(std::ostream& os, const NetGraph<S>& graph);

extern template class NetGraph<float>;
extern template class NetGraph<double>;

}  // namespace dna
