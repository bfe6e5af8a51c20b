#include "dna/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "dna/rng.hpp"

namespace dna {

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

template <typename S>
BceResult<S> class_balanced_bce(const Tensor<S>& logits, const Tensor<S>& gt) {
  if (logits.empty()) throw ShapeError("class-balanced loss on an empty mask");
  if (logits.shape() != gt.shape())
    throw ShapeError("loss: logits " + logits.shape().str() + " vs mask " + gt.shape().str());
  require_finite(logits, "class_balanced_bce");

  Index positives = 0;
  for (Index i = 0; i < gt.size(); ++i) {
    if (gt[i] != S(0) && gt[i] != S(1)) throw ShapeError("loss: mask values must be 0 or 1");
    positives += gt[i] == S(1);
  }
  const double beta = double(gt.size() - positives) / double(gt.size());

  BceResult<S> r;
  r.grad = Tensor<S>(logits.shape());
  for (Index i = 0; i < logits.size(); ++i) {
    const double x = logits[i];
    const double p = sigmoid(x);
    if (gt[i] == S(1)) {
      r.loss += beta * softplus(-x);  // -log sigma(x)
      r.grad[i] = S(-beta * (1.0 - p));
    } else {
      r.loss += (1.0 - beta) * softplus(x);  // -log(1 - sigma(x))
      r.grad[i] = S((1.0 - beta) * p);
    }
  }
  return r;
}

double poly_lr(double base, std::int64_t curr_iter, std::int64_t max_iter, double power) {
  if (max_iter <= 0) throw ConfigError("poly_lr: max_iter must be positive");
  if (curr_iter < 0 || curr_iter > max_iter) throw ConfigError("poly_lr: curr_iter outside [0, max_iter]");
  return base * std::pow(1.0 - double(curr_iter) / double(max_iter), power);
}

void OptimConfig::validate() const {
  if (!(base_lr >= 0) || !std::isfinite(base_lr)) throw ConfigError("optim: base_lr must be finite and >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("optim: momentum must be in [0, 1)");
  if (!(weight_decay >= 0)) throw ConfigError("optim: weight_decay must be >= 0");
  if (!(power >= 0)) throw ConfigError("optim: power must be >= 0");
  if (max_iter <= 0) throw ConfigError("optim: max_iter must be positive");
}

template <typename S>
OptimState<S>::OptimState(const std::vector<Parameter<S>>& params, const OptimConfig& config) : config_(config) {
  config_.validate();
  for (const auto& p : params) velocity_.emplace_back(p.value.shape());
}

template <typename S>
double OptimState<S>::current_lr() const {
  return poly_lr(config_.base_lr, curr_iter_, config_.max_iter, config_.power);
}

template <typename S>
void OptimState<S>::step(std::vector<Parameter<S>>& params, const std::vector<Tensor<S>>& grads) {
  if (params.size() != velocity_.size() || grads.size() != params.size())
    throw ShapeError("sgd_step: parameter/gradient count mismatch");
  if (curr_iter_ >= config_.max_iter) throw ConfigError("sgd_step: iteration budget exhausted");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].shape() != params[k].value.shape())
      throw ShapeError("sgd_step: gradient shape mismatch for " + params[k].name);
    if (params[k].trainable && !grads[k].all_finite())
      throw NumericError("non-finite gradient for parameter '" + params[k].name + "'");
  }
  const S lr = S(current_lr());
  const S momentum = S(config_.momentum);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (!p.trainable) continue;
    auto& v = velocity_[k].values();
    v = momentum * v + grads[k].values();
    if (!p.is_bias && config_.weight_decay != 0) v += S(config_.weight_decay) * p.value.values();
    p.value.values() -= lr * v;
  }
  ++curr_iter_;
}

template <typename S>
LossReport deep_supervision_loss(const SideOutputs<S>& out, const Tensor<S>& gt, std::vector<Tensor<S>>& side_grads,
                                 Tensor<S>& fused_grad) {
  LossReport report;
  side_grads.clear();
  for (std::size_t i = 0; i < out.side_logits.size(); ++i) {
    auto r = class_balanced_bce(out.side_logits[i], gt);
    report.per_head.emplace_back("side" + std::to_string(i + 1), r.loss);
    report.total += r.loss;
    side_grads.push_back(std::move(r.grad));
  }
  auto r = class_balanced_bce(out.fused_logit, gt);
  report.per_head.emplace_back("fused", r.loss);
  report.total += r.loss;
  fused_grad = std::move(r.grad);
  return report;
}

template <typename S>
Tensor<S> to_network_input(const Tensor<double>& image) {
  Tensor<S> x(image.shape());
  x.values() = (image.values().array() - 0.5).template cast<S>();
  return x;
}

std::vector<std::size_t> epoch_order(std::size_t dataset_size, std::uint64_t seed, std::int64_t epoch) {
  std::vector<std::size_t> order(dataset_size);
  for (std::size_t i = 0; i < dataset_size; ++i) order[i] = i;
  CounterRng rng(seed, 0x5348554646ULL + std::uint64_t(epoch));
  for (std::size_t i = dataset_size; i > 1; --i) {
    const auto j = std::size_t(rng.uniform_int(0, std::int64_t(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

void write_loss_csv(std::ostream& os, const std::vector<LossRecord>& history) {
  os << "iter,lr,total_loss";
  if (!history.empty())
    for (const auto& [name, _] : history.front().loss.per_head) os << "," << name;
  os << "\n" << std::setprecision(10);
  for (const auto& rec : history) {
    os << rec.iter << "," << rec.lr << "," << rec.loss.total;
    for (const auto& [_, v] : rec.loss.per_head) os << "," << v;
    os << "\n";
  }
}

template <typename S>
TrainResult train(NetGraph<S>& graph, const std::vector<TrainSample>& dataset, const TrainConfig& config) {
  if (dataset.empty()) throw ConfigError("train: empty dataset");
  config.optim.validate();
  for (const auto& s : dataset)
    if (s.image.shape() != Shape{1, graph.input_shape().c, graph.input_shape().h, graph.input_shape().w})
      throw ShapeError("train: sample image " + s.image.shape().str() + " does not match graph input " +
                       graph.input_shape().str());

  OptimState<S> state(graph.params(), config.optim);
  TrainResult result;
  std::vector<std::size_t> order;
  std::vector<Tensor<S>> side_grads;
  Tensor<S> fused_grad;
  Activations<S> acts;

  auto fail = [&](const std::string& why) {
    if (!config.checkpoint.empty()) save_checkpoint(config.checkpoint, graph);
    if (!config.loss_csv.empty()) {
      std::ofstream csv(config.loss_csv);
      write_loss_csv(csv, result.history);
    }
    throw NumericError(why);
  };

  for (std::int64_t it = 0; it < config.optim.max_iter; ++it) {
    const std::size_t slot = std::size_t(it) % dataset.size();
    if (slot == 0) order = epoch_order(dataset.size(), config.seed, it / std::int64_t(dataset.size()));
    const TrainSample& sample = dataset[order[slot]];

    const Tensor<S> x = to_network_input<S>(sample.image);
    const Tensor<S> gt = sample.mask.cast<S>();
    const auto out = forward(graph, x, Mode::Train, &acts);
    LossRecord rec{it + 1, state.current_lr(), deep_supervision_loss(out, gt, side_grads, fused_grad)};
    if (!std::isfinite(rec.loss.total)) fail("training diverged: non-finite loss at iteration " + std::to_string(it + 1));

    const auto grads = backward(graph, acts, side_grads, fused_grad);
    try {
      state.step(graph.params(), grads);
    } catch (const NumericError& e) {
      fail(std::string(e.what()) + " at iteration " + std::to_string(it + 1));
    }
    if (config.on_iteration) config.on_iteration(rec);
    result.history.push_back(std::move(rec));
  }

  if (!config.checkpoint.empty()) save_checkpoint(config.checkpoint, graph);
  if (!config.loss_csv.empty()) {
    std::ofstream csv(config.loss_csv);
    if (!csv) throw DataError("cannot write loss log " + config.loss_csv.string());
    write_loss_csv(csv, result.history);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

template <typename T>
void put_le(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open checkpoint " + path.string());
  }

  template <typename T>
  T get(const char* what) {
    unsigned char bytes[sizeof(T)];
    read(bytes, sizeof(T), what);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }

  void read(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), std::streamsize(n));
    if (std::size_t(in_.gcount()) != n)
      throw DataError(path_.string() + ": truncated " + what + " at byte " + std::to_string(offset_), offset_);
    offset_ += std::int64_t(n);
  }

  std::int64_t offset() const { return offset_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::int64_t offset_ = 0;
};

struct Header {
  Variant variant;
  std::uint32_t scalar_bytes;
  std::uint32_t records;
};

Header read_header(Reader& r) {
  char magic[8];
  r.read(magic, 8, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw DataError(r.path().string() + ": not a checkpoint (bad magic at byte 0)", 0);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw DataError(r.path().string() + ": unsupported checkpoint version " + std::to_string(version), 8);
  const auto variant_id = r.get<std::uint32_t>("variant id");
  const auto variants = all_variants();
  if (variant_id >= variants.size())
    throw DataError(r.path().string() + ": unknown variant id " + std::to_string(variant_id), 12);
  const auto scalar_bytes = r.get<std::uint32_t>("scalar size");
  if (scalar_bytes != 4 && scalar_bytes != 8)
    throw DataError(r.path().string() + ": bad scalar size " + std::to_string(scalar_bytes), 16);
  const auto records = r.get<std::uint32_t>("record count");
  return {variants[variant_id], scalar_bytes, records};
}

std::uint32_t variant_id(Variant v) {
  const auto variants = all_variants();
  return std::uint32_t(std::find(variants.begin(), variants.end(), v) - variants.begin());
}

}  // namespace

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const NetGraph<S>& graph) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  os.write(kCheckpointMagic, 8);
  put_le<std::uint32_t>(os, kCheckpointVersion);
  put_le<std::uint32_t>(os, variant_id(graph.variant()));
  put_le<std::uint32_t>(os, sizeof(S));
  put_le<std::uint32_t>(os, std::uint32_t(graph.params().size()));
  for (const auto& p : graph.params()) {
    put_le<std::uint32_t>(os, std::uint32_t(p.name.size()));
    os.write(p.name.data(), std::streamsize(p.name.size()));
    const Shape s = p.value.shape();
    for (int d : {s.n, s.c, s.h, s.w}) put_le<std::uint32_t>(os, std::uint32_t(d));
    put_le<std::uint8_t>(os, p.trainable ? 1 : 0);
    for (Index i = 0; i < p.value.size(); ++i) put_le<S>(os, p.value[i]);
  }
  if (!os) throw DataError("failed writing checkpoint " + path.string());
}

template <typename S>
void load_checkpoint(const std::filesystem::path& path, NetGraph<S>& graph) {
  Reader r(path);
  const Header h = read_header(r);
  if (h.variant != graph.variant())
    throw ConfigError("checkpoint variant " + std::string(to_string(h.variant)) + " does not match graph variant " +
                      std::string(to_string(graph.variant())));
  if (h.records != graph.params().size())
    throw ConfigError("checkpoint has " + std::to_string(h.records) + " parameters, graph has " +
                      std::to_string(graph.params().size()));
  for (auto& p : graph.params()) {
    const std::int64_t at = r.offset();
    const auto len = r.get<std::uint32_t>("name length");
    if (len > 4096) throw DataError(path.string() + ": implausible name length at byte " + std::to_string(at), at);
    std::string name(len, '\0');
    r.read(name.data(), len, "name");
    Shape s;
    s.n = int(r.get<std::uint32_t>("shape"));
    s.c = int(r.get<std::uint32_t>("shape"));
    s.h = int(r.get<std::uint32_t>("shape"));
    s.w = int(r.get<std::uint32_t>("shape"));
    r.get<std::uint8_t>("trainable flag");
    if (name != p.name || s != p.value.shape())
      throw ConfigError("checkpoint record '" + name + "' " + s.str() + " does not match graph parameter '" + p.name +
                        "' " + p.value.shape().str());
    for (Index i = 0; i < p.value.size(); ++i) {
      if (h.scalar_bytes == 4)
        p.value[i] = S(r.get<float>("values"));
      else
        p.value[i] = S(r.get<double>("values"));
    }
  }
}

Variant checkpoint_variant(const std::filesystem::path& path) {
  Reader r(path);
  return read_header(r).variant;
}

#define DNA_INSTANTIATE(S)                                                                                     \
  template BceResult<S> class_balanced_bce<S>(const Tensor<S>&, const Tensor<S>&);                             \
  template class OptimState<S>;                                                                               \
  template LossReport deep_supervision_loss<S>(const SideOutputs<S>&, const Tensor<S>&, std::vector<Tensor<S>>&, \
                                               Tensor<S>&);                                                   \
  template Tensor<S> to_network_input<S>(const Tensor<double>&);                                              \
  template TrainResult train<S>(NetGraph<S>&, const std::vector<TrainSample>&, const TrainConfig&);            \
  template void save_checkpoint<S>(const std::filesystem::path&, const NetGraph<S>&);                         \
  template void load_checkpoint<S>(const std::filesystem::path&, NetGraph<S>&);

DNA_INSTANTIATE(float)
DNA_INSTANTIATE(double)

#undef DNA_INSTANTIATE

}  // namespace dna
