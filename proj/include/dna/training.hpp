#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dna/model.hpp"

namespace dna {

struct LossReport {
  double total = 0.0;
  std::vector<std::pair<std::string, double>> per_head;  // side1..sideN, then fused
};

template <typename S>
struct BceResult {
  double loss = 0.0;
  Tensor<S> grad;  // d loss / d logits
};

/// Class-balanced binary cross-entropy summed over pixels:
///   -beta * sum_{gt=1} log sigma(x) - (1 - beta) * sum_{gt=0} log(1 - sigma(x)),
/// beta = |negatives| / |pixels| of this mask. Evaluated with the stable
/// softplus form so large logits never overflow. All-positive or all-negative
/// masks are legal; only the surviving term remains, with its weight.
template <typename S>
BceResult<S> class_balanced_bce(const Tensor<S>& logits, const Tensor<S>& gt);

/// base * (1 - curr_iter / max_iter)^power. Throws ConfigError when
/// max_iter == 0 or curr_iter is outside [0, max_iter].
double poly_lr(double base, std::int64_t curr_iter, std::int64_t max_iter, double power);

struct OptimConfig {
  double base_lr = 1e-7;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double power = 0.9;
  std::int64_t max_iter = 20000;

  void validate() const;
};

/// SGD with momentum and weight decay under the poly schedule:
///   v <- momentum * v + grad + weight_decay * param   (weights only; biases get no decay)
///   param <- param - lr * v,   lr = poly_lr(base_lr, curr_iter, max_iter, power)
template <typename S>
class OptimState {
 public:
  OptimState(const std::vector<Parameter<S>>& params, const OptimConfig& config);

  const OptimConfig& config() const { return config_; }
  std::int64_t curr_iter() const { return curr_iter_; }
  double current_lr() const;
  const std::vector<Tensor<S>>& momentum_buffers() const { return velocity_; }

  /// One update. Frozen parameters are skipped. A non-finite gradient throws
  /// NumericError naming the parameter and leaves every parameter untouched.
  void step(std::vector<Parameter<S>>& params, const std::vector<Tensor<S>>& grads);

 private:
  OptimConfig config_;
  std::int64_t curr_iter_ = 0;
  std::vector<Tensor<S>> velocity_;
};

/// Deep supervision: class-balanced BCE on every side logit the forward pass
/// produced plus the fused logit. Fills the upstream gradients for backward().
template <typename S>
LossReport deep_supervision_loss(const SideOutputs<S>& out, const Tensor<S>& gt, std::vector<Tensor<S>>& side_grads,
                                 Tensor<S>& fused_grad);

struct TrainSample {
  Tensor<double> image;  // 1 x C x H x W, values in [0, 1]
  Tensor<double> mask;   // 1 x 1 x H x W, values in {0, 1}
};

/// Network input for an image in [0, 1]: the image shifted to zero mean range.
template <typename S>
Tensor<S> to_network_input(const Tensor<double>& image);

struct LossRecord {
  std::int64_t iter = 0;
  double lr = 0.0;
  LossReport loss;
};

struct TrainConfig {
  OptimConfig optim;
  std::uint64_t seed = 1;
  std::filesystem::path checkpoint;  // empty: no checkpoint written
  std::filesystem::path loss_csv;    // empty: no loss log written
  std::function<void(const LossRecord&)> on_iteration;
};

struct TrainResult {
  std::vector<LossRecord> history;
};

/// Trains in place for config.optim.max_iter iterations with batch size 1. The
/// sample order is a seeded permutation per epoch. On a non-finite loss or
/// gradient the last good parameters are checkpointed (when a path is set) and
/// NumericError is thrown.
template <typename S>
TrainResult train(NetGraph<S>& graph, const std::vector<TrainSample>& dataset, const TrainConfig& config);

/// Per-epoch sample order used by train().
std::vector<std::size_t> epoch_order(std::size_t dataset_size, std::uint64_t seed, std::int64_t epoch);

void write_loss_csv(std::ostream& os, const std::vector<LossRecord>& history);

// Checkpoint container:
//   "DNACKPT\0" | u32 version | u32 variant id | u32 scalar bytes | u32 record count
//   per record: u32 name length | name | 4 x u32 shape | u8 trainable | raw values
// All integers and values little-endian.
inline constexpr char kCheckpointMagic[8] = {'D', 'N', 'A', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const NetGraph<S>& graph);

/// Loads parameters into a graph built for the same variant and config.
/// Throws DataError (with byte offset) on malformed files and ConfigError on a
/// variant, name or shape mismatch.
template <typename S>
void load_checkpoint(const std::filesystem::path& path, NetGraph<S>& graph);

/// Variant id stored in a checkpoint header.
Variant checkpoint_variant(const std::filesystem::path& path);

}  // namespace dna
