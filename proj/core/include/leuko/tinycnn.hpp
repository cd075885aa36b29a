#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "leuko/grid.hpp"

namespace leuko {

struct ConvSpec {
  std::size_t filters = 0;
  std::size_t kernel = 0;
  bool operator==(const ConvSpec&) const = default;
};

/// Stack of valid (unpadded, stride 1) convolutions, each followed by ReLU and
/// 2x2/2 max pooling with floor semantics, then one dense logit and a sigmoid.
struct Architecture {
  std::size_t input_size = 64;
  std::size_t input_channels = 3;
  std::vector<ConvSpec> convs{{32, 5}, {16, 4}, {8, 3}};

  struct Stage {
    std::size_t in_channels;
    std::size_t in_size;
    std::size_t filters;
    std::size_t kernel;
    std::size_t conv_size;
    std::size_t pool_size;
  };

  /// Throws ShapeMismatch when the input is too small for the stack.
  void validate() const;
  std::vector<Stage> stages() const;
  std::size_t flattened_features() const;
  std::size_t parameter_count() const;
  /// "conv1", "conv2", ... for layer index 0, 1, ...
  static std::string layer_name(std::size_t index);
  /// Index of a named conv layer; throws UnknownLayer.
  std::size_t layer_index(std::string_view name) const;
  /// Smallest input size the conv stack accepts.
  std::size_t min_input_size() const;

  bool operator==(const Architecture&) const = default;
};

/// Dense N x C x H x W tensor, row-major.
struct Tensor4 {
  std::size_t n = 0, c = 0, h = 0, w = 0;
  std::vector<double> data;

  Tensor4() = default;
  Tensor4(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_)
      : n(n_), c(c_), h(h_), w(w_), data(n_ * c_ * h_ * w_, 0.0) {}

  std::size_t plane_size() const noexcept { return h * w; }
  double* plane(std::size_t i, std::size_t ch) noexcept { return data.data() + (i * c + ch) * h * w; }
  const double* plane(std::size_t i, std::size_t ch) const noexcept {
    return data.data() + (i * c + ch) * h * w;
  }
  double& at(std::size_t i, std::size_t ch, std::size_t y, std::size_t x) noexcept {
    return data[((i * c + ch) * h + y) * w + x];
  }
  double at(std::size_t i, std::size_t ch, std::size_t y, std::size_t x) const noexcept {
    return data[((i * c + ch) * h + y) * w + x];
  }
};

/// Parameters live in one flat vector in declaration order:
/// conv1 weights (O x C x K x K), conv1 bias (O), ..., dense weights, dense bias.
class CnnModel {
 public:
  /// All parameters zero.
  explicit CnnModel(Architecture arch = {});
  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)) per tensor, biases zero.
  static CnnModel glorot(Architecture arch, std::uint64_t seed);

  const Architecture& architecture() const noexcept { return arch_; }

  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }

  std::span<double> conv_weights(std::size_t layer);
  std::span<const double> conv_weights(std::size_t layer) const;
  std::span<double> conv_bias(std::size_t layer);
  std::span<const double> conv_bias(std::size_t layer) const;
  std::span<double> dense_weights();
  std::span<const double> dense_weights() const;
  double& dense_bias();
  double dense_bias() const;

  /// Offset of each tensor inside parameters(), in declaration order.
  struct Slot {
    std::string name;
    std::size_t offset;
    std::size_t size;
  };
  const std::vector<Slot>& slots() const noexcept { return slots_; }

  /// Hash of the parameter bytes; forward caches remember it.
  std::uint64_t fingerprint() const noexcept;
  bool all_finite() const noexcept;

 private:
  Architecture arch_;
  std::vector<double> params_;
  std::vector<Slot> slots_;
};

/// Everything backward and Grad-CAM need from a forward pass.
struct ForwardCache {
  Tensor4 input;
  std::vector<Tensor4> pre;     // conv outputs before ReLU
  std::vector<Tensor4> pooled;  // after ReLU and pooling
  std::vector<std::vector<std::uint32_t>> argmax;  // winning in-plane offset per pooled cell
  std::vector<double> logits;
  std::vector<double> probabilities;
  std::uint64_t model_fingerprint = 0;

  std::size_t batch_size() const noexcept { return logits.size(); }
  /// ReLU(pre[layer])
  Tensor4 activation(std::size_t layer) const;
};

/// Replicates each grayscale slice into the model's input channels.
Tensor4 make_batch(std::span<const UnitSlice> slices, std::size_t channels);
Tensor4 make_batch(std::span<const UnitSlice* const> slices, std::size_t channels);

ForwardCache forward(const CnnModel& model, const Tensor4& batch);

struct BackpropResult {
  std::vector<double> parameter_gradients;
  /// d(sum of weighted logits) / d(ReLU activation) of the captured layer.
  std::optional<Tensor4> activation_gradient;
};

/// Backpropagates per-sample logit gradients through the network.
BackpropResult backprop(const CnnModel& model, const ForwardCache& cache,
                        std::span<const double> logit_gradients,
                        std::optional<std::size_t> capture_layer = std::nullopt);

/// Gradient of the mean binary cross-entropy over the batch.
std::vector<double> backward(const CnnModel& model, const ForwardCache& cache,
                             std::span<const double> labels);

inline constexpr double kProbabilityEpsilon = 1e-12;

double sigmoid(double z) noexcept;
/// -[y ln p + (1-y) ln(1-p)] with p clamped to [eps, 1-eps].
double bce_loss(double probability, double label) noexcept;
/// Same loss evaluated from the logit in the stable fused form.
double bce_with_logits(double logit, double label) noexcept;
double mean_bce_with_logits(std::span<const double> logits, std::span<const double> labels);

struct AdamConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update; step counts from 1.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               std::int64_t step, const AdamConfig& cfg);

// Model file: "TCNN", u32 version, u32 input_size, u32 input_channels,
// u32 conv count, (u32 filters, u32 kernel) per conv, then every parameter as
// f64 in declaration order. All little endian.
inline constexpr std::uint32_t kModelFormatVersion = 1;
std::vector<std::uint8_t> encode_model(const CnnModel& model);
CnnModel decode_model(std::span<const std::uint8_t> bytes);
void save_model(const std::filesystem::path& path, const CnnModel& model);
CnnModel load_model(const std::filesystem::path& path);

}  // namespace leuko
