#include "leuko/tinycnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "leuko/binary_io.hpp"
#include "leuko/random.hpp"

namespace leuko {

// ---- architecture ----

void Architecture::validate() const {
  if (input_channels == 0) fail(Errc::ShapeMismatch, "input_channels must be positive");
  if (convs.empty()) fail(Errc::ShapeMismatch, "at least one conv layer is required");
  std::size_t size = input_size;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const auto& spec = convs[i];
    if (spec.filters == 0 || spec.kernel == 0) {
      fail(Errc::ShapeMismatch, layer_name(i) + " needs positive filters and kernel");
    }
    if (size < spec.kernel || (size - spec.kernel + 1) / 2 == 0) {
      fail(Errc::ShapeMismatch, "input_size " + std::to_string(input_size) + " too small for " +
                                    layer_name(i) + " (minimum " + std::to_string(min_input_size()) + ")");
    }
    size = (size - spec.kernel + 1) / 2;
  }
}

std::vector<Architecture::Stage> Architecture::stages() const {
  validate();
  std::vector<Stage> out;
  std::size_t channels = input_channels;
  std::size_t size = input_size;
  for (const auto& spec : convs) {
    const std::size_t conv_size = size - spec.kernel + 1;
    out.push_back({channels, size, spec.filters, spec.kernel, conv_size, conv_size / 2});
    channels = spec.filters;
    size = conv_size / 2;
  }
  return out;
}

std::size_t Architecture::flattened_features() const {
  const auto s = stages().back();
  return s.filters * s.pool_size * s.pool_size;
}

std::size_t Architecture::parameter_count() const {
  std::size_t count = 0;
  for (const auto& s : stages()) count += s.filters * s.in_channels * s.kernel * s.kernel + s.filters;
  return count + flattened_features() + 1;
}

std::string Architecture::layer_name(std::size_t index) { return "conv" + std::to_string(index + 1); }

std::size_t Architecture::layer_index(std::string_view name) const {
  for (std::size_t i = 0; i < convs.size(); ++i) {
    if (name == layer_name(i)) return i;
  }
  fail(Errc::UnknownLayer, "no conv layer named '" + std::string(name) + "'");
}

std::size_t Architecture::min_input_size() const {
  // Walk backwards: pooled size >= 1 needs conv size >= 2.
  std::size_t size = 1;
  for (auto it = convs.rbegin(); it != convs.rend(); ++it) size = 2 * size + it->kernel - 1;
  return size;
}

// ---- model ----

CnnModel::CnnModel(Architecture arch) : arch_(std::move(arch)) {
  std::size_t offset = 0;
  const auto stages = arch_.stages();
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    const std::size_t w = s.filters * s.in_channels * s.kernel * s.kernel;
    slots_.push_back({Architecture::layer_name(i) + ".weight", offset, w});
    offset += w;
    slots_.push_back({Architecture::layer_name(i) + ".bias", offset, s.filters});
    offset += s.filters;
  }
  const std::size_t features = arch_.flattened_features();
  slots_.push_back({"dense.weight", offset, features});
  offset += features;
  slots_.push_back({"dense.bias", offset, 1});
  offset += 1;
  params_.assign(offset, 0.0);
}

CnnModel CnnModel::glorot(Architecture arch, std::uint64_t seed) {
  CnnModel model(std::move(arch));
  Rng rng(seed);
  const auto stages = model.arch_.stages();
  auto fill = [&rng](std::span<double> w, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& x : w) x = rng.uniform(-limit, limit);
  };
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    const double area = static_cast<double>(s.kernel * s.kernel);
    fill(model.conv_weights(i), static_cast<double>(s.in_channels) * area,
         static_cast<double>(s.filters) * area);
  }
  fill(model.dense_weights(), static_cast<double>(model.arch_.flattened_features()), 1.0);
  return model;
}

std::span<double> CnnModel::conv_weights(std::size_t layer) {
  const auto& s = slots_.at(2 * layer);
  return std::span<double>(params_).subspan(s.offset, s.size);
}
std::span<const double> CnnModel::conv_weights(std::size_t layer) const {
  const auto& s = slots_.at(2 * layer);
  return std::span<const double>(params_).subspan(s.offset, s.size);
}
std::span<double> CnnModel::conv_bias(std::size_t layer) {
  const auto& s = slots_.at(2 * layer + 1);
  return std::span<double>(params_).subspan(s.offset, s.size);
}
std::span<const double> CnnModel::conv_bias(std::size_t layer) const {
  const auto& s = slots_.at(2 * layer + 1);
  return std::span<const double>(params_).subspan(s.offset, s.size);
}
std::span<double> CnnModel::dense_weights() {
  const auto& s = slots_[slots_.size() - 2];
  return std::span<double>(params_).subspan(s.offset, s.size);
}
std::span<const double> CnnModel::dense_weights() const {
  const auto& s = slots_[slots_.size() - 2];
  return std::span<const double>(params_).subspan(s.offset, s.size);
}
double& CnnModel::dense_bias() { return params_.back(); }
double CnnModel::dense_bias() const { return params_.back(); }

std::uint64_t CnnModel::fingerprint() const noexcept {
  std::uint64_t h = 1469598103934665603ULL;
  for (const double p : params_) {
    std::uint64_t bits;
    std::memcpy(&bits, &p, sizeof bits);
    h = (h ^ bits) * 1099511628211ULL;
    h ^= h >> 29;
  }
  return h ^ params_.size();
}

bool CnnModel::all_finite() const noexcept {
  return std::all_of(params_.begin(), params_.end(), [](double p) { return std::isfinite(p); });
}

Tensor4 ForwardCache::activation(std::size_t layer) const {
  Tensor4 out = pre.at(layer);
  for (double& v : out.data) v = std::max(v, 0.0);
  return out;
}

// ---- batches ----

Tensor4 make_batch(std::span<const UnitSlice* const> slices, std::size_t channels) {
  if (slices.empty()) fail(Errc::EmptyInput, "empty batch");
  const std::size_t rows = slices.front()->rows();
  const std::size_t cols = slices.front()->cols();
  Tensor4 batch(slices.size(), channels, rows, cols);
  for (std::size_t i = 0; i < slices.size(); ++i) {
    if (slices[i]->rows() != rows || slices[i]->cols() != cols) {
      fail(Errc::ShapeMismatch, "batch slices differ in size");
    }
    for (std::size_t ch = 0; ch < channels; ++ch) {
      std::copy(slices[i]->values().begin(), slices[i]->values().end(), batch.plane(i, ch));
    }
  }
  return batch;
}

Tensor4 make_batch(std::span<const UnitSlice> slices, std::size_t channels) {
  std::vector<const UnitSlice*> ptrs;
  ptrs.reserve(slices.size());
  for (const auto& s : slices) ptrs.push_back(&s);
  return make_batch(ptrs, channels);
}

// ---- kernels ----

namespace {

// Convolutions run on a row-stride layout: output (y, x) sits at y * stride + x
// of a stride-wide scratch plane, so every kernel tap is one contiguous sweep
// of length span(). Columns x >= out_size of the scratch are never read back.
struct ConvGeometry {
  std::size_t size, kernel, out_size;

  std::size_t span() const noexcept { return (out_size - 1) * size + out_size; }
  std::size_t in_plane() const noexcept { return size * size; }
  std::size_t out_plane() const noexcept { return out_size * out_size; }
};

// Replicated grayscale input: every channel plane identical.
bool channels_identical(const double* in, std::size_t channels, std::size_t plane) {
  for (std::size_t c = 1; c < channels; ++c) {
    if (std::memcmp(in, in + c * plane, plane * sizeof(double)) != 0) return false;
  }
  return true;
}

// Fixed-width vectors via the GCC/Clang vector extension, as wide as the
// target's registers. Lane arithmetic is plain IEEE; only the grouping of
// partial sums depends on the width.
#if defined(__AVX512F__)
constexpr std::size_t kLanes = 8;
#else
constexpr std::size_t kLanes = 4;
#endif
using vec = double __attribute__((vector_size(kLanes * sizeof(double))));

inline vec loadv(const double* p) noexcept {
  vec v;
  std::memcpy(&v, p, sizeof v);
  return v;
}
inline void storev(double* p, vec v) noexcept { std::memcpy(p, &v, sizeof v); }
inline vec splat(double x) noexcept { return vec{} + x; }
inline double reduce(vec v) noexcept {
  for (std::size_t width = kLanes / 2; width > 0; width /= 2) {
    for (std::size_t i = 0; i < width; ++i) v[i] += v[i + width];
  }
  return v[0];
}

// out[o][j] = init[o] + sum_c sum_t w[o][c][t] * in[c][j + offset(t)] for j < n,
// where offset(ky, kx) = ky * stride + kx. Accumulation order per output is
// channel, kernel row, kernel column regardless of blocking.
// K > 0 fixes the kernel width at compile time; K == 0 reads it from kernel_arg.
template <std::size_t K>
void correlate_k(const double* in, std::size_t channels, std::size_t in_plane, std::size_t stride,
                 std::size_t kernel_arg, const double* weights, const double* init, std::size_t filters,
                 std::size_t n, double* out, std::size_t out_plane) {
  const std::size_t kernel = K > 0 ? K : kernel_arg;
  const std::size_t kk = kernel * kernel;
  constexpr std::size_t kBlock = 4 * kLanes;
  std::size_t o = 0;
  for (; o + 2 <= filters; o += 2) {
    const double* w0 = weights + o * channels * kk;
    const double* w1 = w0 + channels * kk;
    const double b0 = init ? init[o] : 0.0;
    const double b1 = init ? init[o + 1] : 0.0;
    double* out0 = out + o * out_plane;
    double* out1 = out0 + out_plane;
    std::size_t j = 0;
    for (; j + kBlock <= n; j += kBlock) {
      vec a0 = splat(b0), a1 = a0, a2 = a0, a3 = a0;
      vec c0 = splat(b1), c1 = c0, c2 = c0, c3 = c0;
      for (std::size_t c = 0; c < channels; ++c) {
        const double* src_c = in + c * in_plane + j;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          const double* row = src_c + ky * stride;
          const double* wr0 = w0 + c * kk + ky * kernel;
          const double* wr1 = w1 + c * kk + ky * kernel;
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const vec x0 = loadv(row + kx), x1 = loadv(row + kx + kLanes);
            const vec x2 = loadv(row + kx + 2 * kLanes), x3 = loadv(row + kx + 3 * kLanes);
            const vec u = splat(wr0[kx]);
            const vec v = splat(wr1[kx]);
            a0 += u * x0; a1 += u * x1; a2 += u * x2; a3 += u * x3;
            c0 += v * x0; c1 += v * x1; c2 += v * x2; c3 += v * x3;
          }
        }
      }
      storev(out0 + j, a0);
      storev(out0 + j + kLanes, a1);
      storev(out0 + j + 2 * kLanes, a2);
      storev(out0 + j + 3 * kLanes, a3);
      storev(out1 + j, c0);
      storev(out1 + j + kLanes, c1);
      storev(out1 + j + 2 * kLanes, c2);
      storev(out1 + j + 3 * kLanes, c3);
    }
    // Remaining outputs one vector at a time; the last vector overlaps the
    // previous one instead of reading past the input plane.
    const auto one_vector = [&](std::size_t at) {
      vec a = splat(b0), c = splat(b1);
      for (std::size_t ch = 0; ch < channels; ++ch) {
        const double* src_c = in + ch * in_plane + at;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          const double* row = src_c + ky * stride;
          const double* wr0 = w0 + ch * kk + ky * kernel;
          const double* wr1 = w1 + ch * kk + ky * kernel;
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const vec x = loadv(row + kx);
            a += splat(wr0[kx]) * x;
            c += splat(wr1[kx]) * x;
          }
        }
      }
      storev(out0 + at, a);
      storev(out1 + at, c);
    };
    for (; j + kLanes <= n; j += kLanes) one_vector(j);
    if (j < n && n >= kLanes) {
      one_vector(n - kLanes);
      j = n;
    }
    for (; j < n; ++j) {
      double s0 = b0, s1 = b1;
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          const double* row = in + c * in_plane + j + ky * stride;
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            s0 += w0[c * kk + ky * kernel + kx] * row[kx];
            s1 += w1[c * kk + ky * kernel + kx] * row[kx];
          }
        }
      }
      out0[j] = s0;
      out1[j] = s1;
    }
  }
  for (; o < filters; ++o) {
    const double* w0 = weights + o * channels * kk;
    double* out0 = out + o * out_plane;
    for (std::size_t j = 0; j < n; ++j) {
      double s0 = init ? init[o] : 0.0;
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          const double* row = in + c * in_plane + j + ky * stride;
          for (std::size_t kx = 0; kx < kernel; ++kx) s0 += w0[c * kk + ky * kernel + kx] * row[kx];
        }
      }
      out0[j] = s0;
    }
  }
}

void correlate(const double* in, std::size_t channels, std::size_t in_plane, std::size_t stride,
               std::size_t kernel, const double* weights, const double* init, std::size_t filters,
               std::size_t n, double* out, std::size_t out_plane) {
  switch (kernel) {
    case 3: return correlate_k<3>(in, channels, in_plane, stride, kernel, weights, init, filters, n, out, out_plane);
    case 4: return correlate_k<4>(in, channels, in_plane, stride, kernel, weights, init, filters, n, out, out_plane);
    case 5: return correlate_k<5>(in, channels, in_plane, stride, kernel, weights, init, filters, n, out, out_plane);
    default: return correlate_k<0>(in, channels, in_plane, stride, kernel, weights, init, filters, n, out, out_plane);
  }
}

// dw[ky][kx] += sum_j g[j] * src[j + ky * stride + kx] for j < n; kernel <= 8.
template <std::size_t K>
void correlate_grad_k(const double* g, const double* src, std::size_t stride, std::size_t kernel_arg,
                      std::size_t n, double* dw) {
  const std::size_t kernel = K > 0 ? K : kernel_arg;
  for (std::size_t ky = 0; ky < kernel; ++ky) {
    const double* row = src + ky * stride;
    vec acc[8];
    for (std::size_t kx = 0; kx < kernel; ++kx) acc[kx] = splat(0.0);
    std::size_t j = 0;
    for (; j + kLanes <= n; j += kLanes) {
      const vec gv = loadv(g + j);
      for (std::size_t kx = 0; kx < kernel; ++kx) acc[kx] += gv * loadv(row + j + kx);
    }
    for (std::size_t kx = 0; kx < kernel; ++kx) {
      double tail = 0.0;
      for (std::size_t t = j; t < n; ++t) tail += g[t] * row[t + kx];
      dw[ky * kernel + kx] += reduce(acc[kx]) + tail;
    }
  }
}

void correlate_grad(const double* g, const double* src, std::size_t stride, std::size_t kernel, std::size_t n,
                    double* dw) {
  switch (kernel) {
    case 3: return correlate_grad_k<3>(g, src, stride, kernel, n, dw);
    case 4: return correlate_grad_k<4>(g, src, stride, kernel, n, dw);
    case 5: return correlate_grad_k<5>(g, src, stride, kernel, n, dw);
    default: return correlate_grad_k<0>(g, src, stride, kernel, n, dw);
  }
}

// Scalar fallback for kernels wider than the vector accumulator array.
void correlate_grad_wide(const double* g, const double* src, std::size_t stride, std::size_t kernel,
                         std::size_t n, double* dw) {
  for (std::size_t ky = 0; ky < kernel; ++ky) {
    for (std::size_t kx = 0; kx < kernel; ++kx) {
      double acc = 0.0;
      const double* row = src + ky * stride + kx;
      for (std::size_t j = 0; j < n; ++j) acc += g[j] * row[j];
      dw[ky * kernel + kx] += acc;
    }
  }
}

// out[o] = bias[o] + sum_c in[c] (*) w[o][c], valid cross-correlation, compact output.
void conv_forward(const double* in, std::size_t channels, const ConvGeometry& g, const double* weights,
                  const double* bias, std::size_t filters, double* out, std::vector<double>& scratch) {
  const std::size_t kk = g.kernel * g.kernel;
  const std::size_t wide_plane = g.size * g.out_size;
  scratch.resize(wide_plane * filters + kk * filters);
  const double* w = weights;
  std::size_t eff_channels = channels;
  if (channels > 1 && channels_identical(in, channels, g.in_plane())) {
    double* folded = scratch.data() + wide_plane * filters;
    std::fill(folded, folded + kk * filters, 0.0);
    for (std::size_t o = 0; o < filters; ++o) {
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t t = 0; t < kk; ++t) folded[o * kk + t] += weights[(o * channels + c) * kk + t];
      }
    }
    w = folded;
    eff_channels = 1;
  }
  correlate(in, eff_channels, g.in_plane(), g.size, g.kernel, w, bias, filters, g.span(), scratch.data(),
            wide_plane);
  for (std::size_t o = 0; o < filters; ++o) {
    const double* acc = scratch.data() + o * wide_plane;
    double* dst = out + o * g.out_plane();
    for (std::size_t y = 0; y < g.out_size; ++y) {
      std::copy(acc + y * g.size, acc + y * g.size + g.out_size, dst + y * g.out_size);
    }
  }
}

// Weight and bias gradients of one sample, accumulated into d_weights/d_bias.
void conv_weight_grad(const double* in, std::size_t channels, const ConvGeometry& g, std::size_t filters,
                      const double* d_out, double* d_weights, double* d_bias, std::vector<double>& scratch) {
  const std::size_t k = g.kernel;
  const std::size_t kk = k * k;
  const std::size_t n = g.span();
  // Tail columns of the wide gradient plane must read as zero; they are never
  // written, so the buffer only needs clearing when it is first sized.
  if (scratch.size() != g.size * g.out_size + kk) scratch.assign(g.size * g.out_size + kk, 0.0);
  double* grad = scratch.data();
  double* dw = grad + g.size * g.out_size;
  // With identical channels one correlation serves every channel.
  const bool fold = channels > 1 && channels_identical(in, channels, g.in_plane());
  const std::size_t eff_channels = fold ? 1 : channels;
  for (std::size_t o = 0; o < filters; ++o) {
    const double* g_plane = d_out + o * g.out_plane();
    double bias_sum = 0.0;
    for (std::size_t y = 0; y < g.out_size; ++y) {
      for (std::size_t x = 0; x < g.out_size; ++x) {
        bias_sum += g_plane[y * g.out_size + x];
        grad[y * g.size + x] = g_plane[y * g.out_size + x];
      }
    }
    d_bias[o] += bias_sum;
    for (std::size_t c = 0; c < eff_channels; ++c) {
      const double* src = in + c * g.in_plane();
      std::fill(dw, dw + kk, 0.0);
      if (k <= 8) {
        correlate_grad(grad, src, g.size, k, n, dw);
      } else {
        correlate_grad_wide(grad, src, g.size, k, n, dw);
      }
      const std::size_t targets = fold ? channels : 1;
      for (std::size_t r = 0; r < targets; ++r) {
        double* dst = d_weights + (o * channels + c + r) * kk;
        for (std::size_t t = 0; t < kk; ++t) dst[t] += dw[t];
      }
    }
  }
}

// Backward through ReLU + max pooling + convolution for one sample, visiting
// only pooling winners with a positive pre-activation (every other conv
// output has zero gradient). Works channel-last so that the K adjacent taps of
// a kernel row form one contiguous run of K * C values.
//   w_t, dw_t: [o][ky][kx][c]; in_hwc, d_in_hwc: [y][x][c]
void sparse_conv_backward(const double* d_pooled, const std::uint32_t* argmax, const double* pre,
                          const Architecture::Stage& s, const double* in_hwc, const double* w_t, double* dw_t,
                          double* d_bias, double* d_in_hwc) {
  const std::size_t channels = s.in_channels;
  const std::size_t k = s.kernel;
  const std::size_t run = k * channels;
  const std::size_t pooled_plane = s.pool_size * s.pool_size;
  const std::size_t conv_plane = s.conv_size * s.conv_size;
  for (std::size_t o = 0; o < s.filters; ++o) {
    const double* g_plane = d_pooled + o * pooled_plane;
    const std::uint32_t* idx = argmax + o * pooled_plane;
    const double* pre_plane = pre + o * conv_plane;
    for (std::size_t cell = 0; cell < pooled_plane; ++cell) {
      const double g = g_plane[cell];
      const std::size_t p = idx[cell];
      if (g == 0.0 || pre_plane[p] <= 0.0) continue;
      d_bias[o] += g;
      const std::size_t py = p / s.conv_size;
      const std::size_t px = p % s.conv_size;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::size_t base = ((py + ky) * s.in_size + px) * channels;
        const std::size_t wrow = (o * k + ky) * run;
        const double* x = in_hwc + base;
        const double* w = w_t + wrow;
        double* dw = dw_t + wrow;
        double* dx = d_in_hwc + base;
        for (std::size_t m = 0; m < run; ++m) dw[m] += g * x[m];
        for (std::size_t m = 0; m < run; ++m) dx[m] += g * w[m];
      }
    }
  }
}

// ReLU then 2x2/2 max pooling; argmax stores the in-plane offset of the winner.
void relu_pool_forward(const double* pre, std::size_t size, double* pooled, std::uint32_t* argmax) {
  const std::size_t out = size / 2;
  for (std::size_t y = 0; y < out; ++y) {
    for (std::size_t x = 0; x < out; ++x) {
      const std::size_t base = 2 * y * size + 2 * x;
      const std::size_t candidates[4] = {base, base + 1, base + size, base + size + 1};
      std::size_t best = candidates[0];
      for (std::size_t k = 1; k < 4; ++k) {
        if (pre[candidates[k]] > pre[best]) best = candidates[k];
      }
      pooled[y * out + x] = std::max(pre[best], 0.0);
      argmax[y * out + x] = static_cast<std::uint32_t>(best);
    }
  }
}

}  // namespace

ForwardCache forward(const CnnModel& model, const Tensor4& batch) {
  const auto& arch = model.architecture();
  const auto stages = arch.stages();
  if (batch.n == 0) fail(Errc::EmptyInput, "empty batch");
  if (batch.c != arch.input_channels || batch.h != arch.input_size || batch.w != arch.input_size) {
    fail(Errc::ShapeMismatch, "batch is " + std::to_string(batch.c) + "x" + std::to_string(batch.h) +
                                  "x" + std::to_string(batch.w) + ", model expects " +
                                  std::to_string(arch.input_channels) + "x" +
                                  std::to_string(arch.input_size) + "x" + std::to_string(arch.input_size));
  }

  ForwardCache cache;
  cache.input = batch;
  cache.model_fingerprint = model.fingerprint();
  const std::size_t n = batch.n;
  for (std::size_t l = 0; l < stages.size(); ++l) {
    const auto& s = stages[l];
    const Tensor4& in = l == 0 ? cache.input : cache.pooled[l - 1];
    Tensor4 pre(n, s.filters, s.conv_size, s.conv_size);
    Tensor4 pooled(n, s.filters, s.pool_size, s.pool_size);
    std::vector<std::uint32_t> argmax(pooled.data.size());
    const auto weights = model.conv_weights(l);
    const auto bias = model.conv_bias(l);
    const ConvGeometry geometry{s.in_size, s.kernel, s.conv_size};
    std::vector<double> scratch;
    for (std::size_t i = 0; i < n; ++i) {
      conv_forward(in.plane(i, 0), s.in_channels, geometry, weights.data(), bias.data(), s.filters,
                   pre.plane(i, 0), scratch);
      for (std::size_t o = 0; o < s.filters; ++o) {
        relu_pool_forward(pre.plane(i, o), s.conv_size, pooled.plane(i, o),
                          argmax.data() + (i * s.filters + o) * pooled.plane_size());
      }
    }
    cache.pre.push_back(std::move(pre));
    cache.pooled.push_back(std::move(pooled));
    cache.argmax.push_back(std::move(argmax));
  }

  const auto dense = model.dense_weights();
  const Tensor4& features = cache.pooled.back();
  const std::size_t f = dense.size();
  cache.logits.resize(n);
  cache.probabilities.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = features.data.data() + i * f;
    double z = model.dense_bias();
    for (std::size_t k = 0; k < f; ++k) z += dense[k] * x[k];
    cache.logits[i] = z;
    cache.probabilities[i] = sigmoid(z);
  }
  return cache;
}

BackpropResult backprop(const CnnModel& model, const ForwardCache& cache,
                        std::span<const double> logit_gradients,
                        std::optional<std::size_t> capture_layer) {
  if (cache.model_fingerprint != model.fingerprint() || cache.pre.size() != model.architecture().convs.size()) {
    fail(Errc::StaleCache, "forward cache was produced by different parameters");
  }
  const std::size_t n = cache.batch_size();
  if (logit_gradients.size() != n) {
    fail(Errc::LengthMismatch, std::to_string(logit_gradients.size()) + " gradients for a batch of " +
                                   std::to_string(n));
  }
  const auto stages = model.architecture().stages();
  if (capture_layer && *capture_layer >= stages.size()) {
    fail(Errc::UnknownLayer, "capture layer " + std::to_string(*capture_layer));
  }

  BackpropResult result;
  result.parameter_gradients.assign(model.parameters().size(), 0.0);
  auto& grads = result.parameter_gradients;
  const auto& slots = model.slots();
  const auto& dense_slot = slots[slots.size() - 2];

  // Dense layer.
  const auto dense = model.dense_weights();
  const std::size_t f = dense.size();
  Tensor4 d_pooled(n, stages.back().filters, stages.back().pool_size, stages.back().pool_size);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = logit_gradients[i];
    const double* x = cache.pooled.back().data.data() + i * f;
    double* dx = d_pooled.data.data() + i * f;
    for (std::size_t k = 0; k < f; ++k) {
      grads[dense_slot.offset + k] += g * x[k];
      dx[k] = g * dense[k];
    }
    grads.back() += g;
  }

  for (std::size_t l = stages.size(); l-- > 0;) {
    const auto& s = stages[l];
    const Tensor4& pre = cache.pre[l];
    const auto& argmax = cache.argmax[l];
    const std::size_t pooled_plane = s.pool_size * s.pool_size;
    const std::size_t conv_plane = s.conv_size * s.conv_size;
    const bool capture = capture_layer && *capture_layer == l;
    const bool sparse = l > 0;

    // Dense d(loss)/d(ReLU output): needed for the first layer's dense kernels
    // and for a captured layer.
    Tensor4 d_act;
    if (!sparse || capture) {
      d_act = Tensor4(n, s.filters, s.conv_size, s.conv_size);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t o = 0; o < s.filters; ++o) {
          const double* g = d_pooled.plane(i, o);
          const std::uint32_t* idx = argmax.data() + (i * s.filters + o) * pooled_plane;
          double* d = d_act.plane(i, o);
          for (std::size_t k = 0; k < pooled_plane; ++k) d[idx[k]] += g[k];
        }
      }
      if (capture) result.activation_gradient = d_act;
    }

    const Tensor4& in = l == 0 ? cache.input : cache.pooled[l - 1];
    const auto weights = model.conv_weights(l);
    double* d_weights = grads.data() + slots[2 * l].offset;
    double* d_bias = grads.data() + slots[2 * l + 1].offset;
    const std::size_t kk = s.kernel * s.kernel;

    if (!sparse) {
      Tensor4& d_pre = d_act;
      for (std::size_t k = 0; k < d_pre.data.size(); ++k) {
        if (pre.data[k] <= 0.0) d_pre.data[k] = 0.0;
      }
      const ConvGeometry geometry{s.in_size, s.kernel, s.conv_size};
      std::vector<double> scratch;
      for (std::size_t i = 0; i < n; ++i) {
        conv_weight_grad(in.plane(i, 0), s.in_channels, geometry, s.filters, d_pre.plane(i, 0), d_weights,
                         d_bias, scratch);
      }
      continue;
    }

    const std::size_t channels = s.in_channels;
    const std::size_t in_plane = s.in_size * s.in_size;
    std::vector<double> w_t(weights.size());
    std::vector<double> dw_t(weights.size(), 0.0);
    for (std::size_t o = 0; o < s.filters; ++o) {
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t t = 0; t < kk; ++t) w_t[(o * kk + t) * channels + c] = weights[(o * channels + c) * kk + t];
      }
    }
    Tensor4 d_in(n, channels, s.in_size, s.in_size);
    std::vector<double> in_hwc(in_plane * channels);
    std::vector<double> d_in_hwc(in_plane * channels);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double* src = in.plane(i, c);
        for (std::size_t p = 0; p < in_plane; ++p) in_hwc[p * channels + c] = src[p];
      }
      std::fill(d_in_hwc.begin(), d_in_hwc.end(), 0.0);
      sparse_conv_backward(d_pooled.plane(i, 0), argmax.data() + i * s.filters * pooled_plane,
                           pre.data.data() + i * s.filters * conv_plane, s, in_hwc.data(), w_t.data(),
                           dw_t.data(), d_bias, d_in_hwc.data());
      for (std::size_t c = 0; c < channels; ++c) {
        double* dst = d_in.plane(i, c);
        for (std::size_t p = 0; p < in_plane; ++p) dst[p] = d_in_hwc[p * channels + c];
      }
    }
    for (std::size_t o = 0; o < s.filters; ++o) {
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t t = 0; t < kk; ++t) d_weights[(o * channels + c) * kk + t] += dw_t[(o * kk + t) * channels + c];
      }
    }
    d_pooled = std::move(d_in);
  }
  return result;
}

std::vector<double> backward(const CnnModel& model, const ForwardCache& cache,
                             std::span<const double> labels) {
  const std::size_t n = cache.batch_size();
  if (labels.size() != n) {
    fail(Errc::LengthMismatch, std::to_string(labels.size()) + " labels for a batch of " + std::to_string(n));
  }
  // d(mean BCE)/d(logit) = (sigmoid(z) - y) / n
  std::vector<double> dz(n);
  for (std::size_t i = 0; i < n; ++i) {
    dz[i] = (cache.probabilities[i] - labels[i]) / static_cast<double>(n);
  }
  return backprop(model, cache, dz).parameter_gradients;
}

// ---- loss ----

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_loss(double probability, double label) noexcept {
  const double p = std::clamp(probability, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
  return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
}

double bce_with_logits(double logit, double label) noexcept {
  return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

double mean_bce_with_logits(std::span<const double> logits, std::span<const double> labels) {
  if (logits.size() != labels.size()) fail(Errc::LengthMismatch, "logits and labels differ in length");
  if (logits.empty()) fail(Errc::EmptyInput, "no logits");
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += bce_with_logits(logits[i], labels[i]);
  return sum / static_cast<double>(logits.size());
}

// ---- optimiser ----

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               std::int64_t step, const AdamConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    fail(Errc::ShapeMismatch, "Adam parameter, gradient and moment sizes differ");
  }
  if (step < 1) fail(Errc::BadConfig, "Adam step index starts at 1");
  const double t = static_cast<double>(step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

// ---- serialisation ----

namespace {
constexpr char kModelMagic[4] = {'T', 'C', 'N', 'N'};
}

std::vector<std::uint8_t> encode_model(const CnnModel& model) {
  const auto& arch = model.architecture();
  std::vector<std::uint8_t> out(std::begin(kModelMagic), std::end(kModelMagic));
  le::put<std::uint32_t>(out, kModelFormatVersion);
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(arch.input_size));
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(arch.input_channels));
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(arch.convs.size()));
  for (const auto& c : arch.convs) {
    le::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.filters));
    le::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.kernel));
  }
  for (const double p : model.parameters()) le::put<double>(out, p);
  return out;
}

CnnModel decode_model(std::span<const std::uint8_t> bytes) {
  auto need = [&bytes](std::size_t end) {
    if (bytes.size() < end) fail(Errc::Malformed, "model file truncated");
  };
  need(20);
  if (std::memcmp(bytes.data(), kModelMagic, 4) != 0) fail(Errc::Malformed, "bad model magic");
  const auto version = le::get<std::uint32_t>(bytes, 4);
  if (version != kModelFormatVersion) {
    fail(Errc::Malformed, "unsupported model format version " + std::to_string(version));
  }
  Architecture arch;
  arch.input_size = le::get<std::uint32_t>(bytes, 8);
  arch.input_channels = le::get<std::uint32_t>(bytes, 12);
  const std::size_t layers = le::get<std::uint32_t>(bytes, 16);
  if (layers > 64) fail(Errc::Malformed, "implausible conv layer count");
  std::size_t pos = 20;
  need(pos + 8 * layers);
  arch.convs.clear();
  for (std::size_t i = 0; i < layers; ++i, pos += 8) {
    arch.convs.push_back({le::get<std::uint32_t>(bytes, pos), le::get<std::uint32_t>(bytes, pos + 4)});
  }
  CnnModel model(arch);
  auto params = model.parameters();
  if (bytes.size() != pos + 8 * params.size()) {
    fail(Errc::Malformed, "model parameter payload has wrong length");
  }
  for (std::size_t i = 0; i < params.size(); ++i, pos += 8) params[i] = le::get<double>(bytes, pos);
  return model;
}

void save_model(const std::filesystem::path& path, const CnnModel& model) {
  const auto bytes = encode_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::Io, "short write to " + path.string());
}

CnnModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_model(bytes);
}

}  // namespace leuko
