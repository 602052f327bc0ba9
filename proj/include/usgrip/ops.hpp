#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <vector>

#include "usgrip/tensor.hpp"

namespace usgrip {

enum class Padding { same, valid };
enum class BnMode { train, infer };

struct ConvGeom {
  int out_h = 0, out_w = 0;
  int pad_top = 0, pad_left = 0;
};

// "Same" padding keeps out = ceil(in / stride); total padding splits evenly
// with the extra row/column on the bottom/right.
inline ConvGeom conv_geometry(int h, int w, int kh, int kw, Padding pad, int stride) {
  require(stride >= 1, Errc::bad_config, "stride must be >= 1");
  ConvGeom g;
  if (pad == Padding::same) {
    g.out_h = (h + stride - 1) / stride;
    g.out_w = (w + stride - 1) / stride;
    const int pad_h = std::max(0, (g.out_h - 1) * stride + kh - h);
    const int pad_w = std::max(0, (g.out_w - 1) * stride + kw - w);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
  } else {
    require(kh <= h && kw <= w, Errc::shape_mismatch, "kernel larger than unpadded input");
    g.out_h = (h - kh) / stride + 1;
    g.out_w = (w - kw) / stride + 1;
  }
  return g;
}

// input [H,W,Cin], kernels [kh,kw,Cin,Cout], bias [Cout] -> [H',W',Cout].
// Each output element accumulates kernel row-major, input channel innermost;
// the output-channel loop is innermost in code but every output element keeps
// that exact scalar summation order.
template <std::floating_point T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& kernels, const TensorT<T>& bias,
                  Padding pad, int stride) {
  require(input.rank() == 3, Errc::shape_mismatch, "conv2d input must be [H,W,Cin]");
  require(kernels.rank() == 4, Errc::shape_mismatch, "conv2d kernels must be [kh,kw,Cin,Cout]");
  const int h = input.dim(0), w = input.dim(1), cin = input.dim(2);
  const int kh = kernels.dim(0), kw = kernels.dim(1), cout = kernels.dim(3);
  require(kernels.dim(2) == cin, Errc::shape_mismatch,
          "kernel Cin " + std::to_string(kernels.dim(2)) + " != input Cin " + std::to_string(cin));
  require(bias.rank() == 1 && bias.dim(0) == cout, Errc::shape_mismatch, "bias must be [Cout]");

  const ConvGeom g = conv_geometry(h, w, kh, kw, pad, stride);
  require(kh <= h + 2 * g.pad_top + 1 && kw <= w + 2 * g.pad_left + 1, Errc::shape_mismatch,
          "kernel larger than padded input");
  TensorT<T> out({g.out_h, g.out_w, cout});

  const T* in = input.data();
  const T* k = kernels.data();
  T* o = out.data();
  std::vector<T> acc(static_cast<size_t>(cout));

  for (int oh = 0; oh < g.out_h; ++oh) {
    for (int ow = 0; ow < g.out_w; ++ow) {
      for (int c = 0; c < cout; ++c) acc[static_cast<size_t>(c)] = T(0);
      const int ih0 = oh * stride - g.pad_top;
      const int iw0 = ow * stride - g.pad_left;
      for (int r = 0; r < kh; ++r) {
        const int ih = ih0 + r;
        if (ih < 0 || ih >= h) continue;
        for (int s = 0; s < kw; ++s) {
          const int iw = iw0 + s;
          if (iw < 0 || iw >= w) continue;
          const T* in_px = in + (static_cast<int64_t>(ih) * w + iw) * cin;
          const T* k_rs = k + ((static_cast<int64_t>(r) * kw + s) * cin) * cout;
          for (int ci = 0; ci < cin; ++ci) {
            const T v = in_px[ci];
            const T* k_ci = k_rs + static_cast<int64_t>(ci) * cout;
            for (int c = 0; c < cout; ++c) acc[static_cast<size_t>(c)] += v * k_ci[c];
          }
        }
      }
      T* out_px = o + (static_cast<int64_t>(oh) * g.out_w + ow) * cout;
      for (int c = 0; c < cout; ++c) out_px[c] = acc[static_cast<size_t>(c)] + bias[c];
    }
  }
  return out;
}

// 2x2 window, stride 2. Ties resolve to the first maximum in window
// row-major order. The argmax map feeds backprop.
template <std::floating_point T>
struct MaxPoolResultT {
  TensorT<T> out;
  std::vector<int32_t> argmax;  // flat input offset per output element
};

template <std::floating_point T>
MaxPoolResultT<T> maxpool2d_with_argmax(const TensorT<T>& input) {
  require(input.rank() == 3, Errc::shape_mismatch, "maxpool2d input must be [H,W,C]");
  const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
  require(h >= 2 && w >= 2, Errc::shape_mismatch, "maxpool2d needs H,W >= 2");
  const int oh = h / 2, ow = w / 2;
  MaxPoolResultT<T> r{TensorT<T>({oh, ow, c}), {}};
  r.argmax.assign(static_cast<size_t>(r.out.size()), 0);

  const T* in = input.data();
  T* o = r.out.data();
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        int32_t best = static_cast<int32_t>((static_cast<int64_t>(2 * y) * w + 2 * x) * c + ch);
        T best_v = in[best];
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int32_t idx =
                static_cast<int32_t>((static_cast<int64_t>(2 * y + dy) * w + 2 * x + dx) * c + ch);
            if (in[idx] > best_v) {
              best_v = in[idx];
              best = idx;
            }
          }
        }
        const int64_t oidx = (static_cast<int64_t>(y) * ow + x) * c + ch;
        o[oidx] = best_v;
        r.argmax[static_cast<size_t>(oidx)] = best;
      }
    }
  }
  return r;
}

template <std::floating_point T>
TensorT<T> maxpool2d(const TensorT<T>& input) {
  return maxpool2d_with_argmax(input).out;
}

// Per-channel batch statistics over every axis except the last. Population
// (biased) variance is used both for normalization and the running estimate.
template <std::floating_point T>
struct BnBatchStats {
  std::vector<T> mean;
  std::vector<T> inv_std;  // 1/sqrt(var + eps)
};

namespace detail {
template <std::floating_point T>
void bn_check(const TensorT<T>& input, const TensorT<T>& gamma, const TensorT<T>& beta,
              const TensorT<T>& running_mean, const TensorT<T>& running_var, T epsilon) {
  require(epsilon > T(0), Errc::bad_config, "batchnorm epsilon must be positive");
  require(input.rank() >= 1, Errc::shape_mismatch, "batchnorm input must have a channel axis");
  const int c = input.dim(input.rank() - 1);
  require(gamma.size() == c && beta.size() == c, Errc::shape_mismatch, "gamma/beta must be [C]");
  require(running_mean.size() == c && running_var.size() == c, Errc::shape_mismatch,
          "running stats must be [C]");
}
}  // namespace detail

template <std::floating_point T>
TensorT<T> batchnorm_infer(const TensorT<T>& input, const TensorT<T>& gamma,
                           const TensorT<T>& beta, const TensorT<T>& running_mean,
                           const TensorT<T>& running_var, T epsilon) {
  detail::bn_check(input, gamma, beta, running_mean, running_var, epsilon);
  const int c = input.dim(input.rank() - 1);
  const int64_t rows = input.size() / c;
  TensorT<T> out(input.shape());
  const T* in = input.data();
  T* o = out.data();
  std::vector<T> scale(static_cast<size_t>(c)), shift(static_cast<size_t>(c));
  for (int ch = 0; ch < c; ++ch) {
    const T istd = T(1) / std::sqrt(running_var[ch] + epsilon);
    scale[static_cast<size_t>(ch)] = gamma[ch] * istd;
    shift[static_cast<size_t>(ch)] = beta[ch] - running_mean[ch] * scale[static_cast<size_t>(ch)];
  }
  for (int64_t r = 0; r < rows; ++r) {
    const T* row = in + r * c;
    T* orow = o + r * c;
    for (int ch = 0; ch < c; ++ch) orow[ch] = row[ch] * scale[static_cast<size_t>(ch)] + shift[static_cast<size_t>(ch)];
  }
  return out;
}

template <std::floating_point T>
TensorT<T> batchnorm_train(const TensorT<T>& input, const TensorT<T>& gamma,
                           const TensorT<T>& beta, TensorT<T>& running_mean,
                           TensorT<T>& running_var, T epsilon, T momentum,
                           BnBatchStats<T>* stats_out = nullptr) {
  detail::bn_check(input, gamma, beta, running_mean, running_var, epsilon);
  const int c = input.dim(input.rank() - 1);
  const int64_t rows = input.size() / c;
  TensorT<T> out(input.shape());
  const T* in = input.data();
  T* o = out.data();

  std::vector<T> mean(static_cast<size_t>(c), T(0)), var(static_cast<size_t>(c), T(0));
  for (int64_t r = 0; r < rows; ++r) {
    const T* row = in + r * c;
    for (int ch = 0; ch < c; ++ch) mean[static_cast<size_t>(ch)] += row[ch];
  }
  for (int ch = 0; ch < c; ++ch) mean[static_cast<size_t>(ch)] /= static_cast<T>(rows);
  for (int64_t r = 0; r < rows; ++r) {
    const T* row = in + r * c;
    for (int ch = 0; ch < c; ++ch) {
      const T d = row[ch] - mean[static_cast<size_t>(ch)];
      var[static_cast<size_t>(ch)] += d * d;
    }
  }
  for (int ch = 0; ch < c; ++ch) var[static_cast<size_t>(ch)] /= static_cast<T>(rows);

  std::vector<T> istd(static_cast<size_t>(c));
  for (int ch = 0; ch < c; ++ch) istd[static_cast<size_t>(ch)] = T(1) / std::sqrt(var[static_cast<size_t>(ch)] + epsilon);

  for (int64_t r = 0; r < rows; ++r) {
    const T* row = in + r * c;
    T* orow = o + r * c;
    for (int ch = 0; ch < c; ++ch) {
      orow[ch] = gamma[ch] * (row[ch] - mean[static_cast<size_t>(ch)]) * istd[static_cast<size_t>(ch)] + beta[ch];
    }
  }
  for (int ch = 0; ch < c; ++ch) {
    running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * mean[static_cast<size_t>(ch)];
    running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * var[static_cast<size_t>(ch)];
  }
  if (stats_out) {
    stats_out->mean = std::move(mean);
    stats_out->inv_std = std::move(istd);
  }
  return out;
}

template <std::floating_point T>
TensorT<T> batchnorm(const TensorT<T>& input, const TensorT<T>& gamma, const TensorT<T>& beta,
                     TensorT<T>& running_mean, TensorT<T>& running_var, BnMode mode, T epsilon,
                     T momentum, BnBatchStats<T>* stats_out = nullptr) {
  if (mode == BnMode::infer) {
    return batchnorm_infer(input, gamma, beta, running_mean, running_var, epsilon);
  }
  return batchnorm_train(input, gamma, beta, running_mean, running_var, epsilon, momentum,
                         stats_out);
}

template <std::floating_point T>
TensorT<T> relu(const TensorT<T>& input) {
  TensorT<T> out(input.shape());
  for (int64_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  return out;
}

// input [N], weights [N,M], bias [M] -> [M]. Terms accumulate in ascending
// input-index order per output element.
template <std::floating_point T>
TensorT<T> dense(const TensorT<T>& input, const TensorT<T>& weights, const TensorT<T>& bias) {
  require(input.rank() == 1, Errc::shape_mismatch, "dense input must be [N]");
  require(weights.rank() == 2, Errc::shape_mismatch, "dense weights must be [N,M]");
  const int n = input.dim(0), m = weights.dim(1);
  require(weights.dim(0) == n, Errc::shape_mismatch,
          "weights rows " + std::to_string(weights.dim(0)) + " != input length " + std::to_string(n));
  require(bias.rank() == 1 && bias.dim(0) == m, Errc::shape_mismatch, "bias must be [M]");

  TensorT<T> out({m});
  const T* x = input.data();
  const T* wp = weights.data();
  T* o = out.data();
  for (int j = 0; j < m; ++j) o[j] = T(0);
  for (int i = 0; i < n; ++i) {
    const T v = x[i];
    const T* wrow = wp + static_cast<int64_t>(i) * m;
    for (int j = 0; j < m; ++j) o[j] += v * wrow[j];
  }
  for (int j = 0; j < m; ++j) o[j] += bias[j];
  return out;
}

template <std::floating_point T>
TensorT<T> flatten(const TensorT<T>& input) {
  return input.reshaped({static_cast<int>(input.size())});
}

// Max-subtraction for stability. Rejects non-finite input.
template <std::floating_point T>
TensorT<T> softmax(const TensorT<T>& input) {
  require(input.size() > 0, Errc::shape_mismatch, "softmax input empty");
  for (int64_t i = 0; i < input.size(); ++i) {
    require(std::isfinite(input[i]), Errc::numeric, "softmax input must be finite");
  }
  TensorT<T> out(input.shape());
  T mx = input[0];
  for (int64_t i = 1; i < input.size(); ++i) mx = std::max(mx, input[i]);
  T sum = T(0);
  for (int64_t i = 0; i < input.size(); ++i) {
    out[i] = std::exp(input[i] - mx);
    sum += out[i];
  }
  for (int64_t i = 0; i < input.size(); ++i) out[i] /= sum;
  return out;
}

}  // namespace usgrip
