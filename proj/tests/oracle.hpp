#pragma once

// Independent reference implementations the test suites check the library
// against. These stay deliberately naive and must not share code with the
// kernels under test.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "usgrip/ops.hpp"
#include "usgrip/tensor.hpp"

namespace oracle {

// Six nested loops, zero-padded "same" handled by bounds checks. Summation
// order per output element: kernel rows, kernel cols, input channel.
template <typename T>
usgrip::TensorT<T> conv2d_ref(const usgrip::TensorT<T>& input, const usgrip::TensorT<T>& kernels,
                              const usgrip::TensorT<T>& bias, usgrip::Padding pad, int stride) {
  const int h = input.dim(0), w = input.dim(1), cin = input.dim(2);
  const int kh = kernels.dim(0), kw = kernels.dim(1), cout = kernels.dim(3);

  int out_h, out_w, pad_top = 0, pad_left = 0;
  if (pad == usgrip::Padding::same) {
    out_h = (h + stride - 1) / stride;
    out_w = (w + stride - 1) / stride;
    const int pad_h = std::max(0, (out_h - 1) * stride + kh - h);
    const int pad_w = std::max(0, (out_w - 1) * stride + kw - w);
    pad_top = pad_h / 2;
    pad_left = pad_w / 2;
  } else {
    out_h = (h - kh) / stride + 1;
    out_w = (w - kw) / stride + 1;
  }

  usgrip::TensorT<T> out({out_h, out_w, cout});
  for (int oh = 0; oh < out_h; ++oh)
    for (int ow = 0; ow < out_w; ++ow)
      for (int c = 0; c < cout; ++c) {
        T acc = T(0);
        for (int r = 0; r < kh; ++r)
          for (int s = 0; s < kw; ++s)
            for (int ci = 0; ci < cin; ++ci) {
              const int ih = oh * stride - pad_top + r;
              const int iw = ow * stride - pad_left + s;
              if (ih < 0 || ih >= h || iw < 0 || iw >= w) continue;
              acc += input.at3(ih, iw, ci) * kernels.at4(r, s, ci, c);
            }
        out.at3(oh, ow, c) = acc + bias[c];
      }
  return out;
}

template <typename T>
usgrip::TensorT<T> maxpool2d_ref(const usgrip::TensorT<T>& input) {
  const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
  usgrip::TensorT<T> out({h / 2, w / 2, c});
  for (int y = 0; y < h / 2; ++y)
    for (int x = 0; x < w / 2; ++x)
      for (int ch = 0; ch < c; ++ch) {
        T best = input.at3(2 * y, 2 * x, ch);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) best = std::max(best, input.at3(2 * y + dy, 2 * x + dx, ch));
        out.at3(y, x, ch) = best;
      }
  return out;
}

template <typename T>
usgrip::TensorT<T> dense_ref(const usgrip::TensorT<T>& input, const usgrip::TensorT<T>& weights,
                             const usgrip::TensorT<T>& bias) {
  const int n = input.dim(0), m = weights.dim(1);
  usgrip::TensorT<T> out({m});
  for (int j = 0; j < m; ++j) {
    T acc = T(0);
    for (int i = 0; i < n; ++i) acc += input[i] * weights.at2(i, j);
    out[j] = acc + bias[j];
  }
  return out;
}

// Central finite differences of a scalar-valued function of a flat parameter
// vector. Used with the double instantiations of the backward primitives.
inline std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double eps = 1e-5) {
  std::vector<double> g(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double fp = f(x);
    x[i] = orig - eps;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

inline double max_rel_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace oracle
