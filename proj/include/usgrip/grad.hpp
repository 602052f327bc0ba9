#pragma once

#include <cmath>
#include <concepts>
#include <span>
#include <vector>

#include "usgrip/ops.hpp"
#include "usgrip/tensor.hpp"

namespace usgrip {

template <std::floating_point T>
struct Conv2dGrads {
  TensorT<T> dinput;
  TensorT<T> dkernels;
  TensorT<T> dbias;
};

template <std::floating_point T>
Conv2dGrads<T> conv2d_grad(const TensorT<T>& input, const TensorT<T>& kernels,
                           const TensorT<T>& dout, Padding pad, int stride) {
  const int h = input.dim(0), w = input.dim(1), cin = input.dim(2);
  const int kh = kernels.dim(0), kw = kernels.dim(1), cout = kernels.dim(3);
  require(kernels.dim(2) == cin, Errc::shape_mismatch, "kernel Cin != input Cin");
  const ConvGeom g = conv_geometry(h, w, kh, kw, pad, stride);
  require(dout.rank() == 3 && dout.dim(0) == g.out_h && dout.dim(1) == g.out_w &&
              dout.dim(2) == cout,
          Errc::shape_mismatch, "upstream gradient shape mismatch");

  Conv2dGrads<T> grads{TensorT<T>(input.shape()), TensorT<T>(kernels.shape()),
                       TensorT<T>({cout})};

  const T* in = input.data();
  const T* dy = dout.data();
  T* dk = grads.dkernels.data();
  T* dx = grads.dinput.data();
  T* db = grads.dbias.data();

  // Kernel transposed to [kh,kw,Cout,Cin] so the dinput update runs over a
  // contiguous Cin lane.
  std::vector<T> kt(static_cast<size_t>(kernels.size()));
  {
    const T* k = kernels.data();
    for (int r = 0; r < kh; ++r)
      for (int s = 0; s < kw; ++s)
        for (int ci = 0; ci < cin; ++ci)
          for (int c = 0; c < cout; ++c)
            kt[((static_cast<size_t>(r) * kw + s) * cout + c) * cin + ci] =
                k[((static_cast<int64_t>(r) * kw + s) * cin + ci) * cout + c];
  }

  for (int oh = 0; oh < g.out_h; ++oh) {
    for (int ow = 0; ow < g.out_w; ++ow) {
      const T* dy_px = dy + (static_cast<int64_t>(oh) * g.out_w + ow) * cout;
      for (int c = 0; c < cout; ++c) db[c] += dy_px[c];
      const int ih0 = oh * stride - g.pad_top;
      const int iw0 = ow * stride - g.pad_left;
      for (int r = 0; r < kh; ++r) {
        const int ih = ih0 + r;
        if (ih < 0 || ih >= h) continue;
        for (int s = 0; s < kw; ++s) {
          const int iw = iw0 + s;
          if (iw < 0 || iw >= w) continue;
          const T* in_px = in + (static_cast<int64_t>(ih) * w + iw) * cin;
          T* dx_px = dx + (static_cast<int64_t>(ih) * w + iw) * cin;
          T* dk_rs = dk + ((static_cast<int64_t>(r) * kw + s) * cin) * cout;
          const T* kt_rs = kt.data() + ((static_cast<size_t>(r) * kw + s) * cout) * cin;
          for (int ci = 0; ci < cin; ++ci) {
            const T v = in_px[ci];
            T* dk_ci = dk_rs + static_cast<int64_t>(ci) * cout;
            for (int c = 0; c < cout; ++c) dk_ci[c] += v * dy_px[c];
          }
          for (int c = 0; c < cout; ++c) {
            const T gy = dy_px[c];
            const T* kt_c = kt_rs + static_cast<size_t>(c) * cin;
            for (int ci = 0; ci < cin; ++ci) dx_px[ci] += kt_c[ci] * gy;
          }
        }
      }
    }
  }
  return grads;
}

template <std::floating_point T>
TensorT<T> maxpool2d_grad(const std::vector<int>& input_shape,
                          const std::vector<int32_t>& argmax, const TensorT<T>& dout) {
  require(!argmax.empty(), Errc::missing_cache, "maxpool backward needs the forward argmax map");
  require(static_cast<int64_t>(argmax.size()) == dout.size(), Errc::shape_mismatch,
          "argmax map does not match upstream gradient");
  TensorT<T> dinput(input_shape);
  for (int64_t i = 0; i < dout.size(); ++i) {
    dinput[argmax[static_cast<size_t>(i)]] += dout[i];
  }
  return dinput;
}

template <std::floating_point T>
struct BnGrads {
  TensorT<T> dinput;
  TensorT<T> dgamma;
  TensorT<T> dbeta;
};

// Train-mode backward through the batch statistics.
template <std::floating_point T>
BnGrads<T> batchnorm_grad(const TensorT<T>& input, const TensorT<T>& gamma,
                          const BnBatchStats<T>& stats, const TensorT<T>& dout) {
  const int c = input.dim(input.rank() - 1);
  require(!stats.mean.empty() && !stats.inv_std.empty(), Errc::missing_cache,
          "batchnorm backward needs cached batch statistics");
  require(static_cast<int>(stats.mean.size()) == c, Errc::shape_mismatch, "stats channel mismatch");
  require(dout.same_shape(input), Errc::shape_mismatch, "upstream gradient shape mismatch");

  const int64_t rows = input.size() / c;
  const T inv_rows = T(1) / static_cast<T>(rows);
  BnGrads<T> g{TensorT<T>(input.shape()), TensorT<T>({c}), TensorT<T>({c})};

  std::vector<T> sum_dy(static_cast<size_t>(c), T(0));
  std::vector<T> sum_dy_xhat(static_cast<size_t>(c), T(0));
  const T* in = input.data();
  const T* dy = dout.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* xrow = in + r * c;
    const T* dyrow = dy + r * c;
    for (int ch = 0; ch < c; ++ch) {
      const T xhat = (xrow[ch] - stats.mean[static_cast<size_t>(ch)]) * stats.inv_std[static_cast<size_t>(ch)];
      sum_dy[static_cast<size_t>(ch)] += dyrow[ch];
      sum_dy_xhat[static_cast<size_t>(ch)] += dyrow[ch] * xhat;
    }
  }
  for (int ch = 0; ch < c; ++ch) {
    g.dbeta[ch] = sum_dy[static_cast<size_t>(ch)];
    g.dgamma[ch] = sum_dy_xhat[static_cast<size_t>(ch)];
  }

  T* dx = g.dinput.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* xrow = in + r * c;
    const T* dyrow = dy + r * c;
    T* dxrow = dx + r * c;
    for (int ch = 0; ch < c; ++ch) {
      const size_t cc = static_cast<size_t>(ch);
      const T xhat = (xrow[ch] - stats.mean[cc]) * stats.inv_std[cc];
      dxrow[ch] = gamma[ch] * stats.inv_std[cc] *
                  (dyrow[ch] - inv_rows * sum_dy[cc] - xhat * inv_rows * sum_dy_xhat[cc]);
    }
  }
  return g;
}

// Infer-mode backward: the normalization is a fixed per-channel affine map.
template <std::floating_point T>
BnGrads<T> batchnorm_grad_infer(const TensorT<T>& input, const TensorT<T>& gamma,
                                const TensorT<T>& running_mean, const TensorT<T>& running_var,
                                T epsilon, const TensorT<T>& dout) {
  const int c = input.dim(input.rank() - 1);
  require(running_mean.size() > 0 && running_var.size() > 0, Errc::missing_cache,
          "batchnorm backward needs running statistics");
  const int64_t rows = input.size() / c;
  BnGrads<T> g{TensorT<T>(input.shape()), TensorT<T>({c}), TensorT<T>({c})};
  std::vector<T> istd(static_cast<size_t>(c));
  for (int ch = 0; ch < c; ++ch) istd[static_cast<size_t>(ch)] = T(1) / std::sqrt(running_var[ch] + epsilon);
  const T* in = input.data();
  const T* dy = dout.data();
  T* dx = g.dinput.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* xrow = in + r * c;
    const T* dyrow = dy + r * c;
    T* dxrow = dx + r * c;
    for (int ch = 0; ch < c; ++ch) {
      const size_t cc = static_cast<size_t>(ch);
      const T xhat = (xrow[ch] - running_mean[ch]) * istd[cc];
      g.dbeta[ch] += dyrow[ch];
      g.dgamma[ch] += dyrow[ch] * xhat;
      dxrow[ch] = dyrow[ch] * gamma[ch] * istd[cc];
    }
  }
  return g;
}

template <std::floating_point T>
struct DenseGrads {
  TensorT<T> dinput;
  TensorT<T> dweights;
  TensorT<T> dbias;
};

template <std::floating_point T>
DenseGrads<T> dense_grad(const TensorT<T>& input, const TensorT<T>& weights,
                         const TensorT<T>& dout) {
  const int n = input.dim(0), m = weights.dim(1);
  require(weights.dim(0) == n, Errc::shape_mismatch, "weights rows != input length");
  require(dout.rank() == 1 && dout.dim(0) == m, Errc::shape_mismatch,
          "upstream gradient shape mismatch");
  DenseGrads<T> g{TensorT<T>({n}), TensorT<T>(weights.shape()), TensorT<T>({m})};
  const T* x = input.data();
  const T* wp = weights.data();
  const T* dy = dout.data();
  T* dw = g.dweights.data();
  for (int j = 0; j < m; ++j) g.dbias[j] = dy[j];
  for (int i = 0; i < n; ++i) {
    const T v = x[i];
    const T* wrow = wp + static_cast<int64_t>(i) * m;
    T* dwrow = dw + static_cast<int64_t>(i) * m;
    T acc = T(0);
    for (int j = 0; j < m; ++j) {
      dwrow[j] += v * dy[j];
      acc += wrow[j] * dy[j];
    }
    g.dinput[i] = acc;
  }
  return g;
}

template <std::floating_point T>
TensorT<T> relu_grad(const TensorT<T>& input, const TensorT<T>& dout) {
  require(dout.same_shape(input), Errc::shape_mismatch, "upstream gradient shape mismatch");
  TensorT<T> dx(input.shape());
  for (int64_t i = 0; i < input.size(); ++i) dx[i] = input[i] > T(0) ? dout[i] : T(0);
  return dx;
}

// Mean categorical cross-entropy over the batch: -log(p_true)/N summed.
template <std::floating_point T>
T cross_entropy_loss(const TensorT<T>& probs, std::span<const uint8_t> labels) {
  require(probs.rank() == 2, Errc::shape_mismatch, "probs must be [N,K]");
  const int n = probs.dim(0), k = probs.dim(1);
  require(static_cast<int>(labels.size()) == n, Errc::shape_mismatch, "labels length mismatch");
  T loss = T(0);
  for (int i = 0; i < n; ++i) {
    require(labels[static_cast<size_t>(i)] < k, Errc::bad_label, "label out of range");
    const T p = probs.at2(i, labels[static_cast<size_t>(i)]);
    loss += -std::log(std::max(p, T(1e-12)));
  }
  return loss / static_cast<T>(n);
}

// Fused softmax + cross-entropy gradient w.r.t. the logits:
// (probs - onehot) / batch_size.
template <std::floating_point T>
TensorT<T> softmax_crossentropy_grad(const TensorT<T>& probs, std::span<const uint8_t> labels) {
  require(probs.rank() == 2, Errc::shape_mismatch, "probs must be [N,K]");
  const int n = probs.dim(0), k = probs.dim(1);
  require(static_cast<int>(labels.size()) == n, Errc::shape_mismatch, "labels length mismatch");
  TensorT<T> dlogits(probs.shape());
  const T inv_n = T(1) / static_cast<T>(n);
  for (int i = 0; i < n; ++i) {
    require(labels[static_cast<size_t>(i)] < k, Errc::bad_label, "label out of range");
    for (int j = 0; j < k; ++j) {
      const T onehot = (j == labels[static_cast<size_t>(i)]) ? T(1) : T(0);
      dlogits.at2(i, j) = (probs.at2(i, j) - onehot) * inv_n;
    }
  }
  return dlogits;
}

}  // namespace usgrip
