#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "usgrip/dataset.hpp"
#include "usgrip/float16.hpp"
#include "usgrip/model.hpp"

namespace usgrip {

// All float -> integer conversions round half away from zero.
inline int32_t round_half_away(float v) { return static_cast<int32_t>(std::lround(v)); }

inline float dequantize(const QuantParams& qp, int32_t q) {
  return qp.scale * static_cast<float>(q - qp.zero_point);
}

// Affine u8 parameters covering [mn, mx]. A zero-range tensor gets the
// sentinel (scale 1.0, zero_point 128). The zero point is derived in double
// straight from the range so that e.g. [-1,1] lands exactly on 127.5 and
// rounds away from zero to 128.
inline QuantParams affine_from_range(float mn, float mx) {
  if (!(mx > mn)) return QuantParams{1.0f, 128};
  const float scale = (mx - mn) / 255.0f;
  const int32_t zp = std::clamp(
      static_cast<int32_t>(std::lround(-static_cast<double>(mn) * 255.0 /
                                       (static_cast<double>(mx) - static_cast<double>(mn)))),
      0, 255);
  return QuantParams{scale, zp};
}

inline uint8_t quantize_affine_u8(const QuantParams& qp, float v) {
  return static_cast<uint8_t>(std::clamp(qp.zero_point + round_half_away(v / qp.scale), 0, 255));
}

// Symmetric i8 scale: max|v| / 127; 1.0 when the tensor is all zero.
inline float symmetric_scale(std::span<const float> v) {
  float mx = 0.0f;
  for (float x : v) mx = std::max(mx, std::abs(x));
  return mx > 0.0f ? mx / 127.0f : 1.0f;
}

inline int8_t quantize_symmetric_i8(float v, float scale) {
  return static_cast<int8_t>(std::clamp(round_half_away(v / scale), -127, 127));
}

// ---- Calibration -----------------------------------------------------------

struct CalibrationProfile {
  int sample_count = 0;
  std::vector<std::pair<float, float>> layer_minmax;  // per graph layer, output range
};

inline CalibrationProfile merge_profiles(const CalibrationProfile& a, const CalibrationProfile& b) {
  if (a.sample_count == 0) return b;
  if (b.sample_count == 0) return a;
  require(a.layer_minmax.size() == b.layer_minmax.size(), Errc::missing_calibration,
          "profiles cover different graphs");
  CalibrationProfile out = a;
  out.sample_count += b.sample_count;
  for (size_t i = 0; i < out.layer_minmax.size(); ++i) {
    out.layer_minmax[i].first = std::min(out.layer_minmax[i].first, b.layer_minmax[i].first);
    out.layer_minmax[i].second = std::max(out.layer_minmax[i].second, b.layer_minmax[i].second);
  }
  return out;
}

inline CalibrationProfile calibrate_one(const ModelGraph& m, const TensorT<uint8_t>& frame) {
  require(m.quant == QuantMode::f32, Errc::bad_config, "calibration requires an f32 model");
  CalibrationProfile p;
  p.sample_count = 1;
  p.layer_minmax.assign(m.layers.size(), {std::numeric_limits<float>::infinity(),
                                          -std::numeric_limits<float>::infinity()});
  forward_layers(m, frame_to_input(frame, m.meta), [&](size_t li, const Tensor& out) {
    auto& [mn, mx] = p.layer_minmax[li];
    for (int64_t i = 0; i < out.size(); ++i) {
      mn = std::min(mn, out[i]);
      mx = std::max(mx, out[i]);
    }
  });
  return p;
}

// Runs f32 forward passes over the selected frames, recording the running
// min/max of every layer's output. Single-threaded, sample order as given.
inline CalibrationProfile calibrate(const ModelGraph& m, const Dataset& data,
                                    std::span<const int> sample_indices) {
  require(!sample_indices.empty(), Errc::empty_dataset, "calibration needs at least one sample");
  CalibrationProfile p;
  for (int idx : sample_indices) {
    p = merge_profiles(p, calibrate_one(m, frame_from_bytes(data.frame(idx), m.meta)));
  }
  return p;
}

// Default calibration subset: the first `count` frames of the train split in
// a seeded shuffle order.
inline std::vector<int> calibration_indices(const Dataset& data, int count, uint64_t seed) {
  std::vector<int> train = data.indices_of_split(kSplitTrain);
  Xoshiro256ss rng(stream_seed(seed, 0xCA11B));
  shuffle(train, rng);
  if (static_cast<int>(train.size()) > count) train.resize(static_cast<size_t>(count));
  return train;
}

// ---- Post-training quantization -------------------------------------------

// Weights stored as IEEE 754 binary16 (round-to-nearest-even, saturating at
// +-65504); inference decodes back to f32 at load, so the quantized model's
// outputs exactly equal an f32 model whose weights were rounded through f16.
inline ModelGraph quantize_f16(const ModelGraph& model) {
  require(model.quant == QuantMode::f32, Errc::already_quantized,
          "quantization is single-shot; model is already " + std::string(quant_mode_name(model.quant)));
  ModelGraph m = model;
  m.quant = QuantMode::f16;
  for (auto& lp : m.params) {
    for (ParamTensor& p : lp) {
      const int64_t n = p.f32.size();
      p.f16.resize(static_cast<size_t>(n));
      std::vector<float> decoded(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) {
        p.f16[static_cast<size_t>(i)] = f32_to_f16(p.f32[i]);
        decoded[static_cast<size_t>(i)] = f16_to_f32(p.f16[static_cast<size_t>(i)]);
      }
      p.f32 = n ? Tensor(p.shape, std::move(decoded)) : Tensor{};
      p.dtype = Dtype::f16;
    }
  }
  m.validate();
  return m;
}

// Conv/dense weights to symmetric i8 (per-tensor scale = max|w|/127); biases
// and normalization parameters stay f32. Activations are quantized on the
// fly, per call, during inference.
inline ModelGraph quantize_dynamic(const ModelGraph& model) {
  require(model.quant == QuantMode::f32, Errc::already_quantized,
          "quantization is single-shot; model is already " + std::string(quant_mode_name(model.quant)));
  ModelGraph m = model;
  m.quant = QuantMode::dynamic_i8;
  for (size_t li = 0; li < m.layers.size(); ++li) {
    const LayerKind kind = m.layers[li].kind;
    if (kind != LayerKind::conv && kind != LayerKind::dense) continue;
    ParamTensor& w = m.params[li][0];
    const float scale = symmetric_scale(w.f32.values());
    w.qp = QuantParams{scale, 0};
    w.i8.resize(static_cast<size_t>(w.f32.size()));
    for (int64_t i = 0; i < w.f32.size(); ++i) {
      w.i8[static_cast<size_t>(i)] = quantize_symmetric_i8(w.f32[i], scale);
    }
    w.f32 = Tensor{};
    w.dtype = Dtype::i8;
  }
  m.validate();
  return m;
}

// Full-integer pipeline. Batchnorm folds into the preceding conv (inference
// normalization is a per-channel affine map), weights become per-tensor
// affine u8, biases i32 at scale_in * scale_w, and every conv/dense output
// requantizes to the next activation's affine parameters taken from the
// calibration profile (post-relu range where a relu follows).
inline ModelGraph quantize_uint8(const ModelGraph& model, const CalibrationProfile& profile) {
  require(model.quant == QuantMode::f32, Errc::already_quantized,
          "quantization is single-shot; model is already " + std::string(quant_mode_name(model.quant)));
  require(profile.sample_count >= 1, Errc::missing_calibration, "empty calibration profile");
  require(profile.layer_minmax.size() == model.layers.size(), Errc::missing_calibration,
          "profile does not cover every layer");

  ModelGraph out;
  out.quant = QuantMode::uint8_affine;
  out.meta = model.meta;

  // Input activations: u8 pixels are exactly the quantized representation of
  // pixel/255, so scale = 1/255 and zero_point = 0.
  QuantParams act_qp{1.0f / 255.0f, 0};

  for (size_t li = 0; li < model.layers.size(); ++li) {
    const LayerSpec& layer = model.layers[li];
    switch (layer.kind) {
      case LayerKind::conv:
      case LayerKind::dense: {
        // Folded weights/bias in f32 first.
        const Tensor& w0 = model.params[li][0].f32;
        const Tensor& b0 = model.params[li][1].f32;
        std::vector<float> w(w0.data(), w0.data() + w0.size());
        std::vector<float> b(b0.data(), b0.data() + b0.size());
        const int cout = static_cast<int>(b.size());

        size_t range_layer = li;
        if (layer.kind == LayerKind::conv && li + 1 < model.layers.size() &&
            model.layers[li + 1].kind == LayerKind::batchnorm) {
          const auto& bn = model.params[li + 1];
          const Tensor& gamma = bn[0].f32;
          const Tensor& beta = bn[1].f32;
          const Tensor& mean = bn[2].f32;
          const Tensor& var = bn[3].f32;
          for (int c = 0; c < cout; ++c) {
            const float istd = 1.0f / std::sqrt(var[c] + kBnEpsilon);
            const float k = gamma[c] * istd;
            for (size_t i = static_cast<size_t>(c); i < w.size(); i += static_cast<size_t>(cout)) {
              w[i] *= k;
            }
            b[static_cast<size_t>(c)] = (b[static_cast<size_t>(c)] - mean[c]) * k + beta[c];
          }
          range_layer = li + 1;
        }
        if (range_layer + 1 < model.layers.size() &&
            model.layers[range_layer + 1].kind == LayerKind::relu) {
          ++range_layer;
        }

        float wmin = 0.0f, wmax = 0.0f;
        for (float v : w) {
          wmin = std::min(wmin, v);
          wmax = std::max(wmax, v);
        }
        const QuantParams w_qp = affine_from_range(wmin, wmax);
        const QuantParams out_qp = affine_from_range(profile.layer_minmax[range_layer].first,
                                                     profile.layer_minmax[range_layer].second);
        const float bias_scale = act_qp.scale * w_qp.scale;

        ParamTensor wq;
        wq.dtype = Dtype::u8;
        wq.qp = w_qp;
        wq.shape = model.params[li][0].shape;
        wq.u8.resize(w.size());
        for (size_t i = 0; i < w.size(); ++i) wq.u8[i] = quantize_affine_u8(w_qp, w[i]);

        ParamTensor bq;
        bq.dtype = Dtype::i32;
        bq.qp = QuantParams{bias_scale, 0};
        bq.shape = model.params[li][1].shape;
        bq.i32.resize(b.size());
        for (size_t i = 0; i < b.size(); ++i) bq.i32[i] = round_half_away(b[i] / bias_scale);

        ParamTensor oq;
        oq.dtype = Dtype::u8;
        oq.qp = out_qp;

        out.layers.push_back(layer);
        out.params.push_back({std::move(wq), std::move(bq), std::move(oq)});
        act_qp = out_qp;
        break;
      }
      case LayerKind::batchnorm:
        break;  // folded into the conv above
      case LayerKind::relu:
      case LayerKind::maxpool:
      case LayerKind::flatten:
      case LayerKind::softmax:
        out.layers.push_back(layer);
        out.params.emplace_back();
        break;
      case LayerKind::meta:
        fail(Errc::bad_layer_graph, "meta pseudo-layer in graph");
    }
  }
  out.validate();
  return out;
}

// ---- Quantized inference ---------------------------------------------------

struct InferenceResult {
  Tensor probs;
  int64_t micros = 0;
};

namespace detail {

// Dynamic-range integer convolution: i8 activations and weights, i32
// accumulate, dequantized by scale_w * scale_a with the f32 bias added.
inline Tensor dynamic_conv(const Tensor& x, const ParamTensor& w, const ParamTensor& b) {
  const int h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
  const int kh = w.shape[0], kw = w.shape[1], cout = w.shape[3];
  require(w.shape[2] == cin, Errc::shape_mismatch, "conv input channel mismatch");

  float a_scale = 0.0f;
  for (int64_t i = 0; i < x.size(); ++i) a_scale = std::max(a_scale, std::abs(x[i]));
  a_scale = a_scale > 0.0f ? a_scale / 127.0f : 1.0f;

  std::vector<int8_t> xq(static_cast<size_t>(x.size()));
  for (int64_t i = 0; i < x.size(); ++i) xq[static_cast<size_t>(i)] = quantize_symmetric_i8(x[i], a_scale);

  const float deq = a_scale * w.qp.scale;
  const int pad_top = (kh - 1) / 2, pad_left = (kw - 1) / 2;  // same padding, stride 1
  Tensor out({h, wd, cout});
  std::vector<int32_t> acc(static_cast<size_t>(cout));
  const int8_t* wq = w.i8.data();
  for (int oh = 0; oh < h; ++oh) {
    for (int ow = 0; ow < wd; ++ow) {
      std::fill(acc.begin(), acc.end(), 0);
      for (int r = 0; r < kh; ++r) {
        const int ih = oh - pad_top + r;
        if (ih < 0 || ih >= h) continue;
        for (int s = 0; s < kw; ++s) {
          const int iw = ow - pad_left + s;
          if (iw < 0 || iw >= wd) continue;
          const int8_t* in_px = xq.data() + (static_cast<size_t>(ih) * wd + iw) * cin;
          const int8_t* w_rs = wq + ((static_cast<size_t>(r) * kw + s) * cin) * cout;
          for (int ci = 0; ci < cin; ++ci) {
            const int32_t v = in_px[ci];
            const int8_t* w_ci = w_rs + static_cast<size_t>(ci) * cout;
            for (int c = 0; c < cout; ++c) acc[static_cast<size_t>(c)] += v * w_ci[c];
          }
        }
      }
      float* out_px = out.data() + (static_cast<int64_t>(oh) * wd + ow) * cout;
      for (int c = 0; c < cout; ++c) {
        out_px[c] = static_cast<float>(acc[static_cast<size_t>(c)]) * deq + b.f32[c];
      }
    }
  }
  return out;
}

inline Tensor dynamic_dense(const Tensor& x, const ParamTensor& w, const ParamTensor& b) {
  const int n = x.dim(0), m = w.shape[1];
  float a_scale = 0.0f;
  for (int64_t i = 0; i < x.size(); ++i) a_scale = std::max(a_scale, std::abs(x[i]));
  a_scale = a_scale > 0.0f ? a_scale / 127.0f : 1.0f;
  std::vector<int8_t> xq(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) xq[static_cast<size_t>(i)] = quantize_symmetric_i8(x[i], a_scale);

  const float deq = a_scale * w.qp.scale;
  Tensor out({m});
  std::vector<int32_t> acc(static_cast<size_t>(m), 0);
  for (int i = 0; i < n; ++i) {
    const int32_t v = xq[static_cast<size_t>(i)];
    const int8_t* wrow = w.i8.data() + static_cast<size_t>(i) * m;
    for (int j = 0; j < m; ++j) acc[static_cast<size_t>(j)] += v * wrow[j];
  }
  for (int j = 0; j < m; ++j) out[j] = static_cast<float>(acc[static_cast<size_t>(j)]) * deq + b.f32[j];
  return out;
}

inline Tensor forward_dynamic(const ModelGraph& m, const TensorT<uint8_t>& frame) {
  Tensor x = frame_to_input(frame, m.meta);
  for (size_t li = 0; li < m.layers.size(); ++li) {
    const LayerSpec& layer = m.layers[li];
    const auto& p = m.params[li];
    switch (layer.kind) {
      case LayerKind::conv:      x = dynamic_conv(x, p[0], p[1]); break;
      case LayerKind::batchnorm: x = batchnorm_infer(x, p[0].f32, p[1].f32, p[2].f32, p[3].f32, kBnEpsilon); break;
      case LayerKind::relu:      x = relu(x); break;
      case LayerKind::maxpool:   x = maxpool2d(x); break;
      case LayerKind::flatten:   x = flatten(x); break;
      case LayerKind::dense:     x = dynamic_dense(x, p[0], p[1]); break;
      case LayerKind::softmax:   x = softmax(x); break;
      case LayerKind::meta:      fail(Errc::bad_layer_graph, "meta pseudo-layer in graph");
    }
  }
  return x;
}

struct U8Tensor {
  std::vector<int> shape;
  std::vector<uint8_t> q;
  QuantParams qp;

  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(q.size()); }
};

// Integer conv on affine-u8 activations/weights. Zero points are subtracted
// inside the i32 accumulation; skipped out-of-bounds taps equal padding with
// real zero because real 0 maps exactly to the input zero point.
inline U8Tensor u8_conv(const U8Tensor& x, const ParamTensor& w, const ParamTensor& b,
                        const QuantParams& out_qp) {
  const int h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
  const int kh = w.shape[0], kw = w.shape[1], cout = w.shape[3];
  const int32_t zp_in = x.qp.zero_point, zp_w = w.qp.zero_point;
  const float requant = x.qp.scale * w.qp.scale / out_qp.scale;

  const int pad_top = (kh - 1) / 2, pad_left = (kw - 1) / 2;
  U8Tensor out{{h, wd, cout}, std::vector<uint8_t>(static_cast<size_t>(h) * wd * cout), out_qp};
  std::vector<int32_t> acc(static_cast<size_t>(cout));
  for (int oh = 0; oh < h; ++oh) {
    for (int ow = 0; ow < wd; ++ow) {
      for (int c = 0; c < cout; ++c) acc[static_cast<size_t>(c)] = b.i32[static_cast<size_t>(c)];
      for (int r = 0; r < kh; ++r) {
        const int ih = oh - pad_top + r;
        if (ih < 0 || ih >= h) continue;
        for (int s = 0; s < kw; ++s) {
          const int iw = ow - pad_left + s;
          if (iw < 0 || iw >= wd) continue;
          const uint8_t* in_px = x.q.data() + (static_cast<size_t>(ih) * wd + iw) * cin;
          const uint8_t* w_rs = w.u8.data() + ((static_cast<size_t>(r) * kw + s) * cin) * cout;
          for (int ci = 0; ci < cin; ++ci) {
            const int32_t v = static_cast<int32_t>(in_px[ci]) - zp_in;
            const uint8_t* w_ci = w_rs + static_cast<size_t>(ci) * cout;
            for (int c = 0; c < cout; ++c) {
              acc[static_cast<size_t>(c)] += v * (static_cast<int32_t>(w_ci[c]) - zp_w);
            }
          }
        }
      }
      uint8_t* out_px = out.q.data() + (static_cast<size_t>(oh) * wd + ow) * cout;
      for (int c = 0; c < cout; ++c) {
        const int32_t q = out_qp.zero_point +
                          round_half_away(requant * static_cast<float>(acc[static_cast<size_t>(c)]));
        out_px[c] = static_cast<uint8_t>(std::clamp(q, 0, 255));
      }
    }
  }
  return out;
}

inline U8Tensor u8_dense(const U8Tensor& x, const ParamTensor& w, const ParamTensor& b,
                         const QuantParams& out_qp) {
  const int n = x.dim(0), m = w.shape[1];
  const int32_t zp_in = x.qp.zero_point, zp_w = w.qp.zero_point;
  const float requant = x.qp.scale * w.qp.scale / out_qp.scale;
  U8Tensor out{{m}, std::vector<uint8_t>(static_cast<size_t>(m)), out_qp};
  std::vector<int32_t> acc(b.i32.begin(), b.i32.end());
  for (int i = 0; i < n; ++i) {
    const int32_t v = static_cast<int32_t>(x.q[static_cast<size_t>(i)]) - zp_in;
    const uint8_t* wrow = w.u8.data() + static_cast<size_t>(i) * m;
    for (int j = 0; j < m; ++j) acc[static_cast<size_t>(j)] += v * (static_cast<int32_t>(wrow[j]) - zp_w);
  }
  for (int j = 0; j < m; ++j) {
    const int32_t q = out_qp.zero_point +
                      round_half_away(requant * static_cast<float>(acc[static_cast<size_t>(j)]));
    out.q[static_cast<size_t>(j)] = static_cast<uint8_t>(std::clamp(q, 0, 255));
  }
  return out;
}

inline Tensor forward_uint8(const ModelGraph& m, const TensorT<uint8_t>& frame) {
  require(frame.rank() == 3 && frame.dim(0) == m.meta.input_h && frame.dim(1) == m.meta.input_w &&
              frame.dim(2) == m.meta.input_c,
          Errc::shape_mismatch, "frame shape mismatch");
  U8Tensor x{frame.shape(), std::vector<uint8_t>(frame.data(), frame.data() + frame.size()),
             QuantParams{1.0f / 255.0f, 0}};

  for (size_t li = 0; li < m.layers.size(); ++li) {
    const LayerSpec& layer = m.layers[li];
    const auto& p = m.params[li];
    switch (layer.kind) {
      case LayerKind::conv:
        x = u8_conv(x, p[0], p[1], p[2].qp);
        break;
      case LayerKind::dense:
        x = u8_dense(x, p[0], p[1], p[2].qp);
        break;
      case LayerKind::relu: {
        const uint8_t zp = static_cast<uint8_t>(std::clamp(x.qp.zero_point, 0, 255));
        for (auto& q : x.q) q = std::max(q, zp);
        break;
      }
      case LayerKind::maxpool: {
        const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
        require(h >= 2 && w >= 2, Errc::shape_mismatch, "maxpool input too small");
        U8Tensor out{{h / 2, w / 2, c},
                     std::vector<uint8_t>(static_cast<size_t>(h / 2) * (w / 2) * c), x.qp};
        for (int y = 0; y < h / 2; ++y)
          for (int xw = 0; xw < w / 2; ++xw)
            for (int ch = 0; ch < c; ++ch) {
              uint8_t best = 0;
              for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                  best = std::max(best,
                                  x.q[(static_cast<size_t>(2 * y + dy) * w + (2 * xw + dx)) * c + ch]);
                }
              out.q[(static_cast<size_t>(y) * (w / 2) + xw) * c + ch] = best;
            }
        x = std::move(out);
        break;
      }
      case LayerKind::flatten:
        x.shape = {static_cast<int>(x.q.size())};
        break;
      case LayerKind::softmax: {
        Tensor logits({static_cast<int>(x.q.size())});
        for (int64_t i = 0; i < logits.size(); ++i) {
          logits[i] = dequantize(x.qp, x.q[static_cast<size_t>(i)]);
        }
        return softmax(logits);
      }
      case LayerKind::batchnorm:
      case LayerKind::meta:
        fail(Errc::bad_layer_graph, "unexpected layer in a uint8 graph");
    }
  }
  fail(Errc::bad_layer_graph, "uint8 graph did not end in softmax");
}

}  // namespace detail

// Same contract as forward(); dispatches on the model's quantization scheme
// and reports the per-call wall time for benchmarking.
inline InferenceResult quantized_forward(const ModelGraph& m, const TensorT<uint8_t>& frame) {
  const auto t0 = std::chrono::steady_clock::now();
  InferenceResult r;
  switch (m.quant) {
    case QuantMode::f32:
    case QuantMode::f16:
      r.probs = forward(m, frame);
      break;
    case QuantMode::dynamic_i8:
      r.probs = detail::forward_dynamic(m, frame);
      break;
    case QuantMode::uint8_affine:
      r.probs = detail::forward_uint8(m, frame);
      break;
  }
  r.micros = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - t0)
                 .count();
  return r;
}

}  // namespace usgrip
