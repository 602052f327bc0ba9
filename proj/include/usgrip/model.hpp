#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "usgrip/float16.hpp"
#include "usgrip/ops.hpp"
#include "usgrip/rng.hpp"
#include "usgrip/tensor.hpp"

namespace usgrip {

// Architecture: input 80x80x1 -> 5x [conv 3x3 same stride 1, batchnorm, relu,
// maxpool 2x2] -> flatten -> dense 128 -> relu -> dense 4 -> softmax.
// Conv layers in a graph are always same-padding, stride 1; filter counts are
// (8, 16, 32, 64, 64). Spatial chain: 80->40->20->10->5->2, flatten 256.

inline constexpr float kBnEpsilon = 1e-5f;
inline constexpr float kBnMomentum = 0.1f;
inline constexpr std::array<int, 5> kConvFilters = {8, 16, 32, 64, 64};
inline constexpr int kDenseHidden = 128;

enum class LayerKind : uint8_t {
  meta = 0,  // file-level pseudo layer carrying [h, w, c, classes, epochs]
  conv = 1,
  batchnorm = 2,
  relu = 3,
  maxpool = 4,
  flatten = 5,
  dense = 6,
  softmax = 7,
};

enum class QuantMode : uint8_t {
  f32 = 0,
  f16 = 1,
  dynamic_i8 = 2,
  uint8_affine = 3,
};

inline const char* quant_mode_name(QuantMode m) {
  switch (m) {
    case QuantMode::f32:          return "f32";
    case QuantMode::f16:          return "f16";
    case QuantMode::dynamic_i8:   return "dynamic_i8";
    case QuantMode::uint8_affine: return "uint8_affine";
  }
  return "unknown";
}

enum class Dtype : uint8_t {
  f32 = 0,
  f16 = 1,
  i8 = 2,
  u8 = 3,
  i32 = 4,
};

inline size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::f32: return 4;
    case Dtype::f16: return 2;
    case Dtype::i8:  return 1;
    case Dtype::u8:  return 1;
    case Dtype::i32: return 4;
  }
  return 0;
}

// Per-tensor quantization parameters: real = scale * (q - zero_point).
struct QuantParams {
  float scale = 1.0f;
  int32_t zero_point = 0;
};

// One parameter blob. Exactly one of the typed stores matches `dtype`; for
// f16 the decoded f32 copy is kept alongside, built at load, so inference
// never touches the raw bits.
struct ParamTensor {
  Dtype dtype = Dtype::f32;
  QuantParams qp;
  std::vector<int> shape;

  Tensor f32;                  // dtype f32: authoritative; dtype f16: decoded copy
  std::vector<uint16_t> f16;   // binary16 bit patterns
  std::vector<int8_t> i8;
  std::vector<uint8_t> u8;
  std::vector<int32_t> i32;

  int64_t count() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }
  size_t byte_len() const { return static_cast<size_t>(count()) * dtype_size(dtype); }

  static ParamTensor make_f32(Tensor t) {
    ParamTensor p;
    p.dtype = Dtype::f32;
    p.shape = t.shape();
    p.f32 = std::move(t);
    return p;
  }
};

struct LayerSpec {
  LayerKind kind;
  std::vector<uint32_t> dims;  // conv {kh,kw,cin,cout}; batchnorm {c}; dense {n,m}; else {}
};

struct ModelMeta {
  int input_h = 80;
  int input_w = 80;
  int input_c = 1;
  int classes = 4;
  uint32_t trained_epochs = 0;
};

struct ModelGraph {
  QuantMode quant = QuantMode::f32;
  ModelMeta meta;
  std::vector<LayerSpec> layers;
  std::vector<std::vector<ParamTensor>> params;  // parallel to layers

  int64_t input_bytes() const {
    return static_cast<int64_t>(meta.input_h) * meta.input_w * meta.input_c;
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& lp : params)
      for (const auto& p : lp) n += p.count();
    return n;
  }

  int64_t payload_bytes() const {
    int64_t n = 0;
    for (const auto& lp : params)
      for (const auto& p : lp) n += static_cast<int64_t>(p.byte_len());
    return n;
  }

  void validate() const;
};

namespace detail {

// Parameter record layout per layer kind. Order is pinned; see save/load.
inline int expected_param_records(LayerKind kind, QuantMode mode) {
  switch (kind) {
    case LayerKind::conv:
    case LayerKind::dense:
      return mode == QuantMode::uint8_affine ? 3 : 2;  // W, b [, output activation params]
    case LayerKind::batchnorm:
      return 4;  // gamma, beta, running_mean, running_var
    default:
      return 0;
  }
}

inline std::vector<int> param_record_shape(const LayerSpec& layer, int record) {
  const auto& d = layer.dims;
  switch (layer.kind) {
    case LayerKind::conv:
      if (record == 0)
        return {static_cast<int>(d[0]), static_cast<int>(d[1]), static_cast<int>(d[2]),
                static_cast<int>(d[3])};
      if (record == 1) return {static_cast<int>(d[3])};
      return {};  // activation-params record carries no payload
    case LayerKind::dense:
      if (record == 0) return {static_cast<int>(d[0]), static_cast<int>(d[1])};
      if (record == 1) return {static_cast<int>(d[1])};
      return {};
    case LayerKind::batchnorm:
      return {static_cast<int>(d[0])};
    default:
      return {};
  }
}

inline size_t expected_dim_count(LayerKind kind) {
  switch (kind) {
    case LayerKind::meta:      return 5;
    case LayerKind::conv:      return 4;
    case LayerKind::batchnorm: return 1;
    case LayerKind::dense:     return 2;
    default:                   return 0;
  }
}

inline Dtype expected_dtype(LayerKind kind, QuantMode mode, int record) {
  switch (mode) {
    case QuantMode::f32:
      return Dtype::f32;
    case QuantMode::f16:
      return Dtype::f16;
    case QuantMode::dynamic_i8:
      if ((kind == LayerKind::conv || kind == LayerKind::dense) && record == 0) return Dtype::i8;
      return Dtype::f32;  // biases and norm parameters stay float
    case QuantMode::uint8_affine:
      if (record == 0) return Dtype::u8;
      if (record == 1) return Dtype::i32;
      return Dtype::u8;  // empty activation-params record
  }
  return Dtype::f32;
}

}  // namespace detail

inline void ModelGraph::validate() const {
  require(layers.size() == params.size(), Errc::bad_layer_graph,
          "layer/param table length mismatch");
  require(!layers.empty(), Errc::bad_layer_graph, "empty layer list");
  require(meta.classes == 4, Errc::bad_layer_graph, "class count is fixed at 4");

  // Shape chain walk.
  int h = meta.input_h, w = meta.input_w, c = meta.input_c;
  bool flat = false;
  int flat_len = 0;
  int convs_before_flatten = 0;
  bool saw_flatten = false;

  for (size_t li = 0; li < layers.size(); ++li) {
    const LayerSpec& layer = layers[li];
    require(layer.dims.size() == detail::expected_dim_count(layer.kind), Errc::bad_layer_graph,
            "layer dim count mismatch at layer " + std::to_string(li));
    switch (layer.kind) {
      case LayerKind::meta:
        fail(Errc::bad_layer_graph, "meta pseudo-layer may not appear in the graph");
      case LayerKind::conv: {
        require(!flat, Errc::bad_layer_graph, "conv after flatten");
        require(static_cast<int>(layer.dims[2]) == c, Errc::bad_layer_graph,
                "conv input channel mismatch at layer " + std::to_string(li));
        c = static_cast<int>(layer.dims[3]);
        ++convs_before_flatten;
        break;
      }
      case LayerKind::batchnorm: {
        require(!flat, Errc::bad_layer_graph, "batchnorm after flatten");
        require(quant != QuantMode::uint8_affine, Errc::bad_layer_graph,
                "uint8 graphs fold batchnorm into conv");
        require(static_cast<int>(layer.dims[0]) == c, Errc::bad_layer_graph,
                "batchnorm channel mismatch at layer " + std::to_string(li));
        break;
      }
      case LayerKind::relu:
        break;
      case LayerKind::maxpool: {
        require(!flat, Errc::bad_layer_graph, "maxpool after flatten");
        require(h >= 2 && w >= 2, Errc::bad_layer_graph, "maxpool input too small");
        h /= 2;
        w /= 2;
        break;
      }
      case LayerKind::flatten: {
        require(!flat, Errc::bad_layer_graph, "double flatten");
        flat = true;
        saw_flatten = true;
        flat_len = h * w * c;
        break;
      }
      case LayerKind::dense: {
        require(flat, Errc::bad_layer_graph, "dense before flatten");
        require(static_cast<int>(layer.dims[0]) == flat_len, Errc::bad_layer_graph,
                "dense input length mismatch at layer " + std::to_string(li) + ": expected " +
                    std::to_string(flat_len) + " got " + std::to_string(layer.dims[0]));
        flat_len = static_cast<int>(layer.dims[1]);
        break;
      }
      case LayerKind::softmax:
        require(flat, Errc::bad_layer_graph, "softmax before flatten");
        require(li == layers.size() - 1, Errc::bad_layer_graph, "softmax must be last");
        break;
    }

    // Parameter records.
    const int want = detail::expected_param_records(layer.kind, quant);
    require(static_cast<int>(params[li].size()) == want, Errc::bad_layer_graph,
            "param record count mismatch at layer " + std::to_string(li));
    for (int r = 0; r < want; ++r) {
      const ParamTensor& p = params[li][static_cast<size_t>(r)];
      const std::vector<int> shape = detail::param_record_shape(layer, r);
      require(p.shape == shape, Errc::bad_layer_graph,
              "param shape mismatch at layer " + std::to_string(li));
      const size_t n = static_cast<size_t>(p.count());
      size_t have = 0;
      switch (p.dtype) {
        case Dtype::f32: have = static_cast<size_t>(p.f32.size()); break;
        case Dtype::f16:
          have = p.f16.size();
          require(static_cast<size_t>(p.f32.size()) == n, Errc::bad_layer_graph,
                  "f16 record missing decoded copy");
          break;
        case Dtype::i8:  have = p.i8.size(); break;
        case Dtype::u8:  have = p.u8.size(); break;
        case Dtype::i32: have = p.i32.size(); break;
      }
      require(have == n, Errc::bad_layer_graph,
              "param element count mismatch at layer " + std::to_string(li));
      require(p.dtype == detail::expected_dtype(layer.kind, quant, r), Errc::bad_layer_graph,
              "param dtype does not match the quantization mode at layer " + std::to_string(li));
    }
  }

  require(saw_flatten, Errc::bad_layer_graph, "graph has no flatten layer");
  require(convs_before_flatten == 5, Errc::bad_layer_graph,
          "exactly 5 conv blocks must precede flatten, got " +
              std::to_string(convs_before_flatten));
  require(layers.back().kind == LayerKind::softmax, Errc::bad_layer_graph,
          "graph must end in softmax");
  require(flat_len == meta.classes, Errc::bad_layer_graph,
          "final layer width must equal class count");
}

namespace detail {

inline Tensor he_uniform(std::vector<int> shape, int fan_in, Xoshiro256ss& rng) {
  Tensor t(std::move(shape));
  const float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

}  // namespace detail

inline ModelGraph build_default_model(uint64_t seed) {
  ModelGraph m;
  m.quant = QuantMode::f32;
  m.meta = ModelMeta{};

  auto add_conv = [&](int kh, int kw, int cin, int cout, uint64_t stream) {
    m.layers.push_back({LayerKind::conv,
                        {static_cast<uint32_t>(kh), static_cast<uint32_t>(kw),
                         static_cast<uint32_t>(cin), static_cast<uint32_t>(cout)}});
    Xoshiro256ss rng(stream_seed(seed, stream));
    std::vector<ParamTensor> p;
    p.push_back(ParamTensor::make_f32(detail::he_uniform({kh, kw, cin, cout}, kh * kw * cin, rng)));
    p.push_back(ParamTensor::make_f32(Tensor({cout})));
    m.params.push_back(std::move(p));
  };
  auto add_bn = [&](int c) {
    m.layers.push_back({LayerKind::batchnorm, {static_cast<uint32_t>(c)}});
    std::vector<ParamTensor> p;
    p.push_back(ParamTensor::make_f32(Tensor::full({c}, 1.0f)));  // gamma
    p.push_back(ParamTensor::make_f32(Tensor({c})));              // beta
    p.push_back(ParamTensor::make_f32(Tensor({c})));              // running mean
    p.push_back(ParamTensor::make_f32(Tensor::full({c}, 1.0f)));  // running var
    m.params.push_back(std::move(p));
  };
  auto add_plain = [&](LayerKind kind) {
    m.layers.push_back({kind, {}});
    m.params.emplace_back();
  };
  auto add_dense = [&](int n, int out, uint64_t stream) {
    m.layers.push_back({LayerKind::dense, {static_cast<uint32_t>(n), static_cast<uint32_t>(out)}});
    Xoshiro256ss rng(stream_seed(seed, stream));
    std::vector<ParamTensor> p;
    p.push_back(ParamTensor::make_f32(detail::he_uniform({n, out}, n, rng)));
    p.push_back(ParamTensor::make_f32(Tensor({out})));
    m.params.push_back(std::move(p));
  };

  int cin = 1;
  for (int i = 0; i < 5; ++i) {
    const int cout = kConvFilters[static_cast<size_t>(i)];
    add_conv(3, 3, cin, cout, static_cast<uint64_t>(i));
    add_bn(cout);
    add_plain(LayerKind::relu);
    add_plain(LayerKind::maxpool);
    cin = cout;
  }
  add_plain(LayerKind::flatten);
  add_dense(2 * 2 * 64, kDenseHidden, 10);
  add_plain(LayerKind::relu);
  add_dense(kDenseHidden, 4, 11);
  m.layers.push_back({LayerKind::softmax, {}});
  m.params.emplace_back();

  m.validate();
  return m;
}

// u8 pixels scale to [0,1] by division by 255 before the first layer.
inline Tensor frame_to_input(const TensorT<uint8_t>& frame, const ModelMeta& meta) {
  require(frame.rank() == 3 && frame.dim(0) == meta.input_h && frame.dim(1) == meta.input_w &&
              frame.dim(2) == meta.input_c,
          Errc::shape_mismatch,
          "frame must be [" + std::to_string(meta.input_h) + "," + std::to_string(meta.input_w) +
              "," + std::to_string(meta.input_c) + "], got " + frame.shape_str());
  Tensor x({meta.input_h, meta.input_w, meta.input_c});
  for (int64_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(frame[i]) / 255.0f;
  return x;
}

inline TensorT<uint8_t> frame_from_bytes(std::span<const uint8_t> bytes, const ModelMeta& meta) {
  require(static_cast<int64_t>(bytes.size()) ==
              static_cast<int64_t>(meta.input_h) * meta.input_w * meta.input_c,
          Errc::shape_mismatch, "frame byte count mismatch");
  return TensorT<uint8_t>({meta.input_h, meta.input_w, meta.input_c},
                          std::vector<uint8_t>(bytes.begin(), bytes.end()));
}

// Float forward pass (f32 graphs and f16 graphs via their decoded copies).
// The observer, when set, sees every layer's output in graph order.
inline Tensor forward_layers(const ModelGraph& m, Tensor x,
                             const std::function<void(size_t, const Tensor&)>& observer = {}) {
  require(m.quant == QuantMode::f32 || m.quant == QuantMode::f16, Errc::bad_config,
          "float forward requires an f32/f16 graph");
  for (size_t li = 0; li < m.layers.size(); ++li) {
    const LayerSpec& layer = m.layers[li];
    const auto& p = m.params[li];
    switch (layer.kind) {
      case LayerKind::conv:
        x = conv2d(x, p[0].f32, p[1].f32, Padding::same, 1);
        break;
      case LayerKind::batchnorm:
        x = batchnorm_infer(x, p[0].f32, p[1].f32, p[2].f32, p[3].f32, kBnEpsilon);
        break;
      case LayerKind::relu:
        x = relu(x);
        break;
      case LayerKind::maxpool:
        x = maxpool2d(x);
        break;
      case LayerKind::flatten:
        x = flatten(x);
        break;
      case LayerKind::dense:
        x = dense(x, p[0].f32, p[1].f32);
        break;
      case LayerKind::softmax:
        x = softmax(x);
        break;
      case LayerKind::meta:
        fail(Errc::bad_layer_graph, "meta pseudo-layer in graph");
    }
    if (observer) observer(li, x);
  }
  return x;
}

inline Tensor forward(const ModelGraph& m, const TensorT<uint8_t>& frame) {
  return forward_layers(m, frame_to_input(frame, m.meta));
}

}  // namespace usgrip
