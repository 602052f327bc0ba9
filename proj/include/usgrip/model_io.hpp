#pragma once

#include <cstring>
#include <filesystem>
#include <string>

#include "usgrip/float16.hpp"
#include "usgrip/io_util.hpp"
#include "usgrip/model.hpp"

namespace usgrip {

// ---- UQM1 model file format ------------------------------------------------
// magic "UQM1" | version u8=1 | quant_mode u8 | layer_count u16 | per layer:
// layer_type u8, dim_count u8, dims u32[], then one record per parameter
// tensor: dtype u8, byte_len u32, scale f32, zero_point i32, raw bytes.
// All integers little-endian; scale/zero_point are 1.0/0 when unused.
//
// The first layer record is always the meta pseudo-layer (type 0) whose dims
// are [input_h, input_w, input_c, classes, trained_epochs] and which carries
// no parameter records. Parameter record counts are implied by
// (layer_type, quant_mode); see detail::expected_param_records.

inline constexpr char kModelMagic[4] = {'U', 'Q', 'M', '1'};
inline constexpr uint8_t kModelVersion = 1;
inline constexpr int64_t kModelHeaderBytes = 8;
inline constexpr int64_t kParamRecordOverheadBytes = 13;  // dtype + byte_len + scale + zero_point

inline int64_t save_model(const ModelGraph& m, const std::string& path) {
  m.validate();
  std::ofstream file = open_output(path);
  ByteWriter w(file);

  w.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(kModelMagic), 4));
  w.u8(kModelVersion);
  w.u8(static_cast<uint8_t>(m.quant));
  w.u16(static_cast<uint16_t>(m.layers.size() + 1));

  // Meta pseudo-layer.
  w.u8(static_cast<uint8_t>(LayerKind::meta));
  w.u8(5);
  w.u32(static_cast<uint32_t>(m.meta.input_h));
  w.u32(static_cast<uint32_t>(m.meta.input_w));
  w.u32(static_cast<uint32_t>(m.meta.input_c));
  w.u32(static_cast<uint32_t>(m.meta.classes));
  w.u32(m.meta.trained_epochs);

  for (size_t li = 0; li < m.layers.size(); ++li) {
    const LayerSpec& layer = m.layers[li];
    w.u8(static_cast<uint8_t>(layer.kind));
    w.u8(static_cast<uint8_t>(layer.dims.size()));
    for (uint32_t d : layer.dims) w.u32(d);
    for (const ParamTensor& p : m.params[li]) {
      w.u8(static_cast<uint8_t>(p.dtype));
      w.u32(static_cast<uint32_t>(p.byte_len()));
      w.f32(p.qp.scale);
      w.i32(p.qp.zero_point);
      switch (p.dtype) {
        case Dtype::f32:
          for (int64_t i = 0; i < p.f32.size(); ++i) w.f32(p.f32[i]);
          break;
        case Dtype::f16:
          for (uint16_t v : p.f16) w.u16(v);
          break;
        case Dtype::i8:
          for (int8_t v : p.i8) w.u8(static_cast<uint8_t>(v));
          break;
        case Dtype::u8:
          w.bytes(p.u8);
          break;
        case Dtype::i32:
          for (int32_t v : p.i32) w.i32(v);
          break;
      }
    }
  }
  file.flush();
  require(file.good(), Errc::io, "write failure: " + path);
  file.close();
  return static_cast<int64_t>(std::filesystem::file_size(path));
}

inline ModelGraph load_model(const std::string& path) {
  std::ifstream file = open_input(path);
  ByteReader r(file);

  uint8_t magic[4];
  r.bytes(magic);
  require(std::memcmp(magic, kModelMagic, 4) == 0, Errc::bad_magic, "not a UQM1 file");
  const uint8_t version = r.u8();
  require(version == kModelVersion, Errc::bad_version,
          "unsupported model version " + std::to_string(version));
  const uint8_t quant_byte = r.u8();
  require(quant_byte <= 3, Errc::bad_dtype, "unknown quant mode " + std::to_string(quant_byte));
  const uint16_t layer_count = r.u16();
  require(layer_count >= 1, Errc::bad_layer_graph, "missing meta layer");

  ModelGraph m;
  m.quant = static_cast<QuantMode>(quant_byte);

  for (uint16_t rec = 0; rec < layer_count; ++rec) {
    const uint8_t type_byte = r.u8();
    require(type_byte <= static_cast<uint8_t>(LayerKind::softmax), Errc::bad_layer_graph,
            "unknown layer type " + std::to_string(type_byte));
    const LayerKind kind = static_cast<LayerKind>(type_byte);
    const uint8_t dim_count = r.u8();
    std::vector<uint32_t> dims(dim_count);
    for (auto& d : dims) d = r.u32();

    if (rec == 0) {
      require(kind == LayerKind::meta, Errc::bad_layer_graph, "first record must be meta");
      require(dim_count == 5, Errc::bad_layer_graph, "meta record must have 5 dims");
      m.meta.input_h = static_cast<int>(dims[0]);
      m.meta.input_w = static_cast<int>(dims[1]);
      m.meta.input_c = static_cast<int>(dims[2]);
      m.meta.classes = static_cast<int>(dims[3]);
      m.meta.trained_epochs = dims[4];
      continue;
    }
    require(kind != LayerKind::meta, Errc::bad_layer_graph, "duplicate meta record");

    LayerSpec layer{kind, std::move(dims)};
    require(layer.dims.size() == detail::expected_dim_count(kind), Errc::bad_layer_graph,
            "layer dim count mismatch");
    std::vector<ParamTensor> records;
    const int want = detail::expected_param_records(kind, m.quant);
    for (int pr = 0; pr < want; ++pr) {
      ParamTensor p;
      const uint8_t dtype_byte = r.u8();
      require(dtype_byte <= static_cast<uint8_t>(Dtype::i32), Errc::bad_dtype,
              "unknown dtype " + std::to_string(dtype_byte));
      p.dtype = static_cast<Dtype>(dtype_byte);
      const uint32_t byte_len = r.u32();
      p.qp.scale = r.f32();
      p.qp.zero_point = r.i32();
      p.shape = detail::param_record_shape(layer, pr);
      const size_t n = static_cast<size_t>(p.count());
      require(byte_len == n * dtype_size(p.dtype), Errc::bad_layer_graph,
              "param byte length mismatch");
      switch (p.dtype) {
        case Dtype::f32: {
          std::vector<float> v(n);
          for (auto& x : v) x = r.f32();
          p.f32 = n ? Tensor(p.shape, std::move(v)) : Tensor{};
          break;
        }
        case Dtype::f16: {
          p.f16.resize(n);
          for (auto& x : p.f16) x = r.u16();
          std::vector<float> dec(n);
          for (size_t i = 0; i < n; ++i) dec[i] = f16_to_f32(p.f16[i]);
          p.f32 = n ? Tensor(p.shape, std::move(dec)) : Tensor{};
          break;
        }
        case Dtype::i8: {
          p.i8.resize(n);
          for (auto& x : p.i8) x = static_cast<int8_t>(r.u8());
          break;
        }
        case Dtype::u8: {
          p.u8.resize(n);
          if (n) r.bytes(p.u8);
          break;
        }
        case Dtype::i32: {
          p.i32.resize(n);
          for (auto& x : p.i32) x = r.i32();
          break;
        }
      }
      records.push_back(std::move(p));
    }
    m.layers.push_back(std::move(layer));
    m.params.push_back(std::move(records));
  }
  require(r.at_eof(), Errc::truncated, "trailing bytes after last layer");
  m.validate();
  return m;
}

// File size from the format arithmetic alone; must match what save_model
// writes byte for byte.
inline int64_t expected_file_bytes(const ModelGraph& m) {
  int64_t n = kModelHeaderBytes;
  n += 2 + 5 * 4;  // meta pseudo-layer
  for (size_t li = 0; li < m.layers.size(); ++li) {
    n += 2 + 4 * static_cast<int64_t>(m.layers[li].dims.size());
    for (const ParamTensor& p : m.params[li]) {
      n += kParamRecordOverheadBytes + static_cast<int64_t>(p.byte_len());
    }
  }
  return n;
}

}  // namespace usgrip
