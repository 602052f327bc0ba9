#include <cmath>
#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "usgrip/dataset.hpp"
#include "usgrip/model_io.hpp"
#include "usgrip/quantize.hpp"

using namespace usgrip;

namespace {

Dataset tiny_frames(int frames_per_class, uint64_t seed) {
  GenConfig cfg;
  cfg.frames_per_class = frames_per_class;
  cfg.height = 640;
  cfg.width = 640;
  cfg.seed = seed;
  Dataset d = downsample8(generate(cfg));
  split_dataset(d, 0.25f, seed);
  return d;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("quantize") {

TEST_CASE("symmetric i8 quantization matches the hand-worked example") {
  // w = [-0.5, 0.25, 0.5] -> scale 0.5/127, q = [-127, 64, 127]
  const std::vector<float> w{-0.5f, 0.25f, 0.5f};
  const float scale = symmetric_scale(w);
  CHECK(scale == doctest::Approx(0.5 / 127.0).epsilon(1e-9));
  CHECK(quantize_symmetric_i8(w[0], scale) == -127);
  CHECK(quantize_symmetric_i8(w[1], scale) == 64);  // 63.5 rounds away from zero
  CHECK(quantize_symmetric_i8(w[2], scale) == 127);
}

TEST_CASE("symmetric round trip error is bounded by scale/2") {
  Xoshiro256ss rng(5);
  std::vector<float> w(257);
  for (auto& v : w) v = rng.uniform(-2.0f, 2.0f);
  const float scale = symmetric_scale(w);
  for (float v : w) {
    const float back = scale * static_cast<float>(quantize_symmetric_i8(v, scale));
    CHECK(std::abs(back - v) <= scale / 2.0f + 1e-7f);
  }
}

TEST_CASE("all-zero weight tensor gets the sentinel scale 1.0") {
  const std::vector<float> w(16, 0.0f);
  CHECK(symmetric_scale(w) == 1.0f);
}

TEST_CASE("affine u8 parameters match the hand-worked examples") {
  // range [-1, 1]: scale 2/255, zero_point 128.
  const QuantParams qp = affine_from_range(-1.0f, 1.0f);
  CHECK(qp.scale == doctest::Approx(2.0 / 255.0).epsilon(1e-9));
  CHECK(qp.zero_point == 128);
  CHECK(quantize_affine_u8(qp, 0.0f) == 128);
  CHECK(dequantize(qp, 128) == 0.0f);

  // scale 0.01, zero_point 0: q = 100 -> 1.0.
  CHECK(dequantize(QuantParams{0.01f, 0}, 100) == doctest::Approx(1.0).epsilon(1e-6));

  // Zero-range sentinel.
  const QuantParams z = affine_from_range(0.5f, 0.5f);
  CHECK(z.scale == 1.0f);
  CHECK(z.zero_point == 128);
}

TEST_CASE("affine round trip brackets the range endpoints") {
  const QuantParams qp = affine_from_range(-0.3f, 1.7f);
  const float back_min = dequantize(qp, quantize_affine_u8(qp, -0.3f));
  const float back_max = dequantize(qp, quantize_affine_u8(qp, 1.7f));
  CHECK(back_min <= -0.3f + qp.scale);
  CHECK(back_max >= 1.7f - qp.scale);
  // Saturation is monotone.
  CHECK(quantize_affine_u8(qp, -10.0f) == 0);
  CHECK(quantize_affine_u8(qp, 10.0f) == 255);
}

TEST_CASE("f16 model: weights round through binary16, payload halves") {
  ModelGraph m = build_default_model(42);
  // Plant a value with a known binary16 rounding.
  m.params[0][0].f32[0] = 0.1f;
  ModelGraph q = quantize_f16(m);
  CHECK(q.quant == QuantMode::f16);
  CHECK(q.params[0][0].f32[0] == 0.0999755859375f);
  CHECK(q.payload_bytes() * 2 == m.payload_bytes());

  // Exact equivalence oracle: the f16 model's forward equals an f32 model
  // whose weights were round-tripped through binary16.
  ModelGraph manual = m;
  for (auto& lp : manual.params)
    for (auto& p : lp)
      for (int64_t i = 0; i < p.f32.size(); ++i) p.f32[i] = f16_to_f32(f32_to_f16(p.f32[i]));

  Dataset d = tiny_frames(4, 3);
  for (int i = 0; i < d.count(); ++i) {
    const TensorT<uint8_t> frame = frame_from_bytes(d.frame(i), m.meta);
    Tensor a = quantized_forward(q, frame).probs;
    Tensor b = forward(manual, frame);
    CHECK(std::memcmp(a.data(), b.data(), 16) == 0);
  }
}

TEST_CASE("dynamic model keeps f32 biases and shrinks weights to a quarter") {
  ModelGraph m = build_default_model(42);
  ModelGraph q = quantize_dynamic(m);
  CHECK(q.quant == QuantMode::dynamic_i8);
  // 94,408 weight bytes (i8) + 4,208 float bytes (biases + norm params).
  CHECK(q.payload_bytes() == 94408 + 4208);
  const double ratio = static_cast<double>(q.payload_bytes()) / static_cast<double>(m.payload_bytes());
  CHECK(ratio <= 0.35);
}

TEST_CASE("quantization is single-shot: re-quantizing is rejected") {
  ModelGraph m = build_default_model(1);
  ModelGraph f16 = quantize_f16(m);
  ModelGraph dyn = quantize_dynamic(m);
  CHECK_THROWS_AS(quantize_f16(f16), Error);
  CHECK_THROWS_AS(quantize_dynamic(f16), Error);
  CHECK_THROWS_AS(quantize_f16(dyn), Error);
  CalibrationProfile p;
  p.sample_count = 1;
  p.layer_minmax.assign(m.layers.size(), {0.0f, 1.0f});
  CHECK_THROWS_AS(quantize_uint8(dyn, p), Error);
}

TEST_CASE("calibration profile brackets observations and merges as a monoid") {
  ModelGraph m = build_default_model(42);
  Dataset d = tiny_frames(4, 9);

  // Untrained model, all-zero frame: every pre-softmax layer emits exactly 0.
  TensorT<uint8_t> zero({80, 80, 1});
  CalibrationProfile pz = calibrate_one(m, zero);
  for (size_t li = 0; li + 1 < pz.layer_minmax.size(); ++li) {
    CHECK(pz.layer_minmax[li].first <= 0.0f);
    CHECK(pz.layer_minmax[li].second >= 0.0f);
  }
  // The softmax layer emits probabilities.
  CHECK(pz.layer_minmax.back().first >= 0.0f);
  CHECK(pz.layer_minmax.back().second <= 1.0f);

  std::vector<int> idx(static_cast<size_t>(d.count()));
  for (int i = 0; i < d.count(); ++i) idx[static_cast<size_t>(i)] = i;
  CalibrationProfile batch = calibrate(m, d, idx);
  CHECK(batch.sample_count == d.count());

  CalibrationProfile merged;
  for (int i : idx) {
    merged = merge_profiles(merged, calibrate_one(m, frame_from_bytes(d.frame(i), m.meta)));
  }
  REQUIRE(merged.layer_minmax.size() == batch.layer_minmax.size());
  for (size_t li = 0; li < batch.layer_minmax.size(); ++li) {
    CHECK(batch.layer_minmax[li].first == merged.layer_minmax[li].first);
    CHECK(batch.layer_minmax[li].second == merged.layer_minmax[li].second);
  }

  // Determinism.
  CalibrationProfile again = calibrate(m, d, idx);
  for (size_t li = 0; li < batch.layer_minmax.size(); ++li) {
    CHECK(std::bit_cast<uint32_t>(batch.layer_minmax[li].first) ==
          std::bit_cast<uint32_t>(again.layer_minmax[li].first));
    CHECK(std::bit_cast<uint32_t>(batch.layer_minmax[li].second) ==
          std::bit_cast<uint32_t>(again.layer_minmax[li].second));
  }

  CHECK_THROWS_AS(calibrate(m, d, std::span<const int>{}), Error);
}

TEST_CASE("uint8 pipeline folds batchnorm and runs end to end") {
  ModelGraph m = build_default_model(42);
  Dataset d = tiny_frames(8, 11);
  std::vector<int> idx{0, 1, 2, 3, 4, 5, 6, 7};
  CalibrationProfile profile = calibrate(m, d, idx);

  ModelGraph q = quantize_uint8(m, profile);
  CHECK(q.quant == QuantMode::uint8_affine);
  for (const auto& l : q.layers) CHECK(l.kind != LayerKind::batchnorm);

  // Weights u8 (94,408) + biases i32 (316 * 4 = 1,264).
  CHECK(q.payload_bytes() == 94408 + 1264);

  for (int i = 0; i < 4; ++i) {
    InferenceResult r = quantized_forward(q, frame_from_bytes(d.frame(i), q.meta));
    float sum = 0.0f;
    for (int j = 0; j < 4; ++j) {
      CHECK(std::isfinite(r.probs[j]));
      sum += r.probs[j];
    }
    CHECK(std::abs(sum - 1.0f) < 1e-5f);
  }

  // Missing-layer profile rejected.
  CalibrationProfile short_profile = profile;
  short_profile.layer_minmax.pop_back();
  CHECK_THROWS_AS(quantize_uint8(m, short_profile), Error);
  CalibrationProfile empty;
  CHECK_THROWS_AS(quantize_uint8(m, empty), Error);
}

TEST_CASE("all quantized paths emit probabilities summing to one, with timing") {
  ModelGraph m = build_default_model(23);
  Dataset d = tiny_frames(4, 23);
  std::vector<int> idx{0, 1, 2, 3};
  ModelGraph f16 = quantize_f16(m);
  ModelGraph dyn = quantize_dynamic(m);
  ModelGraph u8 = quantize_uint8(m, calibrate(m, d, idx));

  for (const ModelGraph* model : {&m, &f16, &dyn, &u8}) {
    InferenceResult r = quantized_forward(*model, frame_from_bytes(d.frame(0), m.meta));
    float sum = 0.0f;
    for (int j = 0; j < 4; ++j) sum += r.probs[j];
    CHECK(std::abs(sum - 1.0f) < 1e-5f);
    CHECK(r.micros >= 0);
  }
}

TEST_CASE("quantized models survive the disk round trip") {
  ModelGraph m = build_default_model(31);
  Dataset d = tiny_frames(4, 31);
  std::vector<int> idx{0, 1, 2, 3};

  ModelGraph f16 = quantize_f16(m);
  ModelGraph dyn = quantize_dynamic(m);
  ModelGraph u8 = quantize_uint8(m, calibrate(m, d, idx));
  const TensorT<uint8_t> frame = frame_from_bytes(d.frame(1), m.meta);

  int i = 0;
  for (const ModelGraph* model : {&f16, &dyn, &u8}) {
    const std::string path = temp_path("usgrip_q_rt" + std::to_string(i++) + ".uqm");
    save_model(*model, path);
    ModelGraph back = load_model(path);
    CHECK(back.quant == model->quant);
    Tensor a = quantized_forward(*model, frame).probs;
    Tensor b = quantized_forward(back, frame).probs;
    CHECK(std::memcmp(a.data(), b.data(), 16) == 0);
    std::filesystem::remove(path);
  }
}

TEST_CASE("file size ordering matches the compression story") {
  ModelGraph m = build_default_model(42);
  Dataset d = tiny_frames(4, 5);
  std::vector<int> idx{0, 1, 2, 3};
  const std::string pf32 = temp_path("usgrip_sz_f32.uqm");
  const std::string pf16 = temp_path("usgrip_sz_f16.uqm");
  const std::string pdyn = temp_path("usgrip_sz_dyn.uqm");
  const std::string pu8 = temp_path("usgrip_sz_u8.uqm");
  const int64_t s32 = save_model(m, pf32);
  const int64_t s16 = save_model(quantize_f16(m), pf16);
  const int64_t sdyn = save_model(quantize_dynamic(m), pdyn);
  const int64_t su8 = save_model(quantize_uint8(m, calibrate(m, d, idx)), pu8);

  CHECK(s32 > s16);
  CHECK(s16 > sdyn);
  CHECK(std::abs(sdyn - su8) < sdyn / 10);  // dynamic and uint8 land together
  for (const auto& p : {pf32, pf16, pdyn, pu8}) std::filesystem::remove(p);
}

}  // TEST_SUITE
