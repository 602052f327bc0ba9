#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "usgrip/model.hpp"
#include "usgrip/model_io.hpp"

using namespace usgrip;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

bool params_bit_equal(const ModelGraph& a, const ModelGraph& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (size_t li = 0; li < a.layers.size(); ++li) {
    if (a.params[li].size() != b.params[li].size()) return false;
    for (size_t pi = 0; pi < a.params[li].size(); ++pi) {
      const ParamTensor& x = a.params[li][pi];
      const ParamTensor& y = b.params[li][pi];
      if (x.dtype != y.dtype || x.shape != y.shape) return false;
      if (std::bit_cast<uint32_t>(x.qp.scale) != std::bit_cast<uint32_t>(y.qp.scale)) return false;
      if (x.qp.zero_point != y.qp.zero_point) return false;
      if (x.f32.size() != y.f32.size()) return false;
      if (x.f32.size() &&
          std::memcmp(x.f32.data(), y.f32.data(), sizeof(float) * static_cast<size_t>(x.f32.size())) != 0)
        return false;
      if (x.f16 != y.f16 || x.i8 != y.i8 || x.u8 != y.u8 || x.i32 != y.i32) return false;
    }
  }
  return true;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("default model pins the parameter count and payload size") {
  ModelGraph m = build_default_model(42);
  // conv 61,312 + batchnorm 736 (learnable 368 + running stats 368) +
  // dense 33,412 = 95,460 stored f32 values.
  CHECK(m.param_count() == 95460);
  CHECK(m.payload_bytes() == 95460 * 4);  // 381,840 bytes, ~382 KB
}

TEST_CASE("shape chain: spatial sizes halve five times down to flatten 256") {
  ModelGraph m = build_default_model(1);
  m.validate();  // walks 80->40->20->10->5->2
  const LayerSpec* first_dense = nullptr;
  for (const auto& l : m.layers) {
    if (l.kind == LayerKind::dense) {
      first_dense = &l;
      break;
    }
  }
  REQUIRE(first_dense != nullptr);
  CHECK(first_dense->dims[0] == 256);
  CHECK(first_dense->dims[1] == 128);
}

TEST_CASE("same seed builds bit-identical models, different seeds differ") {
  ModelGraph a = build_default_model(7);
  ModelGraph b = build_default_model(7);
  ModelGraph c = build_default_model(8);
  CHECK(params_bit_equal(a, b));
  CHECK(!params_bit_equal(a, c));
}

TEST_CASE("forward returns four probabilities summing to one") {
  ModelGraph m = build_default_model(42);
  TensorT<uint8_t> frame({80, 80, 1});
  for (int64_t i = 0; i < frame.size(); ++i) frame[i] = static_cast<uint8_t>(i % 251);
  Tensor probs = forward(m, frame);
  REQUIRE(probs.shape() == std::vector<int>{4});
  float sum = 0.0f;
  for (int i = 0; i < 4; ++i) {
    CHECK(probs[i] > 0.0f);
    CHECK(probs[i] < 1.0f);
    sum += probs[i];
  }
  CHECK(std::abs(sum - 1.0f) < 1e-6f);
}

TEST_CASE("forward is pure: repeated calls bit-identical") {
  ModelGraph m = build_default_model(3);
  TensorT<uint8_t> zero({80, 80, 1});
  TensorT<uint8_t> bright = TensorT<uint8_t>::full({80, 80, 1}, 255);
  Tensor a1 = forward(m, zero);
  Tensor a2 = forward(m, zero);
  Tensor b1 = forward(m, bright);
  Tensor b2 = forward(m, bright);
  CHECK(std::memcmp(a1.data(), a2.data(), 16) == 0);
  CHECK(std::memcmp(b1.data(), b2.data(), 16) == 0);
}

TEST_CASE("forward rejects a wrong input shape") {
  ModelGraph m = build_default_model(42);
  TensorT<uint8_t> bad({64, 64, 1});
  CHECK_THROWS_AS(forward(m, bad), Error);
}

TEST_CASE("model file round-trips bit-exactly including metadata") {
  ModelGraph m = build_default_model(11);
  m.meta.trained_epochs = 17;
  const std::string path = temp_path("usgrip_model_rt.uqm");
  const int64_t written = save_model(m, path);
  CHECK(written == static_cast<int64_t>(std::filesystem::file_size(path)));

  ModelGraph back = load_model(path);
  CHECK(back.quant == QuantMode::f32);
  CHECK(back.meta.trained_epochs == 17);
  CHECK(back.meta.input_h == 80);
  CHECK(params_bit_equal(m, back));
  std::filesystem::remove(path);
}

TEST_CASE("f32 model file size follows the format arithmetic") {
  ModelGraph m = build_default_model(42);
  const std::string path = temp_path("usgrip_model_size.uqm");
  const int64_t written = save_model(m, path);
  CHECK(written == expected_file_bytes(m));
  // 8 header + 22 meta + 166 layer headers + 34 records * 13 + 381,840 payload.
  CHECK(written == 382478);
  std::filesystem::remove(path);
}

TEST_CASE("random small models survive the disk round trip byte for byte") {
  for (uint64_t seed : {101ull, 202ull, 303ull}) {
    ModelGraph m = build_default_model(seed);
    m.meta.trained_epochs = static_cast<uint32_t>(seed);
    const std::string p1 = temp_path("usgrip_model_p1.uqm");
    const std::string p2 = temp_path("usgrip_model_p2.uqm");
    save_model(m, p1);
    ModelGraph back = load_model(p1);
    save_model(back, p2);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::vector<char> b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::vector<char> b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
  }
}

TEST_CASE("loader rejects corruption with distinct error codes") {
  ModelGraph m = build_default_model(5);
  const std::string path = temp_path("usgrip_model_bad.uqm");
  save_model(m, path);

  auto mutate = [&](int64_t offset, uint8_t value) {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(offset);
    f.put(static_cast<char>(value));
  };
  auto expect_code = [&](Errc code) {
    try {
      load_model(path);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == code);
    }
  };

  SUBCASE("corrupt magic") {
    mutate(0, 'X');
    expect_code(Errc::bad_magic);
  }
  SUBCASE("bad version") {
    mutate(4, 2);
    expect_code(Errc::bad_version);
  }
  SUBCASE("truncated file") {
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 7);
    expect_code(Errc::truncated);
  }
  SUBCASE("shape graph validation failure") {
    // First conv's Cout dim lives after header(8) + meta(22) + type/dim_count(2)
    // + kh,kw,cin (12 bytes): flipping it breaks the conv->bn channel chain.
    mutate(8 + 22 + 2 + 12, 9);
    expect_code(Errc::bad_layer_graph);
  }
  std::filesystem::remove(path);
}

TEST_CASE("graph validation rejects structural breakage") {
  ModelGraph m = build_default_model(6);
  SUBCASE("dropping a conv block") {
    m.layers.erase(m.layers.begin(), m.layers.begin() + 4);
    m.params.erase(m.params.begin(), m.params.begin() + 4);
    CHECK_THROWS_AS(m.validate(), Error);
  }
  SUBCASE("non-f32 blob in an unquantized model") {
    m.params[0][0].dtype = Dtype::f16;
    CHECK_THROWS_AS(m.validate(), Error);
  }
}

}  // TEST_SUITE
