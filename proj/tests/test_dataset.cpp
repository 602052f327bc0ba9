#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "usgrip/dataset.hpp"

using namespace usgrip;

namespace {

GenConfig small_config(uint64_t seed = 42) {
  GenConfig cfg;
  cfg.frames_per_class = 6;
  cfg.height = 160;
  cfg.width = 160;
  cfg.seed = seed;
  return cfg;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("generate honors frame count and per-class balance") {
  GenConfig cfg = small_config();
  Dataset d = generate(cfg);
  CHECK(d.count() == 24);
  std::array<int, 4> counts{};
  for (uint8_t l : d.labels) counts[l]++;
  for (int c = 0; c < 4; ++c) CHECK(counts[static_cast<size_t>(c)] == 6);
}

TEST_CASE("generate is deterministic: same seed, bit-identical pixels") {
  GenConfig cfg = small_config(7);
  Dataset a = generate(cfg);
  Dataset b = generate(cfg);
  CHECK(a.pixels == b.pixels);
  CHECK(a.labels == b.labels);

  cfg.seed = 8;
  Dataset c = generate(cfg);
  CHECK(a.pixels != c.pixels);
}

TEST_CASE("per-frame generation is order-independent") {
  GenConfig cfg = small_config(9);
  Dataset d = generate(cfg);
  // Frame 5 regenerated in isolation matches the batch result.
  const std::vector<uint8_t> lone = generate_frame(cfg, 5);
  const auto batch = d.frame(5);
  REQUIRE(lone.size() == batch.size());
  CHECK(std::equal(lone.begin(), lone.end(), batch.begin()));
}

TEST_CASE("per-class mean pixel values are within 1% of each other") {
  GenConfig cfg;
  cfg.frames_per_class = 40;  // enough frames for stable means, cheap to run
  cfg.height = 320;
  cfg.width = 320;
  cfg.seed = 42;
  Dataset d = generate(cfg);
  const std::array<double, 4> means = per_class_means(d);
  double lo = means[0], hi = means[0];
  for (double m : means) {
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  CHECK(hi / lo < 1.01);
}

TEST_CASE("split produces 1800/600 on the default shape") {
  Dataset d;
  d.height = 8;
  d.width = 8;
  d.seed = 1;
  const int n = 2400;
  d.pixels.assign(static_cast<size_t>(n) * 64, 0);
  for (int i = 0; i < n; ++i) d.labels.push_back(static_cast<uint8_t>(i % 4));
  d.split.assign(static_cast<size_t>(n), kSplitTrain);

  split_dataset(d, 0.25f, 42);
  int test = 0;
  std::array<int, 4> per_class_test{};
  for (int i = 0; i < n; ++i) {
    if (d.split[static_cast<size_t>(i)] == kSplitTest) {
      ++test;
      per_class_test[d.labels[static_cast<size_t>(i)]]++;
    }
  }
  CHECK(test == 600);
  CHECK(n - test == 1800);
  for (int c = 0; c < 4; ++c) CHECK(per_class_test[static_cast<size_t>(c)] == 150);
}

TEST_CASE("split of 4 frames yields 3 train / 1 test") {
  Dataset d;
  d.height = 2;
  d.width = 2;
  d.pixels.assign(16, 0);
  d.labels = {0, 1, 2, 3};
  d.split.assign(4, kSplitTrain);
  split_dataset(d, 0.25f, 5);
  int test = 0;
  for (uint8_t s : d.split) test += (s == kSplitTest);
  CHECK(test == 1);
}

TEST_CASE("split is deterministic and fraction is validated") {
  GenConfig cfg = small_config(3);
  Dataset a = generate(cfg);
  Dataset b = generate(cfg);
  split_dataset(a, 0.25f, 99);
  split_dataset(b, 0.25f, 99);
  CHECK(a.split == b.split);
  split_dataset(b, 0.25f, 100);
  CHECK(a.split != b.split);
  CHECK_THROWS_AS(split_dataset(a, 0.0f, 1), Error);
  CHECK_THROWS_AS(split_dataset(a, 1.0f, 1), Error);
}

TEST_CASE("split keeps every class within one frame of the fraction") {
  Dataset d;
  d.height = 2;
  d.width = 2;
  d.pixels.assign(4 * 37, 0);
  // Unbalanced classes: 10, 9, 9, 9.
  for (int i = 0; i < 37; ++i) d.labels.push_back(static_cast<uint8_t>(i % 4));
  d.split.assign(37, kSplitTrain);
  split_dataset(d, 0.25f, 7);
  std::array<int, 4> total{}, test{};
  for (int i = 0; i < 37; ++i) {
    total[d.labels[static_cast<size_t>(i)]]++;
    test[d.labels[static_cast<size_t>(i)]] += (d.split[static_cast<size_t>(i)] == kSplitTest);
  }
  int test_sum = 0;
  for (int c = 0; c < 4; ++c) {
    CHECK(std::abs(static_cast<double>(test[static_cast<size_t>(c)]) -
                   0.25 * total[static_cast<size_t>(c)]) <= 1.0);
    test_sum += test[static_cast<size_t>(c)];
  }
  CHECK(test_sum == 9);  // round(37 * 0.25)
}

TEST_CASE("downsample of a constant image is constant") {
  std::vector<uint8_t> img(64 * 64, 7);
  const std::vector<uint8_t> out = downsample8(img, 64, 64);
  CHECK(out.size() == 64);
  for (uint8_t v : out) CHECK(v == 7);
}

TEST_CASE("downsample block mean rounds half away from zero") {
  std::vector<uint8_t> img(64);
  for (int i = 0; i < 64; ++i) img[static_cast<size_t>(i)] = static_cast<uint8_t>(i);
  const std::vector<uint8_t> out = downsample8(img, 8, 8);
  REQUIRE(out.size() == 1);
  CHECK(out[0] == 32);  // mean 31.5 rounds to 32
}

TEST_CASE("downsample is a 64x byte reduction and rejects bad sizes") {
  std::vector<uint8_t> img(640 * 640, 1);
  const std::vector<uint8_t> out = downsample8(img, 640, 640);
  CHECK(out.size() == 6400);
  CHECK(img.size() / out.size() == 64);
  std::vector<uint8_t> bad(630 * 640);
  CHECK_THROWS_AS(downsample8(bad, 630, 640), Error);
}

TEST_CASE("downsample commutes with constant shifts") {
  GenConfig cfg = small_config(11);
  Dataset d = generate(cfg);
  const auto f = d.frame(0);
  std::vector<uint8_t> shifted(f.begin(), f.end());
  const uint8_t c = 9;
  bool in_range = true;
  for (auto& v : shifted) {
    if (v > 255 - c) in_range = false;
    v = static_cast<uint8_t>(v + c);
  }
  REQUIRE(in_range);
  const std::vector<uint8_t> a = downsample8(f, d.height, d.width);
  const std::vector<uint8_t> b = downsample8(shifted, d.height, d.width);
  for (size_t i = 0; i < a.size(); ++i) CHECK(static_cast<int>(b[i]) - a[i] == c);
}

TEST_CASE("dataset file round-trips bit-exactly and has the documented size") {
  GenConfig cfg = small_config(21);
  Dataset d = generate(cfg);
  split_dataset(d, 0.25f, 21);
  const std::string path = temp_path("usgrip_ds_roundtrip.ugd");
  save_dataset(d, path);

  const auto file_size = std::filesystem::file_size(path);
  CHECK(static_cast<int64_t>(file_size) ==
        kDatasetHeaderBytes + static_cast<int64_t>(d.count()) * (d.frame_bytes() + 2));

  Dataset back = load_dataset(path);
  CHECK(back.pixels == d.pixels);
  CHECK(back.labels == d.labels);
  CHECK(back.split == d.split);
  CHECK(back.seed == d.seed);
  CHECK(back.height == d.height);
  CHECK(back.width == d.width);
  std::filesystem::remove(path);
}

TEST_CASE("downsample-on-load matches downsampling after load") {
  GenConfig cfg = small_config(23);
  Dataset d = generate(cfg);
  const std::string path = temp_path("usgrip_ds_down.ugd");
  save_dataset(d, path);
  Dataset small = load_dataset(path, true);
  Dataset manual = downsample8(d);
  CHECK(small.height == 20);
  CHECK(small.width == 20);
  CHECK(small.pixels == manual.pixels);
  std::filesystem::remove(path);
}

TEST_CASE("loader rejects corrupted files with distinct errors") {
  GenConfig cfg = small_config(31);
  cfg.height = 80;
  cfg.width = 80;
  Dataset d = generate(cfg);
  const std::string path = temp_path("usgrip_ds_bad.ugd");
  save_dataset(d, path);

  auto mutate = [&](int64_t offset, uint8_t value) {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(offset);
    f.put(static_cast<char>(value));
  };

  SUBCASE("bad magic") {
    mutate(0, 'X');
    CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("bad_magic"), Error);
  }
  SUBCASE("bad version") {
    mutate(4, 9);
    try {
      load_dataset(path);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::bad_version);
    }
  }
  SUBCASE("label byte 7") {
    mutate(kDatasetHeaderBytes, 7);
    try {
      load_dataset(path);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::bad_label);
    }
  }
  SUBCASE("truncation") {
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 100);
    try {
      load_dataset(path);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::truncated);
    }
  }
  std::filesystem::remove(path);
}

}  // TEST_SUITE
