#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "usgrip/error.hpp"
#include "usgrip/io_util.hpp"
#include "usgrip/rng.hpp"

namespace usgrip {

inline constexpr int kNumClasses = 4;
inline constexpr std::array<const char*, 4> kGestureNames = {"open_hand", "index_pinch",
                                                             "middle_pinch", "ring_pinch"};

inline constexpr uint8_t kSplitTrain = 0;
inline constexpr uint8_t kSplitTest = 1;

// Synthetic frame model: speckle background, three bright elliptical "muscle"
// blobs whose vertical placement encodes the class, and one high-intensity
// horizontal "bone" band. Blob amplitude statistics are identical across
// classes, so per-class mean intensity carries no label signal.
struct GenConfig {
  int classes = kNumClasses;
  int frames_per_class = 600;
  int height = 640;
  int width = 640;
  uint64_t seed = 42;
  int noise_amplitude = 14;       // speckle: uniform in [-A, A]
  float class_sep = 0.046f;       // vertical blob offset per class unit, fraction of H
  float jitter = 0.032f;          // per-frame vertical blob jitter, fraction of H
  float contrast_lo = 0.55f;      // per-frame contrast multiplier lower bound
  float blob_amp = 62.0f;
  float bone_amp = 110.0f;

  void validate() const {
    require(classes == kNumClasses, Errc::bad_config, "class count is fixed at 4");
    require(frames_per_class >= 4, Errc::bad_config, "frames_per_class must be >= 4");
    require(height >= 80 && width >= 80, Errc::bad_config, "native size must be >= 80x80");
  }

  int frame_count() const { return classes * frames_per_class; }
};

struct Dataset {
  int height = 0;
  int width = 0;
  uint64_t seed = 0;
  std::vector<uint8_t> pixels;  // count * height * width, row-major per frame
  std::vector<uint8_t> labels;
  std::vector<uint8_t> split;   // kSplitTrain / kSplitTest

  int count() const { return static_cast<int>(labels.size()); }
  int64_t frame_bytes() const { return static_cast<int64_t>(height) * width; }

  std::span<const uint8_t> frame(int i) const {
    return {pixels.data() + static_cast<size_t>(i) * static_cast<size_t>(frame_bytes()),
            static_cast<size_t>(frame_bytes())};
  }
  std::span<uint8_t> frame(int i) {
    return {pixels.data() + static_cast<size_t>(i) * static_cast<size_t>(frame_bytes()),
            static_cast<size_t>(frame_bytes())};
  }

  std::vector<int> indices_of_split(uint8_t which) const {
    std::vector<int> out;
    for (int i = 0; i < count(); ++i) {
      if (split[static_cast<size_t>(i)] == which) out.push_back(i);
    }
    return out;
  }

  void validate() const {
    require(static_cast<int64_t>(pixels.size()) == frame_bytes() * count(), Errc::shape_mismatch,
            "pixel buffer does not match count * H * W");
    require(split.size() == labels.size(), Errc::shape_mismatch, "split/label length mismatch");
  }
};

inline uint8_t frame_label(const GenConfig& cfg, int index) {
  return static_cast<uint8_t>(index % cfg.classes);
}

namespace detail {

// Class -> per-blob vertical offsets, in units of cfg.class_sep. Distinct
// patterns; each row uses the same multiset {-1, 0, +1} so that blob depth
// statistics match across classes.
inline constexpr int kClassDy[4][3] = {
    {-1, 0, +1},
    {+1, -1, 0},
    {0, +1, -1},
    {-1, +1, 0},
};

inline constexpr float kBlobBaseY[3] = {0.30f, 0.44f, 0.34f};

inline int round_half_away(float v) {
  return static_cast<int>(v >= 0.0f ? std::floor(v + 0.5f) : std::ceil(v - 0.5f));
}

}  // namespace detail

// Pure per-frame generator: pixels depend only on (cfg, index). Draw order is
// pinned: contrast, then per-blob jitter (x, y, radius, amplitude), then
// per-pixel speckle in row-major order.
inline std::vector<uint8_t> generate_frame(const GenConfig& cfg, int index) {
  const int h = cfg.height, w = cfg.width;
  const uint8_t cls = frame_label(cfg, index);
  Xoshiro256ss rng(stream_seed(cfg.seed, static_cast<uint64_t>(index)));

  const float contrast = rng.uniform(cfg.contrast_lo, 1.0f);

  struct Blob {
    float cx, cy, rx, ry, amp;
  };
  std::array<Blob, 3> blobs;
  for (int i = 0; i < 3; ++i) {
    const float jx = rng.uniform(-0.015f, 0.015f);
    const float jy = rng.uniform(-cfg.jitter, cfg.jitter);
    const float jr = rng.uniform(-0.10f, 0.10f);
    const float ja = rng.uniform(-0.08f, 0.08f);
    blobs[static_cast<size_t>(i)] = {
        static_cast<float>(w) * (0.22f + 0.28f * static_cast<float>(i) + jx),
        static_cast<float>(h) *
            (detail::kBlobBaseY[i] + cfg.class_sep * static_cast<float>(detail::kClassDy[cls][i]) + jy),
        static_cast<float>(w) * 0.085f * (1.0f + jr),
        static_cast<float>(h) * 0.065f * (1.0f + jr),
        cfg.blob_amp * contrast * (1.0f + ja),
    };
  }

  // Structural (noise-free) layer.
  std::vector<float> structure(static_cast<size_t>(h) * static_cast<size_t>(w), 0.0f);
  for (const Blob& b : blobs) {
    const int y0 = std::max(0, static_cast<int>(b.cy - b.ry));
    const int y1 = std::min(h - 1, static_cast<int>(b.cy + b.ry) + 1);
    const int x0 = std::max(0, static_cast<int>(b.cx - b.rx));
    const int x1 = std::min(w - 1, static_cast<int>(b.cx + b.rx) + 1);
    for (int y = y0; y <= y1; ++y) {
      const float dy = (static_cast<float>(y) - b.cy) / b.ry;
      for (int x = x0; x <= x1; ++x) {
        const float dx = (static_cast<float>(x) - b.cx) / b.rx;
        const float d2 = dx * dx + dy * dy;
        if (d2 < 1.0f) structure[static_cast<size_t>(y) * w + x] += b.amp * (1.0f - d2);
      }
    }
  }
  {
    const float yc = 0.80f * static_cast<float>(h);
    const float half = 0.04f * static_cast<float>(h);
    const int y0 = std::max(0, static_cast<int>(yc - half));
    const int y1 = std::min(h - 1, static_cast<int>(yc + half) + 1);
    for (int y = y0; y <= y1; ++y) {
      const float t = (static_cast<float>(y) - yc) / half;
      if (t * t >= 1.0f) continue;
      const float add = cfg.bone_amp * (1.0f - t * t);
      for (int x = 0; x < w; ++x) structure[static_cast<size_t>(y) * w + x] += add;
    }
  }

  constexpr int kBase = 28;
  const uint32_t noise_span = static_cast<uint32_t>(2 * cfg.noise_amplitude + 1);
  std::vector<uint8_t> out(static_cast<size_t>(h) * static_cast<size_t>(w));
  for (size_t p = 0; p < out.size(); ++p) {
    const int noise = static_cast<int>(rng.below(noise_span)) - cfg.noise_amplitude;
    const int v = kBase + noise + detail::round_half_away(structure[p]);
    out[p] = static_cast<uint8_t>(std::clamp(v, 0, 255));
  }
  return out;
}

inline Dataset generate(const GenConfig& cfg) {
  cfg.validate();
  Dataset d;
  d.height = cfg.height;
  d.width = cfg.width;
  d.seed = cfg.seed;
  const int n = cfg.frame_count();
  d.pixels.resize(static_cast<size_t>(n) * static_cast<size_t>(d.frame_bytes()));
  d.labels.resize(static_cast<size_t>(n));
  d.split.assign(static_cast<size_t>(n), kSplitTrain);
  for (int i = 0; i < n; ++i) {
    d.labels[static_cast<size_t>(i)] = frame_label(cfg, i);
    const std::vector<uint8_t> px = generate_frame(cfg, i);
    std::copy(px.begin(), px.end(), d.frame(i).begin());
  }
  d.validate();
  return d;
}

inline std::array<double, 4> per_class_means(const Dataset& d) {
  std::array<double, 4> sums{};
  std::array<int64_t, 4> counts{};
  for (int i = 0; i < d.count(); ++i) {
    const uint8_t c = d.labels[static_cast<size_t>(i)];
    require(c < 4, Errc::bad_label, "label out of range");
    for (uint8_t v : d.frame(i)) sums[c] += v;
    counts[c] += d.frame_bytes();
  }
  std::array<double, 4> means{};
  for (int c = 0; c < 4; ++c) means[static_cast<size_t>(c)] = counts[static_cast<size_t>(c)] ? sums[static_cast<size_t>(c)] / static_cast<double>(counts[static_cast<size_t>(c)]) : 0.0;
  return means;
}

// Stratified seeded split. Per class: floor(n_c * fraction) test frames, then
// the global remainder (to hit round(N * fraction) total) is distributed one
// frame at a time across seeded-shuffled classes.
inline std::vector<uint8_t> compute_split(std::span<const uint8_t> labels, float test_fraction,
                                          uint64_t seed) {
  require(test_fraction > 0.0f && test_fraction < 1.0f, Errc::bad_config,
          "test fraction must be in (0,1)");
  const int n = static_cast<int>(labels.size());
  require(n > 0, Errc::empty_dataset, "cannot split an empty dataset");

  std::array<std::vector<int>, 4> by_class;
  for (int i = 0; i < n; ++i) {
    require(labels[static_cast<size_t>(i)] < 4, Errc::bad_label, "label out of range");
    by_class[labels[static_cast<size_t>(i)]].push_back(i);
  }

  const int target_total = detail::round_half_away(static_cast<float>(n) * test_fraction);
  std::array<int, 4> take{};
  int assigned = 0;
  for (int c = 0; c < 4; ++c) {
    take[static_cast<size_t>(c)] =
        static_cast<int>(std::floor(static_cast<double>(by_class[static_cast<size_t>(c)].size()) * test_fraction));
    assigned += take[static_cast<size_t>(c)];
  }
  {
    std::vector<int> order{0, 1, 2, 3};
    Xoshiro256ss rng(stream_seed(seed, 0x5EED5EED));
    shuffle(order, rng);
    for (int c : order) {
      if (assigned >= target_total) break;
      if (take[static_cast<size_t>(c)] < static_cast<int>(by_class[static_cast<size_t>(c)].size())) {
        ++take[static_cast<size_t>(c)];
        ++assigned;
      }
    }
  }

  std::vector<uint8_t> split(static_cast<size_t>(n), kSplitTrain);
  for (int c = 0; c < 4; ++c) {
    std::vector<int>& idx = by_class[static_cast<size_t>(c)];
    Xoshiro256ss rng(stream_seed(seed, static_cast<uint64_t>(c)));
    shuffle(idx, rng);
    for (int i = 0; i < take[static_cast<size_t>(c)]; ++i) split[static_cast<size_t>(idx[static_cast<size_t>(i)])] = kSplitTest;
  }
  return split;
}

inline void split_dataset(Dataset& d, float test_fraction, uint64_t seed) {
  d.split = compute_split(d.labels, test_fraction, seed);
}

// 8x8 block mean, rounded half away from zero. (sum + 32) >> 6 is exact for
// non-negative sums.
inline std::vector<uint8_t> downsample8(std::span<const uint8_t> frame, int h, int w) {
  require(h % 8 == 0 && w % 8 == 0, Errc::shape_mismatch,
          "downsample requires side lengths divisible by 8");
  require(static_cast<int64_t>(frame.size()) == static_cast<int64_t>(h) * w, Errc::shape_mismatch,
          "frame byte count mismatch");
  const int oh = h / 8, ow = w / 8;
  std::vector<uint8_t> out(static_cast<size_t>(oh) * static_cast<size_t>(ow));
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      uint32_t sum = 0;
      for (int dy = 0; dy < 8; ++dy) {
        const uint8_t* row = frame.data() + static_cast<size_t>(8 * y + dy) * static_cast<size_t>(w) + static_cast<size_t>(8 * x);
        for (int dx = 0; dx < 8; ++dx) sum += row[dx];
      }
      out[static_cast<size_t>(y) * ow + x] = static_cast<uint8_t>((sum + 32) >> 6);
    }
  }
  return out;
}

inline Dataset downsample8(const Dataset& d) {
  Dataset out;
  out.height = d.height / 8;
  out.width = d.width / 8;
  out.seed = d.seed;
  out.labels = d.labels;
  out.split = d.split;
  out.pixels.resize(static_cast<size_t>(d.count()) * static_cast<size_t>(out.frame_bytes()));
  for (int i = 0; i < d.count(); ++i) {
    const std::vector<uint8_t> small = downsample8(d.frame(i), d.height, d.width);
    std::copy(small.begin(), small.end(), out.frame(i).begin());
  }
  return out;
}

// ---- UGD1 file format ----------------------------------------------------
// magic "UGD1" | version u8=1 | count u32 | height u16 | width u16 |
// seed u64 | per frame: label u8, split u8 (0 train / 1 test), H*W pixels.
// Little-endian. Header is 21 bytes.

inline constexpr char kDatasetMagic[4] = {'U', 'G', 'D', '1'};
inline constexpr uint8_t kDatasetVersion = 1;
inline constexpr int64_t kDatasetHeaderBytes = 21;

class DatasetWriter {
 public:
  DatasetWriter(const std::string& path, uint32_t count, uint16_t height, uint16_t width,
                uint64_t seed)
      : file_(open_output(path)), w_(file_), expect_(count), height_(height), width_(width) {
    w_.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(kDatasetMagic), 4));
    w_.u8(kDatasetVersion);
    w_.u32(count);
    w_.u16(height);
    w_.u16(width);
    w_.u64(seed);
  }

  void append(uint8_t label, uint8_t split, std::span<const uint8_t> pixels) {
    require(label < 4, Errc::bad_label, "label out of range");
    require(split <= 1, Errc::bad_split, "split flag must be 0 or 1");
    require(pixels.size() == static_cast<size_t>(height_) * width_, Errc::shape_mismatch,
            "frame byte count mismatch");
    w_.u8(label);
    w_.u8(split);
    w_.bytes(pixels);
    ++written_;
  }

  void finish() {
    require(written_ == expect_, Errc::io, "frame count mismatch at close");
    file_.flush();
    require(file_.good(), Errc::io, "write failure");
    file_.close();
  }

 private:
  std::ofstream file_;
  ByteWriter w_;
  uint32_t expect_;
  uint32_t written_ = 0;
  uint16_t height_, width_;
};

inline void save_dataset(const Dataset& d, const std::string& path) {
  d.validate();
  DatasetWriter w(path, static_cast<uint32_t>(d.count()), static_cast<uint16_t>(d.height),
                  static_cast<uint16_t>(d.width), d.seed);
  for (int i = 0; i < d.count(); ++i) {
    w.append(d.labels[static_cast<size_t>(i)], d.split[static_cast<size_t>(i)], d.frame(i));
  }
  w.finish();
}

// downsample8_on_load reduces each frame by 8x per axis as it is read, so a
// full-resolution file loads straight into the model's input geometry.
inline Dataset load_dataset(const std::string& path, bool downsample8_on_load = false) {
  std::ifstream file = open_input(path);
  ByteReader r(file);

  uint8_t magic[4];
  r.bytes(magic);
  require(std::memcmp(magic, kDatasetMagic, 4) == 0, Errc::bad_magic, "not a UGD1 file");
  const uint8_t version = r.u8();
  require(version == kDatasetVersion, Errc::bad_version,
          "unsupported dataset version " + std::to_string(version));
  const uint32_t count = r.u32();
  const int h = r.u16();
  const int w = r.u16();
  const uint64_t seed = r.u64();
  require(h > 0 && w > 0, Errc::shape_mismatch, "bad frame geometry");

  const bool reduce = downsample8_on_load && !(h == 80 && w == 80);
  if (reduce) {
    require(h % 8 == 0 && w % 8 == 0, Errc::shape_mismatch,
            "cannot downsample: sides not divisible by 8");
  }

  Dataset d;
  d.height = reduce ? h / 8 : h;
  d.width = reduce ? w / 8 : w;
  d.seed = seed;
  d.labels.resize(count);
  d.split.resize(count);
  d.pixels.resize(static_cast<size_t>(count) * static_cast<size_t>(d.frame_bytes()));

  std::vector<uint8_t> native(static_cast<size_t>(h) * static_cast<size_t>(w));
  for (uint32_t i = 0; i < count; ++i) {
    const uint8_t label = r.u8();
    require(label < 4, Errc::bad_label, "bad_label byte " + std::to_string(label));
    const uint8_t split = r.u8();
    require(split <= 1, Errc::bad_split, "bad split byte " + std::to_string(split));
    d.labels[i] = label;
    d.split[i] = split;
    r.bytes(native);
    if (reduce) {
      const std::vector<uint8_t> small = downsample8(native, h, w);
      std::copy(small.begin(), small.end(), d.frame(static_cast<int>(i)).begin());
    } else {
      std::copy(native.begin(), native.end(), d.frame(static_cast<int>(i)).begin());
    }
  }
  require(r.at_eof(), Errc::truncated, "trailing bytes after last frame");
  d.validate();
  return d;
}

}  // namespace usgrip
