#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "usgrip/error.hpp"

namespace usgrip {

// Datagram wire format, big-endian. Two message types share the 4-byte
// prefix: magic 0x5547 ("UG"), version 1, msg_type.

inline constexpr uint16_t kWireMagic = 0x5547;
inline constexpr uint8_t kWireVersion = 1;
inline constexpr uint8_t kMsgFrameChunk = 0x01;
inline constexpr uint8_t kMsgPrediction = 0x02;
inline constexpr size_t kMaxChunkPayload = 1280;
inline constexpr size_t kChunkHeaderBytes = 14;
inline constexpr size_t kPredictionMsgBytes = 30;

struct FrameChunk {
  uint32_t frame_id = 0;
  uint16_t chunk_index = 0;
  uint16_t chunk_count = 1;
  std::vector<uint8_t> payload;
};

struct PredictionMsg {
  uint32_t frame_id = 0;
  uint8_t predicted_class = 0;
  uint8_t flags = 0;  // bit0: frame was complete
  std::array<float, 4> probabilities{};
  uint32_t inference_micros = 0;
};

namespace wire_detail {

inline void put_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(static_cast<uint8_t>(v >> 8));
  b.push_back(static_cast<uint8_t>(v));
}
inline void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  b.push_back(static_cast<uint8_t>(v >> 24));
  b.push_back(static_cast<uint8_t>(v >> 16));
  b.push_back(static_cast<uint8_t>(v >> 8));
  b.push_back(static_cast<uint8_t>(v));
}
inline uint16_t get_u16(std::span<const uint8_t> b, size_t at) {
  return static_cast<uint16_t>((b[at] << 8) | b[at + 1]);
}
inline uint32_t get_u32(std::span<const uint8_t> b, size_t at) {
  return (static_cast<uint32_t>(b[at]) << 24) | (static_cast<uint32_t>(b[at + 1]) << 16) |
         (static_cast<uint32_t>(b[at + 2]) << 8) | static_cast<uint32_t>(b[at + 3]);
}

}  // namespace wire_detail

inline std::vector<uint8_t> encode_chunk(const FrameChunk& c) {
  require(c.payload.size() <= kMaxChunkPayload, Errc::proto, "chunk payload too large");
  require(c.chunk_index < c.chunk_count, Errc::proto, "chunk index out of range");
  std::vector<uint8_t> b;
  b.reserve(kChunkHeaderBytes + c.payload.size());
  wire_detail::put_u16(b, kWireMagic);
  b.push_back(kWireVersion);
  b.push_back(kMsgFrameChunk);
  wire_detail::put_u32(b, c.frame_id);
  wire_detail::put_u16(b, c.chunk_index);
  wire_detail::put_u16(b, c.chunk_count);
  wire_detail::put_u16(b, static_cast<uint16_t>(c.payload.size()));
  b.insert(b.end(), c.payload.begin(), c.payload.end());
  return b;
}

inline FrameChunk decode_chunk(std::span<const uint8_t> b) {
  require(b.size() >= kChunkHeaderBytes, Errc::proto, "datagram shorter than chunk header");
  require(wire_detail::get_u16(b, 0) == kWireMagic, Errc::proto, "bad wire magic");
  require(b[2] == kWireVersion, Errc::proto, "bad wire version");
  require(b[3] == kMsgFrameChunk, Errc::proto, "not a frame chunk");
  FrameChunk c;
  c.frame_id = wire_detail::get_u32(b, 4);
  c.chunk_index = wire_detail::get_u16(b, 8);
  c.chunk_count = wire_detail::get_u16(b, 10);
  const uint16_t payload_len = wire_detail::get_u16(b, 12);
  require(payload_len <= kMaxChunkPayload, Errc::proto, "payload length too large");
  require(b.size() == kChunkHeaderBytes + payload_len, Errc::proto, "payload length mismatch");
  require(c.chunk_index < c.chunk_count, Errc::proto, "chunk index out of range");
  c.payload.assign(b.begin() + kChunkHeaderBytes, b.end());
  return c;
}

inline std::vector<uint8_t> encode_prediction(const PredictionMsg& p) {
  std::vector<uint8_t> b;
  b.reserve(kPredictionMsgBytes);
  wire_detail::put_u16(b, kWireMagic);
  b.push_back(kWireVersion);
  b.push_back(kMsgPrediction);
  wire_detail::put_u32(b, p.frame_id);
  b.push_back(p.predicted_class);
  b.push_back(p.flags);
  for (float v : p.probabilities) wire_detail::put_u32(b, std::bit_cast<uint32_t>(v));
  wire_detail::put_u32(b, p.inference_micros);
  return b;
}

inline PredictionMsg decode_prediction(std::span<const uint8_t> b) {
  require(b.size() == kPredictionMsgBytes, Errc::proto, "prediction message must be 30 bytes");
  require(wire_detail::get_u16(b, 0) == kWireMagic, Errc::proto, "bad wire magic");
  require(b[2] == kWireVersion, Errc::proto, "bad wire version");
  require(b[3] == kMsgPrediction, Errc::proto, "not a prediction message");
  PredictionMsg p;
  p.frame_id = wire_detail::get_u32(b, 4);
  p.predicted_class = b[8];
  p.flags = b[9];
  for (int i = 0; i < 4; ++i) {
    p.probabilities[static_cast<size_t>(i)] =
        std::bit_cast<float>(wire_detail::get_u32(b, 10 + 4 * static_cast<size_t>(i)));
  }
  p.inference_micros = wire_detail::get_u32(b, 26);
  return p;
}

// Even split into ceil(n / 1280) chunks; 6400-byte frames give exactly five
// 1280-byte payloads.
inline std::vector<FrameChunk> chunk_frame(std::span<const uint8_t> frame, uint32_t frame_id) {
  require(!frame.empty(), Errc::proto, "empty frame");
  const size_t count = (frame.size() + kMaxChunkPayload - 1) / kMaxChunkPayload;
  require(count <= 0xFFFF, Errc::proto, "frame too large for a u16 chunk count");
  std::vector<FrameChunk> chunks;
  chunks.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    FrameChunk c;
    c.frame_id = frame_id;
    c.chunk_index = static_cast<uint16_t>(i);
    c.chunk_count = static_cast<uint16_t>(count);
    const size_t off = i * kMaxChunkPayload;
    const size_t len = std::min(kMaxChunkPayload, frame.size() - off);
    c.payload.assign(frame.begin() + static_cast<std::ptrdiff_t>(off),
                     frame.begin() + static_cast<std::ptrdiff_t>(off + len));
    chunks.push_back(std::move(c));
  }
  return chunks;
}

// Single-owner reassembly map. Bounded to `max_frames` in-flight frames
// (oldest evicted); slots expire after `expiry_ms`; a frame id completes at
// most once (recently completed ids are remembered and their late duplicates
// ignored).
class Reassembler {
 public:
  struct Completed {
    uint32_t frame_id;
    std::vector<uint8_t> bytes;
  };

  struct Counters {
    uint64_t completed = 0;
    uint64_t duplicates = 0;
    uint64_t expired = 0;
    uint64_t evicted = 0;
    uint64_t inconsistent = 0;
  };

  explicit Reassembler(size_t expected_frame_bytes, size_t max_frames = 64,
                       int64_t expiry_ms = 500)
      : expected_bytes_(expected_frame_bytes), max_frames_(max_frames), expiry_ms_(expiry_ms) {}

  std::optional<Completed> feed(const FrameChunk& c, int64_t now_ms) {
    if (is_recently_completed(c.frame_id)) {
      ++counters_.duplicates;
      return std::nullopt;
    }
    auto it = slots_.find(c.frame_id);
    if (it == slots_.end()) {
      // Only one chunk count can ever reassemble to the expected frame size;
      // anything else is dropped before it can reserve a slot buffer.
      const size_t want_count = (expected_bytes_ + kMaxChunkPayload - 1) / kMaxChunkPayload;
      if (c.chunk_count != want_count) {
        ++counters_.inconsistent;
        return std::nullopt;
      }
      const size_t total = static_cast<size_t>(c.chunk_count) * kMaxChunkPayload;
      if (slots_.size() >= max_frames_) evict_oldest();
      Slot s;
      s.created_ms = now_ms;
      s.order = next_order_++;
      s.chunk_count = c.chunk_count;
      s.have.assign(c.chunk_count, false);
      s.bytes.assign(total, 0);
      it = slots_.emplace(c.frame_id, std::move(s)).first;
    }
    Slot& s = it->second;
    if (c.chunk_count != s.chunk_count || c.chunk_index >= s.chunk_count) {
      ++counters_.inconsistent;
      return std::nullopt;
    }
    if (s.have[c.chunk_index]) {
      ++counters_.duplicates;
      return std::nullopt;
    }
    const bool is_last = (c.chunk_index + 1u == s.chunk_count);
    if (!is_last && c.payload.size() != kMaxChunkPayload) {
      ++counters_.inconsistent;
      return std::nullopt;
    }
    const size_t off = static_cast<size_t>(c.chunk_index) * kMaxChunkPayload;
    std::copy(c.payload.begin(), c.payload.end(), s.bytes.begin() + static_cast<std::ptrdiff_t>(off));
    if (is_last) s.total_bytes = off + c.payload.size();  // the last chunk pins the frame length
    s.have[c.chunk_index] = true;
    ++s.received;

    if (s.received < s.chunk_count) return std::nullopt;
    Completed done{it->first, std::move(s.bytes)};
    done.bytes.resize(s.total_bytes);
    slots_.erase(it);
    remember_completed(done.frame_id);
    if (done.bytes.size() != expected_bytes_) {
      ++counters_.inconsistent;
      return std::nullopt;
    }
    ++counters_.completed;
    return done;
  }

  size_t expire(int64_t now_ms) {
    size_t dropped = 0;
    for (auto it = slots_.begin(); it != slots_.end();) {
      if (now_ms - it->second.created_ms > expiry_ms_) {
        it = slots_.erase(it);
        ++dropped;
      } else {
        ++it;
      }
    }
    counters_.expired += dropped;
    return dropped;
  }

  size_t in_flight() const { return slots_.size(); }
  const Counters& counters() const { return counters_; }

 private:
  struct Slot {
    int64_t created_ms = 0;
    uint64_t order = 0;
    uint16_t chunk_count = 0;
    uint16_t received = 0;
    size_t total_bytes = 0;
    std::vector<bool> have;
    std::vector<uint8_t> bytes;
  };

  void evict_oldest() {
    auto oldest = slots_.begin();
    for (auto it = slots_.begin(); it != slots_.end(); ++it) {
      if (it->second.order < oldest->second.order) oldest = it;
    }
    if (oldest != slots_.end()) {
      slots_.erase(oldest);
      ++counters_.evicted;
    }
  }

  bool is_recently_completed(uint32_t id) const {
    for (uint32_t c : recent_) {
      if (c == id) return true;
    }
    return false;
  }

  void remember_completed(uint32_t id) {
    recent_.push_back(id);
    if (recent_.size() > 128) recent_.pop_front();
  }

  size_t expected_bytes_;
  size_t max_frames_;
  int64_t expiry_ms_;
  uint64_t next_order_ = 0;
  std::unordered_map<uint32_t, Slot> slots_;
  std::deque<uint32_t> recent_;
  Counters counters_;
};

}  // namespace usgrip
