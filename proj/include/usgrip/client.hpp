#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include "usgrip/dataset.hpp"
#include "usgrip/net.hpp"
#include "usgrip/wire.hpp"

namespace usgrip {

struct StreamConfig {
  SockAddr target;
  float rate_hz = 10.0f;              // probe acquisition rate
  float inter_frame_delay_s = 0.1f;   // artificial per-frame delay
  int reply_timeout_ms = 1000;
  int max_timeout_streak = 10;
  int max_frames = -1;                // -1: the whole test split

  void validate() const {
    require(rate_hz > 0.0f, Errc::bad_config, "rate must be positive");
    require(inter_frame_delay_s >= 0.0f, Errc::bad_config, "delay must be non-negative");
    require(reply_timeout_ms > 0, Errc::bad_config, "reply timeout must be positive");
  }
};

struct FrameOutcome {
  uint32_t frame_id = 0;
  uint8_t label = 0;
  uint8_t predicted = 0;
  bool replied = false;
  bool correct = false;
  double latency_s = 0.0;  // first chunk sent -> reply received
  uint32_t server_inference_micros = 0;
};

struct ClientReport {
  int frames_sent = 0;
  int replies = 0;
  int lost = 0;
  int correct = 0;
  double accuracy = 0.0;  // over replied frames
  double latency_mean_s = 0.0;
  double latency_p50_s = 0.0;
  double latency_p95_s = 0.0;
  float rate_hz = 0.0f;
  float inter_frame_delay_s = 0.0f;
  std::vector<FrameOutcome> frames;
};

namespace detail {

inline double percentile_nearest_rank(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t rank = static_cast<size_t>(std::ceil(p * static_cast<double>(v.size())));
  return v[std::min(v.size() - 1, rank == 0 ? 0 : rank - 1)];
}

}  // namespace detail

// Streams the dataset's test split: downsample (when frames are native
// resolution), chunk, send, then block for the prediction reply. The
// artificial inter-frame delay applies per frame, after the reply (or its
// timeout); sends are additionally paced to at most rate_hz frame starts.
inline ClientReport stream_client(const Dataset& data, const StreamConfig& cfg) {
  cfg.validate();
  ClientReport report;
  report.rate_hz = cfg.rate_hz;
  report.inter_frame_delay_s = cfg.inter_frame_delay_s;

  std::vector<int> test_idx = data.indices_of_split(kSplitTest);
  if (cfg.max_frames >= 0 && static_cast<int>(test_idx.size()) > cfg.max_frames) {
    test_idx.resize(static_cast<size_t>(cfg.max_frames));
  }
  if (test_idx.empty()) return report;

  const bool needs_downsample = !(data.height == 80 && data.width == 80);
  if (needs_downsample) {
    require(data.height % 8 == 0 && data.width % 8 == 0 && data.height / 8 == 80 &&
                data.width / 8 == 80,
            Errc::shape_mismatch, "client can only downsample 640x640 frames to 80x80");
  }

  UdpSocket sock;
  int timeout_streak = 0;
  uint32_t frame_id = 1;
  auto next_start = std::chrono::steady_clock::now();
  const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(1.0 / static_cast<double>(cfg.rate_hz)));

  for (int idx : test_idx) {
    std::this_thread::sleep_until(next_start);
    next_start = std::chrono::steady_clock::now() + period;

    FrameOutcome outcome;
    outcome.frame_id = frame_id;
    outcome.label = data.labels[static_cast<size_t>(idx)];

    std::vector<uint8_t> small;
    std::span<const uint8_t> frame = data.frame(idx);
    if (needs_downsample) {
      small = downsample8(frame, data.height, data.width);
      frame = small;
    }

    const auto send_time = std::chrono::steady_clock::now();
    for (const FrameChunk& c : chunk_frame(frame, frame_id)) {
      sock.send_to(encode_chunk(c), cfg.target);
    }
    ++report.frames_sent;

    const auto deadline = send_time + std::chrono::milliseconds(cfg.reply_timeout_ms);
    bool got_reply = false;
    while (std::chrono::steady_clock::now() < deadline) {
      const int remaining = static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                                 deadline - std::chrono::steady_clock::now())
                                                 .count());
      auto datagram = sock.recv_from(nullptr, std::max(1, remaining));
      if (!datagram) break;
      PredictionMsg msg;
      try {
        msg = decode_prediction(*datagram);
      } catch (const Error&) {
        continue;  // stray datagram
      }
      if (msg.frame_id != frame_id) continue;  // stale reply from an earlier frame
      outcome.replied = true;
      outcome.predicted = msg.predicted_class;
      outcome.correct = (msg.predicted_class == outcome.label);
      outcome.latency_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - send_time).count();
      outcome.server_inference_micros = msg.inference_micros;
      got_reply = true;
      break;
    }

    if (got_reply) {
      ++report.replies;
      report.correct += outcome.correct;
      timeout_streak = 0;
    } else {
      ++report.lost;
      ++timeout_streak;
      require(timeout_streak <= cfg.max_timeout_streak, Errc::unreachable,
              "no reply for " + std::to_string(timeout_streak) + " consecutive frames from " +
                  cfg.target.str());
    }
    report.frames.push_back(outcome);
    ++frame_id;

    std::this_thread::sleep_for(std::chrono::duration<double>(cfg.inter_frame_delay_s));
  }

  std::vector<double> latencies;
  for (const FrameOutcome& f : report.frames) {
    if (f.replied) latencies.push_back(f.latency_s);
  }
  if (!latencies.empty()) {
    double sum = 0.0;
    for (double v : latencies) sum += v;
    report.latency_mean_s = sum / static_cast<double>(latencies.size());
    report.latency_p50_s = detail::percentile_nearest_rank(latencies, 0.50);
    report.latency_p95_s = detail::percentile_nearest_rank(latencies, 0.95);
  }
  report.accuracy = report.replies > 0
                        ? static_cast<double>(report.correct) / static_cast<double>(report.replies)
                        : 0.0;
  return report;
}

}  // namespace usgrip
