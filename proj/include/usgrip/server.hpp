#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <mutex>
#include <thread>

#include "usgrip/model.hpp"
#include "usgrip/net.hpp"
#include "usgrip/quantize.hpp"
#include "usgrip/wire.hpp"

namespace usgrip {

enum class ServePolicy {
  queue,        // lossless: bounded queue of 64 completed frames
  latest_wins,  // real-time: a newer frame supersedes an unprocessed one
};

inline constexpr int64_t kReassemblyExpiryMs = 500;
inline constexpr size_t kMaxFramesInFlight = 64;
inline constexpr size_t kQueueCapacity = 64;

struct ServerStatsSnapshot {
  uint64_t frames_completed = 0;
  uint64_t replies_sent = 0;
  uint64_t malformed = 0;
  uint64_t duplicates = 0;
  uint64_t expired = 0;
  uint64_t evicted = 0;
  uint64_t inconsistent = 0;
  uint64_t superseded = 0;  // frames replaced before inference (latest_wins) or queue overflow
  uint64_t inference_errors = 0;
};

// One receive loop, one inference worker. The reassembly map is owned by the
// receive loop; completed immutable frames cross to the worker over a bounded
// channel (capacity 1 in latest_wins, 64 in queue mode). The model is shared
// read-only.
class UdpServer {
 public:
  UdpServer(const SockAddr& bind_addr, const ModelGraph& model, ServePolicy policy,
            bool verbose = false)
      : model_(model), policy_(policy), verbose_(verbose) {
    require(model_.input_bytes() == 6400, Errc::shape_mismatch,
            "server expects an 80x80x1 input model, got " +
                std::to_string(model_.input_bytes()) + " input bytes");
    model_.validate();
    socket_.bind(bind_addr);
  }

  ~UdpServer() { stop(); }

  void start() {
    require(!running_.exchange(true), Errc::bad_config, "server already running");
    rx_thread_ = std::thread([this] { receive_loop(); });
    worker_thread_ = std::thread([this] { worker_loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    {
      std::lock_guard<std::mutex> lk(mu_);
      cv_.notify_all();
    }
    if (rx_thread_.joinable()) rx_thread_.join();
    if (worker_thread_.joinable()) worker_thread_.join();
    if (verbose_) log_stats();
  }

  uint16_t port() const { return socket_.local_port(); }

  ServerStatsSnapshot stats() const {
    std::lock_guard<std::mutex> lk(mu_);
    return stats_;
  }

 private:
  struct PendingFrame {
    uint32_t frame_id;
    std::vector<uint8_t> bytes;
    SockAddr from;
  };

  void receive_loop() {
    Reassembler reasm(static_cast<size_t>(model_.input_bytes()), kMaxFramesInFlight,
                      kReassemblyExpiryMs);
    int64_t last_expiry = now_ms();
    while (running_.load(std::memory_order_relaxed)) {
      SockAddr from;
      auto datagram = socket_.recv_from(&from, 50);
      const int64_t now = now_ms();
      if (now - last_expiry >= 100) {
        reasm.expire(now);
        last_expiry = now;
      }
      if (!datagram) continue;
      FrameChunk chunk;
      try {
        chunk = decode_chunk(*datagram);
      } catch (const Error&) {
        std::lock_guard<std::mutex> lk(mu_);
        ++stats_.malformed;
        continue;
      }
      auto done = reasm.feed(chunk, now);
      sync_reasm_counters(reasm.counters());
      if (!done) continue;
      push_frame(PendingFrame{done->frame_id, std::move(done->bytes), from});
    }
    sync_reasm_counters(reasm.counters());
  }

  void sync_reasm_counters(const Reassembler::Counters& c) {
    std::lock_guard<std::mutex> lk(mu_);
    stats_.frames_completed = c.completed;
    stats_.duplicates = c.duplicates;
    stats_.expired = c.expired;
    stats_.evicted = c.evicted;
    stats_.inconsistent = c.inconsistent;
  }

  void push_frame(PendingFrame&& f) {
    std::lock_guard<std::mutex> lk(mu_);
    const size_t cap = (policy_ == ServePolicy::latest_wins) ? 1 : kQueueCapacity;
    if (queue_.size() >= cap) {
      queue_.pop_front();  // drop the oldest pending frame, never block receive
      ++stats_.superseded;
    }
    queue_.push_back(std::move(f));
    cv_.notify_one();
  }

  void worker_loop() {
    while (true) {
      PendingFrame frame;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait_for(lk, std::chrono::milliseconds(50),
                     [this] { return !queue_.empty() || !running_.load(); });
        if (queue_.empty()) {
          if (!running_.load()) return;
          continue;
        }
        frame = std::move(queue_.front());
        queue_.pop_front();
      }
      PredictionMsg reply;
      reply.frame_id = frame.frame_id;
      reply.flags = 0x01;  // only fully reassembled frames get here
      try {
        const InferenceResult r =
            quantized_forward(model_, frame_from_bytes(frame.bytes, model_.meta));
        int arg = 0;
        for (int j = 1; j < 4; ++j) {
          if (r.probs[j] > r.probs[arg]) arg = j;
        }
        reply.predicted_class = static_cast<uint8_t>(arg);
        for (int j = 0; j < 4; ++j) reply.probabilities[static_cast<size_t>(j)] = r.probs[j];
        reply.inference_micros = static_cast<uint32_t>(r.micros);
      } catch (const Error&) {
        std::lock_guard<std::mutex> lk(mu_);
        ++stats_.inference_errors;
        continue;
      }
      try {
        socket_.send_to(encode_prediction(reply), frame.from);
      } catch (const Error&) {
        std::lock_guard<std::mutex> lk(mu_);
        ++stats_.inference_errors;
        continue;
      }
      bool log_now = false;
      {
        std::lock_guard<std::mutex> lk(mu_);
        ++stats_.replies_sent;
        log_now = verbose_ && (stats_.replies_sent % 100 == 0);
      }
      if (log_now) log_stats();
    }
  }

  void log_stats() const {
    const ServerStatsSnapshot s = stats();
    std::fprintf(stderr,
                 "[serve] completed=%llu replies=%llu malformed=%llu dup=%llu expired=%llu "
                 "evicted=%llu superseded=%llu errors=%llu\n",
                 static_cast<unsigned long long>(s.frames_completed),
                 static_cast<unsigned long long>(s.replies_sent),
                 static_cast<unsigned long long>(s.malformed),
                 static_cast<unsigned long long>(s.duplicates),
                 static_cast<unsigned long long>(s.expired),
                 static_cast<unsigned long long>(s.evicted),
                 static_cast<unsigned long long>(s.superseded),
                 static_cast<unsigned long long>(s.inference_errors));
  }

  ModelGraph model_;
  ServePolicy policy_;
  bool verbose_;
  UdpSocket socket_;
  std::atomic<bool> running_{false};
  std::thread rx_thread_;
  std::thread worker_thread_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<PendingFrame> queue_;
  ServerStatsSnapshot stats_;
};

}  // namespace usgrip
