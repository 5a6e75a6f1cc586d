#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coedge/arch.hpp"
#include "coedge/kernels.hpp"

namespace coedge {

struct EngineOptions {
  bool pipelined = true;          // device starts frame t+1 before frame t returns
  double throttle_mbps = 0.0;     // token bucket on socket writes; 0 disables
  int inject_compute_delay_ms = 0;  // edge-side artificial per-segment delay
  int message_timeout_ms = 10000;
  int queue_capacity = 64;        // send and receive queues, per side
};

struct FrameStats {
  std::vector<double> frame_latency_ms;  // completed frames, in frame order
  double throughput_fps = 0.0;           // steady-state, completion to completion
  uint64_t bytes_sent = 0;
  uint64_t bytes_received = 0;
  uint64_t payload_raw_bytes = 0;   // before compression
  uint64_t payload_wire_bytes = 0;  // after compression decision
  double compressed_ratio = 1.0;    // wire / raw over all payloads sent
  int frames_completed = 0;
  int frames_failed = 0;

  double mean_latency_ms() const;
  nlohmann::json to_json() const;
};

// Rate limiter for socket writes, configured in Mbps. Starts empty so a
// B-byte burst takes at least (B - capacity) / rate.
class TokenBucket {
 public:
  explicit TokenBucket(double rate_mbps, size_t capacity_bytes = 4096);
  void consume(size_t bytes);  // sleeps until the bytes are admitted

 private:
  double rate_bytes_per_sec_;
  double capacity_;
  double tokens_ = 0.0;
  std::chrono::steady_clock::time_point last_;
  std::mutex mu_;
};

// Bounded FIFO handoff between the compute loop and the socket threads.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(size_t capacity) : capacity_(capacity) {}

  bool try_push(T v) {
    std::lock_guard<std::mutex> lock(mu_);
    if (closed_ || items_.size() >= capacity_) return false;
    items_.push_back(std::move(v));
    not_empty_.notify_one();
    return true;
  }

  bool push_wait(T v, int timeout_ms) {
    std::unique_lock<std::mutex> lock(mu_);
    if (!not_full_.wait_for(lock, std::chrono::milliseconds(timeout_ms), [&] {
          return closed_ || items_.size() < capacity_;
        })) {
      return false;
    }
    if (closed_) return false;
    items_.push_back(std::move(v));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> try_pop() {
    std::lock_guard<std::mutex> lock(mu_);
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return v;
  }

  std::optional<T> pop_wait(int timeout_ms) {
    std::unique_lock<std::mutex> lock(mu_);
    not_empty_.wait_for(lock, std::chrono::milliseconds(timeout_ms),
                        [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return v;
  }

  // Blocks until an item arrives or the queue is closed and drained.
  std::optional<T> pop_blocking() {
    std::unique_lock<std::mutex> lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return v;
  }

  void close() {
    std::lock_guard<std::mutex> lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  bool closed() const {
    std::lock_guard<std::mutex> lock(mu_);
    return closed_;
  }

 private:
  size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable not_empty_, not_full_;
  std::deque<T> items_;
  bool closed_ = false;
};

struct DeviceRunResult {
  std::vector<Tensor> outputs;  // one per frame; failed frames stay empty
  FrameStats stats;
};

// Edge-side endpoint: accepts one device connection, verifies the CONFIG
// digest, executes its share of the architecture per frame, and returns
// boundary tensors / final results until SHUTDOWN.
class EdgeServer {
 public:
  EdgeServer(std::string bind_host, uint16_t port, Architecture arch, uint64_t seed,
             EngineOptions opts = {});
  ~EdgeServer();

  // Binds and starts serving on a background thread; returns the bound port.
  uint16_t start();
  // Waits for the serve loop to finish and returns edge-side stats.
  FrameStats wait();

  // CLI path: bind, then serve on the calling thread.
  void serve_blocking();

  uint16_t port() const;
  FrameStats stats() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Device-side run: connects, handshakes, pumps the input frames through the
// split execution plan, and collects outputs plus frame statistics.
DeviceRunResult run_device(const std::string& edge_host, uint16_t edge_port,
                           const Architecture& arch, const std::vector<Tensor>& inputs,
                           uint64_t seed, const EngineOptions& opts = {});

// Deterministic random frames for a given input spec.
std::vector<Tensor> make_input_frames(const InputSpec& input, int count, uint64_t seed);

}  // namespace coedge
