#include "coedge/engine.hpp"

#include <atomic>
#include <thread>
#include <unordered_map>

#include "coedge/json_util.hpp"
#include "coedge/rng.hpp"
#include "coedge/wire.hpp"
#include "tcp.hpp"

namespace coedge {

using Clock = std::chrono::steady_clock;

static double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

double FrameStats::mean_latency_ms() const {
  if (frame_latency_ms.empty()) return 0.0;
  double sum = 0.0;
  for (double v : frame_latency_ms) sum += v;
  return sum / static_cast<double>(frame_latency_ms.size());
}

nlohmann::json FrameStats::to_json() const {
  return json{{"frame_latency_ms", frame_latency_ms},
              {"mean_latency_ms", mean_latency_ms()},
              {"throughput_fps", throughput_fps},
              {"bytes_sent", bytes_sent},
              {"bytes_received", bytes_received},
              {"payload_raw_bytes", payload_raw_bytes},
              {"payload_wire_bytes", payload_wire_bytes},
              {"compressed_ratio", compressed_ratio},
              {"frames_completed", frames_completed},
              {"frames_failed", frames_failed}};
}

TokenBucket::TokenBucket(double rate_mbps, size_t capacity_bytes)
    : rate_bytes_per_sec_(rate_mbps * 1000.0 * 1000.0 / 8.0),
      capacity_(static_cast<double>(capacity_bytes)),
      last_(Clock::now()) {}

void TokenBucket::consume(size_t bytes) {
  if (rate_bytes_per_sec_ <= 0.0) return;
  std::lock_guard<std::mutex> lock(mu_);
  double remaining = static_cast<double>(bytes);
  while (remaining > 0.0) {
    const auto now = Clock::now();
    tokens_ = std::min(capacity_,
                       tokens_ + rate_bytes_per_sec_ *
                                     std::chrono::duration<double>(now - last_).count());
    last_ = now;
    const double chunk = std::min(remaining, capacity_);
    if (tokens_ >= chunk) {
      tokens_ -= chunk;
      remaining -= chunk;
      continue;
    }
    const double deficit = chunk - tokens_;
    std::this_thread::sleep_for(
        std::chrono::duration<double>(deficit / rate_bytes_per_sec_));
  }
}

namespace {

// One contiguous run of layers on one side. A trailing Communicate marks the
// hand-off (the transfer's origin keeps the Communicate layer).
struct PlanSegment {
  Placement side;
  int first = 0;
  int last = 0;
  bool sends = false;
  bool ship_edges = false;
  bool final_segment = false;
};

std::vector<PlanSegment> build_plan(const Architecture& arch) {
  const MappingScheme mapping = derive_mapping(arch);
  const ShapeTrace trace = infer_shapes(arch);

  std::vector<PlanSegment> plan;
  plan.reserve(mapping.segments.size());
  for (size_t s = 0; s < mapping.segments.size(); ++s) {
    const Segment& seg = mapping.segments[s];
    PlanSegment p;
    p.side = seg.side;
    p.first = seg.first;
    p.last = seg.last;
    p.final_segment = s + 1 == mapping.segments.size();
    p.sends = !p.final_segment;  // every non-final segment ends in Communicate
    if (p.sends) {
      // Edge set crosses too when the other side aggregates with it before
      // any Sample rebuilds one; mirrors the transfer_size rule.
      const LayerShape at = trace[p.last];
      const Placement origin = mapping.placement[p.last];
      if (at.edges_present && at.edges_origin == origin) {
        for (size_t j = p.last + 1; j < arch.layers.size(); ++j) {
          if (arch.layers[j].op == OpKind::Sample) break;
          if (arch.layers[j].op == OpKind::Aggregate && mapping.placement[j] != origin) {
            p.ship_edges = true;
            break;
          }
        }
      }
    }
    plan.push_back(p);
  }
  return plan;
}

struct FrameState {
  Tensor feats;
  Tensor edges;
  bool have_edges = false;
};

// Runs compute layers of one side; Communicate is a no-op here (the caller
// performs the send).
class PlanRunner {
 public:
  PlanRunner(const Architecture& arch, uint64_t seed) : arch_(arch), seed_(seed) {}

  FrameState init_state(Tensor input) const {
    FrameState st;
    st.feats = std::move(input);
    if (arch_.input.has_input_graph) {
      st.edges = make_input_graph_edges(arch_.input.num_nodes);
      st.have_edges = true;
    }
    return st;
  }

  void run_layers(int first, int last, FrameState& st) const {
    for (int i = first; i <= last; ++i) {
      const LayerSpec& layer = arch_.layers[i];
      switch (layer.op) {
        case OpKind::Sample:
          st.edges = kernel_sample(st.feats, layer.setting.sample_k);
          st.have_edges = true;
          break;
        case OpKind::Aggregate:
          if (!st.have_edges) throw EngineError("aggregate without an edge set");
          st.feats = kernel_aggregate(st.feats, st.edges, layer.setting.aggregate_reducer);
          break;
        case OpKind::Combine: {
          const int f_in = static_cast<int>(st.feats.dim(1));
          const int f_out = layer.setting.combine_out_dim;
          st.feats = kernel_combine(st.feats, make_combine_weights(seed_, i, f_in, f_out),
                                    make_combine_bias(seed_, i, f_out));
          break;
        }
        case OpKind::GlobalPooling:
          st.feats = kernel_global_pool(st.feats, layer.setting.pooling_reducer);
          st.have_edges = false;
          st.edges = Tensor();
          break;
        case OpKind::Communicate:
        case OpKind::Identity:
          break;
      }
    }
  }

 private:
  const Architecture& arch_;
  uint64_t seed_;
};

struct WireCounters {
  std::atomic<uint64_t> bytes_sent{0};
  std::atomic<uint64_t> bytes_received{0};
  std::atomic<uint64_t> payload_raw{0};
  std::atomic<uint64_t> payload_wire{0};
};

// Sender thread: pops logical messages, encodes (compressing when smaller),
// throttles, writes. Owns the send direction of the socket.
void sender_loop(net::Socket& sock, BoundedQueue<WireMessage>& queue, TokenBucket* bucket,
                 WireCounters& counters, std::atomic<bool>& sock_error) {
  while (auto msg = queue.pop_blocking()) {
    const uint64_t raw = msg->payload.size();
    std::vector<uint8_t> bytes;
    try {
      bytes = encode_message(*msg);
    } catch (const std::exception&) {
      sock_error = true;
      break;
    }
    counters.payload_raw += raw;
    counters.payload_wire += bytes.size() - kWireHeaderSize;
    if (bucket) bucket->consume(bytes.size());
    try {
      sock.send_all(bytes.data(), bytes.size());
    } catch (const std::exception&) {
      sock_error = true;
      break;
    }
    counters.bytes_sent += bytes.size();
  }
}

// Receiver thread: reads framed messages off the socket into the queue.
// A malformed frame resets the connection (queue closes, error flag set).
void receiver_loop(net::Socket& sock, BoundedQueue<WireMessage>& queue,
                   WireCounters& counters, std::atomic<bool>& sock_error,
                   const std::atomic<bool>* stop) {
  std::vector<uint8_t> buf;
  while (true) {
    uint8_t header[kWireHeaderSize];
    try {
      if (!sock.recv_exact(header, kWireHeaderSize, -1, stop)) break;  // EOF or stop
      const WireHeader h = parse_header(header, kWireHeaderSize);
      buf.assign(kWireHeaderSize + h.payload_len, 0);
      std::copy(header, header + kWireHeaderSize, buf.begin());
      if (h.payload_len > 0 &&
          !sock.recv_exact(buf.data() + kWireHeaderSize, h.payload_len, -1, stop)) {
        throw TruncatedPayloadError("connection closed mid-payload");
      }
      WireMessage msg = decode_message(buf.data(), buf.size());
      counters.bytes_received += buf.size();
      while (!queue.push_wait(std::move(msg), 250)) {
        if (queue.closed() || (stop && *stop)) return;
      }
    } catch (const std::exception&) {
      sock_error = true;
      sock.shutdown_both();
      break;
    }
  }
  queue.close();
}

json config_payload(const Architecture& arch, uint64_t seed) {
  return json{{"arch_digest", arch_digest(arch)}, {"seed", seed}};
}

std::vector<uint8_t> to_bytes(const json& j) {
  const std::string s = j.dump();
  return {s.begin(), s.end()};
}

WireMessage tensors_message(uint64_t frame, const FrameState& st, bool ship_edges) {
  std::vector<Tensor> tensors{st.feats};
  if (ship_edges && st.have_edges) tensors.push_back(st.edges);
  WireMessage msg;
  msg.type = MsgType::Tensors;
  msg.frame_id = frame;
  msg.payload = encode_tensors(tensors);
  return msg;
}

void finalize_throughput(FrameStats& stats, const std::vector<Clock::time_point>& done_at,
                         const std::vector<bool>& done) {
  std::vector<Clock::time_point> times;
  for (size_t f = 0; f < done.size(); ++f) {
    if (done[f]) times.push_back(done_at[f]);
  }
  std::sort(times.begin(), times.end());
  if (times.size() >= 2) {
    const double span_ms = ms_between(times.front(), times.back());
    stats.throughput_fps =
        span_ms > 0 ? (static_cast<double>(times.size()) - 1.0) * 1000.0 / span_ms : 0.0;
  } else if (times.size() == 1 && !stats.frame_latency_ms.empty()) {
    stats.throughput_fps = 1000.0 / stats.frame_latency_ms.front();
  }
  if (stats.payload_raw_bytes > 0) {
    stats.compressed_ratio = static_cast<double>(stats.payload_wire_bytes) /
                             static_cast<double>(stats.payload_raw_bytes);
  }
}

}  // namespace

// --- device ---

DeviceRunResult run_device(const std::string& edge_host, uint16_t edge_port,
                           const Architecture& arch, const std::vector<Tensor>& inputs,
                           uint64_t seed, const EngineOptions& opts) {
  const std::vector<PlanSegment> plan = build_plan(arch);
  std::vector<int> my_segments;  // plan indices executed on the device
  for (int s = 0; s < static_cast<int>(plan.size()); ++s) {
    if (plan[s].side == Placement::Device) my_segments.push_back(s);
  }
  const PlanRunner runner(arch, seed);
  const int n = static_cast<int>(inputs.size());

  net::Socket sock = net::tcp_connect(edge_host, edge_port, opts.message_timeout_ms);
  BoundedQueue<WireMessage> recv_q(opts.queue_capacity);
  BoundedQueue<WireMessage> send_q(opts.queue_capacity);
  WireCounters counters;
  std::atomic<bool> sock_error{false};
  std::atomic<bool> stop_recv{false};
  TokenBucket bucket(opts.throttle_mbps);

  std::thread sender([&] {
    sender_loop(sock, send_q, opts.throttle_mbps > 0 ? &bucket : nullptr, counters,
                sock_error);
  });
  std::thread receiver([&] { receiver_loop(sock, recv_q, counters, sock_error, &stop_recv); });

  auto shutdown_threads = [&] {
    send_q.close();
    stop_recv = true;
    recv_q.close();
    sender.join();
    receiver.join();
    sock.shutdown_both();
  };

  // CONFIG handshake: the edge must hold the identical architecture and seed.
  WireMessage config;
  config.type = MsgType::Config;
  config.payload = to_bytes(config_payload(arch, seed));
  send_q.push_wait(std::move(config), opts.message_timeout_ms);
  {
    auto reply = recv_q.pop_wait(opts.message_timeout_ms);
    if (!reply || reply->type != MsgType::Ack) {
      shutdown_threads();
      throw HandshakeError(reply && reply->type == MsgType::Shutdown
                               ? "edge rejected CONFIG (digest mismatch)"
                               : "no ACK from edge");
    }
  }

  DeviceRunResult result;
  result.outputs.resize(n);
  std::vector<bool> done(n, false), failed(n, false);
  std::vector<Clock::time_point> inject_at(n), done_at(n);
  std::vector<FrameState> state(n);
  std::vector<int> next_my(n, 0);  // index into my_segments per frame
  int completed = 0, nfailed = 0, injected = 0;
  auto last_progress = Clock::now();

  auto complete_frame = [&](int f) {
    done[f] = true;
    done_at[f] = Clock::now();
    ++completed;
    last_progress = done_at[f];
  };

  auto push_send = [&](WireMessage msg) {
    while (!send_q.try_push(std::move(msg))) {
      if (sock_error) return;
      std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
  };

  // Runs the frame's next device segment; sends or completes as the plan says.
  auto advance = [&](int f) {
    const PlanSegment& seg = plan[my_segments[next_my[f]]];
    runner.run_layers(seg.first, seg.last, state[f]);
    ++next_my[f];
    if (seg.sends) {
      push_send(tensors_message(f, state[f], seg.ship_edges));
    }
    if (seg.final_segment) {
      result.outputs[f] = state[f].feats;
      complete_frame(f);
    }
    if (next_my[f] == static_cast<int>(my_segments.size())) {
      state[f] = FrameState{};  // device involvement over; free the buffers
    }
  };

  auto handle = [&](const WireMessage& msg) {
    last_progress = Clock::now();
    if (msg.frame_id >= static_cast<uint64_t>(n)) return;
    const int f = static_cast<int>(msg.frame_id);
    if (done[f] || failed[f]) return;
    switch (msg.type) {
      case MsgType::Tensors: {
        std::vector<Tensor> tensors = decode_tensors(msg.payload);
        if (tensors.empty()) return;
        state[f].feats = std::move(tensors[0]);
        if (tensors.size() > 1) {
          state[f].edges = std::move(tensors[1]);
          state[f].have_edges = true;
        }
        advance(f);
        break;
      }
      case MsgType::Result: {
        std::vector<Tensor> tensors = decode_tensors(msg.payload);
        if (!tensors.empty()) result.outputs[f] = std::move(tensors[0]);
        complete_frame(f);
        break;
      }
      case MsgType::Shutdown:
        sock_error = true;
        break;
      default:
        break;
    }
  };

  while (completed + nfailed < n) {
    if (sock_error && plan.size() > 1) {
      // connection is gone and frames need the edge: fail whatever is left
      for (int f = 0; f < n; ++f) {
        if (!done[f] && !failed[f]) {
          failed[f] = true;
          ++nfailed;
        }
      }
      break;
    }
    while (auto msg = recv_q.try_pop()) handle(*msg);

    const bool gate_ok = opts.pipelined || injected == completed + nfailed;
    if (injected < n && gate_ok) {
      const int f = injected++;
      inject_at[f] = Clock::now();
      state[f] = runner.init_state(inputs[f]);
      advance(f);  // plan segment 0 always starts on the device
      continue;
    }

    auto msg = recv_q.pop_wait(50);
    if (msg) {
      handle(*msg);
    } else if (recv_q.closed() && completed + nfailed < n && injected > 0) {
      for (int f = 0; f < n; ++f) {
        if (!done[f] && !failed[f] && next_my[f] > 0) {
          failed[f] = true;
          ++nfailed;
        }
      }
      if (plan.size() > 1) sock_error = true;
    } else if (ms_between(last_progress, Clock::now()) > opts.message_timeout_ms) {
      // message timeout: the oldest outstanding frame is the one that stalled
      for (int f = 0; f < n; ++f) {
        if (!done[f] && !failed[f] && f < injected) {
          failed[f] = true;
          ++nfailed;
          break;
        }
      }
      last_progress = Clock::now();
    }
  }

  WireMessage bye;
  bye.type = MsgType::Shutdown;
  push_send(std::move(bye));
  shutdown_threads();  // the sender drains the queue, SHUTDOWN included

  for (int f = 0; f < n; ++f) {
    if (done[f]) result.stats.frame_latency_ms.push_back(ms_between(inject_at[f], done_at[f]));
  }
  result.stats.frames_completed = completed;
  result.stats.frames_failed = nfailed;
  result.stats.bytes_sent = counters.bytes_sent;
  result.stats.bytes_received = counters.bytes_received;
  result.stats.payload_raw_bytes = counters.payload_raw;
  result.stats.payload_wire_bytes = counters.payload_wire;
  finalize_throughput(result.stats, done_at, done);
  return result;
}

// --- edge ---

struct EdgeServer::Impl {
  std::string host;
  uint16_t requested_port;
  Architecture arch;
  uint64_t seed;
  EngineOptions opts;

  net::Listener listener;
  std::thread thread;
  std::atomic<bool> stop{false};
  FrameStats stats;
  std::atomic<bool> finished{false};

  void serve() {
    net::Socket conn = listener.accept(-1, &stop);
    if (!conn.valid()) {
      finished = true;
      return;
    }

    const std::vector<PlanSegment> plan = build_plan(arch);
    std::vector<int> my_segments;
    for (int s = 0; s < static_cast<int>(plan.size()); ++s) {
      if (plan[s].side == Placement::Edge) my_segments.push_back(s);
    }
    const PlanRunner runner(arch, seed);

    BoundedQueue<WireMessage> recv_q(opts.queue_capacity);
    BoundedQueue<WireMessage> send_q(opts.queue_capacity);
    WireCounters counters;
    std::atomic<bool> sock_error{false};
    TokenBucket bucket(opts.throttle_mbps);

    std::thread sender([&] {
      sender_loop(conn, send_q, opts.throttle_mbps > 0 ? &bucket : nullptr, counters,
                  sock_error);
    });
    std::thread receiver([&] { receiver_loop(conn, recv_q, counters, sock_error, &stop); });

    std::unordered_map<uint64_t, FrameState> state;
    std::unordered_map<uint64_t, int> next_my;
    std::vector<Clock::time_point> done_at;
    std::vector<bool> done_flags;
    bool config_ok = false;

    auto push_send = [&](WireMessage msg) {
      while (!send_q.try_push(std::move(msg))) {
        if (sock_error || stop) return;
        std::this_thread::sleep_for(std::chrono::microseconds(200));
      }
    };

    while (!stop && !sock_error) {
      auto msg = recv_q.pop_wait(250);
      if (!msg) {
        if (recv_q.closed()) break;
        continue;
      }
      if (msg->type == MsgType::Shutdown) break;

      if (msg->type == MsgType::Config) {
        bool match = false;
        try {
          const json j = json::parse(msg->payload.begin(), msg->payload.end());
          match = j.value("arch_digest", "") == arch_digest(arch) &&
                  j.value("seed", static_cast<uint64_t>(0)) == seed;
        } catch (const std::exception&) {
          match = false;
        }
        WireMessage reply;
        reply.type = match ? MsgType::Ack : MsgType::Shutdown;
        push_send(std::move(reply));
        if (!match) break;  // handshake abort
        config_ok = true;
        continue;
      }

      if (msg->type != MsgType::Tensors || !config_ok) continue;
      const uint64_t f = msg->frame_id;
      std::vector<Tensor> tensors;
      try {
        tensors = decode_tensors(msg->payload);
      } catch (const std::exception&) {
        sock_error = true;
        break;
      }
      if (tensors.empty()) continue;

      auto& st = state[f];
      st.feats = std::move(tensors[0]);
      if (tensors.size() > 1) {
        st.edges = std::move(tensors[1]);
        st.have_edges = true;
      }
      auto& ord = next_my[f];
      if (ord >= static_cast<int>(my_segments.size())) continue;
      const PlanSegment& seg = plan[my_segments[ord]];
      if (opts.inject_compute_delay_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(opts.inject_compute_delay_ms));
      }
      try {
        runner.run_layers(seg.first, seg.last, st);
      } catch (const std::exception&) {
        sock_error = true;
        break;
      }
      ++ord;
      if (seg.sends) {
        push_send(tensors_message(f, st, seg.ship_edges));
      }
      if (seg.final_segment) {
        WireMessage reply;
        reply.type = MsgType::Result;
        reply.frame_id = f;
        reply.payload = encode_tensors({st.feats});
        push_send(std::move(reply));
        done_at.push_back(Clock::now());
        done_flags.push_back(true);
      }
      if (ord == static_cast<int>(my_segments.size())) {
        state.erase(f);
        next_my.erase(f);
      }
    }

    send_q.close();
    stop = true;
    recv_q.close();
    sender.join();
    receiver.join();
    conn.shutdown_both();

    stats.frames_completed = static_cast<int>(done_at.size());
    stats.bytes_sent = counters.bytes_sent;
    stats.bytes_received = counters.bytes_received;
    stats.payload_raw_bytes = counters.payload_raw;
    stats.payload_wire_bytes = counters.payload_wire;
    finalize_throughput(stats, done_at, done_flags);
    finished = true;
  }
};

EdgeServer::EdgeServer(std::string bind_host, uint16_t port, Architecture arch, uint64_t seed,
                       EngineOptions opts)
    : impl_(std::make_unique<Impl>()) {
  impl_->host = std::move(bind_host);
  impl_->requested_port = port;
  impl_->arch = std::move(arch);
  impl_->seed = seed;
  impl_->opts = opts;
}

EdgeServer::~EdgeServer() {
  if (impl_ && impl_->thread.joinable()) {
    impl_->stop = true;
    impl_->thread.join();
  }
}

uint16_t EdgeServer::start() {
  impl_->listener.open(impl_->host, impl_->requested_port);
  impl_->thread = std::thread([this] { impl_->serve(); });
  return impl_->listener.port();
}

FrameStats EdgeServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
  return impl_->stats;
}

void EdgeServer::serve_blocking() {
  impl_->listener.open(impl_->host, impl_->requested_port);
  impl_->serve();
}

uint16_t EdgeServer::port() const { return impl_->listener.port(); }

FrameStats EdgeServer::stats() const { return impl_->stats; }

std::vector<Tensor> make_input_frames(const InputSpec& input, int count, uint64_t seed) {
  std::vector<Tensor> frames;
  frames.reserve(count);
  for (int f = 0; f < count; ++f) {
    frames.push_back(random_input_tensor(input, mix_seed(mix_seed(seed, 0xf4a3e5ULL), f)));
  }
  return frames;
}

}  // namespace coedge
