#pragma once

// Thin POSIX TCP wrappers used only by the engine implementation.

#include <atomic>
#include <cstdint>
#include <string>

#include "coedge/errors.hpp"

namespace coedge::net {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }
  void close();
  void shutdown_both();  // wakes any blocked peer-side reads
  void set_nodelay();

  // Reads exactly n bytes. Returns false on clean EOF before the first byte;
  // throws TruncatedPayloadError on EOF mid-read and EngineError on timeout.
  // timeout_ms < 0 waits forever (checked against *stop every poll tick).
  bool recv_exact(uint8_t* buf, size_t n, int timeout_ms,
                  const std::atomic<bool>* stop = nullptr);

  void send_all(const uint8_t* buf, size_t n);

 private:
  int fd_ = -1;
};

Socket tcp_connect(const std::string& host, uint16_t port, int timeout_ms);

class Listener {
 public:
  Listener() = default;
  ~Listener() { close(); }

  // host may be empty for INADDR_ANY; port 0 picks an ephemeral port.
  void open(const std::string& host, uint16_t port);
  uint16_t port() const { return port_; }
  // timeout_ms < 0 waits forever (checked against *stop every poll tick);
  // returns an invalid socket on stop/timeout.
  Socket accept(int timeout_ms, const std::atomic<bool>* stop = nullptr);
  void close();

 private:
  int fd_ = -1;
  uint16_t port_ = 0;
};

}  // namespace coedge::net
