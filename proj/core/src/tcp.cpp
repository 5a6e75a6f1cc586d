#include "tcp.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace coedge::net {

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::shutdown_both() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::set_nodelay() {
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

bool Socket::recv_exact(uint8_t* buf, size_t n, int timeout_ms,
                        const std::atomic<bool>* stop) {
  size_t got = 0;
  while (got < n) {
    pollfd pfd{fd_, POLLIN, 0};
    const int tick = timeout_ms < 0 ? 250 : timeout_ms;
    const int rc = ::poll(&pfd, 1, tick);
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw EngineError(std::string("poll: ") + std::strerror(errno));
    }
    if (rc == 0) {
      if (stop && *stop) return false;
      if (timeout_ms < 0) continue;
      throw EngineError("socket read timeout");
    }
    const ssize_t r = ::recv(fd_, buf + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw TruncatedPayloadError("connection closed mid-message");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw EngineError(std::string("recv: ") + std::strerror(errno));
    }
    got += static_cast<size_t>(r);
  }
  return true;
}

void Socket::send_all(const uint8_t* buf, size_t n) {
  size_t sent = 0;
  while (sent < n) {
    const ssize_t r = ::send(fd_, buf + sent, n - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw EngineError(std::string("send: ") + std::strerror(errno));
    }
    sent += static_cast<size_t>(r);
  }
}

static sockaddr_in make_addr(const std::string& host, uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (host.empty() || host == "0.0.0.0") {
    addr.sin_addr.s_addr = INADDR_ANY;
  } else if (host == "localhost") {
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  } else if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw EngineError("cannot parse address " + host);
  }
  return addr;
}

Socket tcp_connect(const std::string& host, uint16_t port, int timeout_ms) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw EngineError("socket() failed");
  Socket sock(fd);

  sockaddr_in addr = make_addr(host.empty() ? "localhost" : host, port);
  const int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
  if (rc < 0 && errno != EINPROGRESS) {
    throw EngineError(std::string("connect: ") + std::strerror(errno));
  }
  if (rc < 0) {
    pollfd pfd{fd, POLLOUT, 0};
    rc = ::poll(&pfd, 1, timeout_ms);
    if (rc <= 0) throw EngineError("connect timeout");
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) throw EngineError(std::string("connect: ") + std::strerror(err));
  }
  ::fcntl(fd, F_SETFL, flags);
  sock.set_nodelay();
  return sock;
}

void Listener::open(const std::string& host, uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw EngineError("socket() failed");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = make_addr(host, port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    throw EngineError(std::string("bind: ") + std::strerror(errno));
  }
  if (::listen(fd_, 4) < 0) throw EngineError("listen failed");
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

Socket Listener::accept(int timeout_ms, const std::atomic<bool>* stop) {
  while (true) {
    pollfd pfd{fd_, POLLIN, 0};
    const int tick = timeout_ms < 0 ? 250 : timeout_ms;
    const int rc = ::poll(&pfd, 1, tick);
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw EngineError("poll on listener failed");
    }
    if (rc == 0) {
      if (stop && *stop) return Socket();
      if (timeout_ms < 0) continue;
      return Socket();
    }
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      throw EngineError(std::string("accept: ") + std::strerror(errno));
    }
    Socket s(fd);
    s.set_nodelay();
    return s;
  }
}

void Listener::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

}  // namespace coedge::net
