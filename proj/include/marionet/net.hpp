#pragma once

// Thin POSIX TCP layer shared by the flood engine, the sink, and the
// control-channel transport, plus the artifact-wide target gate: nothing
// here opens a connection to an address the gate has not cleared.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace marionet {

class NetError : public std::runtime_error {
 public:
  explicit NetError(const std::string& what) : std::runtime_error(what) {}
};

class SafetyError : public std::runtime_error {
 public:
  explicit SafetyError(const std::string& what) : std::runtime_error(what) {}
};

class BlockedTarget : public SafetyError {
 public:
  explicit BlockedTarget(const std::string& what) : SafetyError(what) {}
};

class BlockedPort : public SafetyError {
 public:
  explicit BlockedPort(const std::string& what) : SafetyError(what) {}
};

inline uint64_t steady_now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
}

using MsClock = std::function<uint64_t()>;

inline MsClock steady_clock_ms() {
  return [] { return steady_now_ms(); };
}

// Destination ports browsers refuse for cross-protocol reasons. Subset of
// the standard restricted-port list; enough to cover the classic services.
inline bool is_reserved_port(uint16_t port) {
  static const std::set<uint16_t> kReserved = {
      1,   7,   9,   11,  13,  15,  17,  19,  20,  21,  22,  23,  25,  37,  42,  43,
      53,  69,  77,  79,  87,  95,  101, 102, 103, 104, 109, 110, 111, 113, 115, 117,
      119, 123, 135, 137, 139, 143, 161, 179, 389, 427, 465, 512, 513, 514, 515, 526,
      530, 531, 532, 540, 548, 554, 556, 563, 587, 601, 636, 989, 990, 993, 995,
      1719, 1720, 1723, 2049, 3659, 4045, 5060, 5061, 6000, 6566, 6665, 6666, 6667,
      6668, 6669, 6697, 10080};
  return kReserved.count(port) > 0;
}

inline bool is_loopback_host(const std::string& host) {
  if (host == "localhost" || host == "::1") return true;
  in_addr addr{};
  if (inet_pton(AF_INET, host.c_str(), &addr) == 1)
    return (ntohl(addr.s_addr) >> 24) == 127;
  return false;
}

// Artifact-wide safety gate. Default-constructed it admits loopback only;
// an allowlist entry is the explicit opt-in for anything else. check() is
// called at task construction and again at the socket boundary.
struct TargetGate {
  bool allow_loopback = true;
  std::set<std::string> allowlist;

  static TargetGate loopback_only() { return TargetGate{}; }
  static TargetGate deny_all() { return TargetGate{false, {}}; }

  void check(const std::string& host, uint16_t port) const {
    if (is_reserved_port(port))
      throw BlockedPort("destination port " + std::to_string(port) + " is reserved");
    if (allowlist.count(host) > 0) return;
    if (allow_loopback && is_loopback_host(host)) return;
    throw BlockedTarget("target '" + host + "' is not loopback and not allowlisted");
  }
};

// { host, port, path } parsed from "host:port" or "host:port/path".
struct Endpoint {
  std::string host;
  uint16_t port = 0;
  std::string path = "/";
};

inline Endpoint parse_endpoint(const std::string& target) {
  Endpoint ep;
  std::string rest = target;
  auto slash = rest.find('/');
  if (slash != std::string::npos) {
    ep.path = rest.substr(slash);
    rest = rest.substr(0, slash);
  }
  auto colon = rest.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == rest.size())
    throw NetError("expected host:port[/path], got '" + target + "'");
  ep.host = rest.substr(0, colon);
  unsigned long port = 0;
  try {
    port = std::stoul(rest.substr(colon + 1));
  } catch (const std::exception&) {
    throw NetError("bad port in '" + target + "'");
  }
  if (port > 65535) throw NetError("bad port in '" + target + "'");
  ep.port = static_cast<uint16_t>(port);
  return ep;
}

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
  Socket& operator=(Socket&& other) noexcept {
    if (this != &other) {
      close();
      fd_ = other.fd_;
      other.fd_ = -1;
    }
    return *this;
  }
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

  void close() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  int release() {
    int fd = fd_;
    fd_ = -1;
    return fd;
  }

 private:
  int fd_ = -1;
};

inline void set_nonblocking(int fd) {
  int flags = fcntl(fd, F_GETFL, 0);
  if (flags < 0 || fcntl(fd, F_SETFL, flags | O_NONBLOCK) < 0)
    throw NetError("fcntl(O_NONBLOCK) failed");
}

inline sockaddr_in resolve_ipv4(const std::string& host, uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  std::string h = (host == "localhost") ? "127.0.0.1" : host;
  if (inet_pton(AF_INET, h.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  if (getaddrinfo(h.c_str(), nullptr, &hints, &result) != 0 || result == nullptr)
    throw NetError("cannot resolve host '" + host + "'");
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(result->ai_addr)->sin_addr;
  freeaddrinfo(result);
  return addr;
}

// Begins a non-blocking connect; completion is observed via POLLOUT.
inline Socket connect_nonblocking(const std::string& host, uint16_t port) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) throw NetError("socket() failed");
  set_nonblocking(s.fd());
  sockaddr_in addr = resolve_ipv4(host, port);
  int rc = ::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
  if (rc < 0 && errno != EINPROGRESS) throw NetError(std::string("connect failed: ") + strerror(errno));
  return s;
}

// Blocking connect with timeout, for control-channel clients.
inline Socket connect_blocking(const std::string& host, uint16_t port, int timeout_ms = 5000) {
  Socket s = connect_nonblocking(host, port);
  pollfd pfd{s.fd(), POLLOUT, 0};
  int rc = ::poll(&pfd, 1, timeout_ms);
  if (rc <= 0) throw NetError("connect timed out to " + host + ":" + std::to_string(port));
  int err = 0;
  socklen_t len = sizeof(err);
  getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
  if (err != 0) throw NetError(std::string("connect failed: ") + strerror(err));
  return s;
}

class Listener {
 public:
  Listener() = default;

  // Binds host:port (port 0 picks a free one) and listens. Non-loopback
  // binds are refused unless allow_nonloopback is set.
  void open(const std::string& host, uint16_t port, bool allow_nonloopback = false) {
    if (!allow_nonloopback && !is_loopback_host(host))
      throw SafetyError("refusing to bind non-loopback address '" + host +
                        "' without explicit override");
    sock_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!sock_.valid()) throw NetError("socket() failed");
    int one = 1;
    setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr = resolve_ipv4(host, port);
    if (::bind(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0)
      throw NetError("bind " + host + ":" + std::to_string(port) + " failed: " + strerror(errno));
    if (::listen(sock_.fd(), 128) < 0) throw NetError("listen failed");
    set_nonblocking(sock_.fd());
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
  }

  std::optional<Socket> accept() {
    int fd = ::accept(sock_.fd(), nullptr, nullptr);
    if (fd < 0) return std::nullopt;
    Socket s(fd);
    set_nonblocking(s.fd());
    return s;
  }

  int fd() const { return sock_.fd(); }
  uint16_t port() const { return port_; }
  bool valid() const { return sock_.valid(); }
  void close() { sock_.close(); }

 private:
  Socket sock_;
  uint16_t port_ = 0;
};

// Writes the whole buffer on a (possibly non-blocking) socket, polling for
// writability as needed. Returns false on a hard error.
inline bool send_all(int fd, const uint8_t* data, size_t len, int timeout_ms = 5000) {
  size_t off = 0;
  while (off < len) {
    ssize_t n = ::send(fd, data + off, len - off, MSG_NOSIGNAL);
    if (n > 0) {
      off += static_cast<size_t>(n);
      continue;
    }
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
      pollfd pfd{fd, POLLOUT, 0};
      if (::poll(&pfd, 1, timeout_ms) <= 0) return false;
      continue;
    }
    return false;
  }
  return true;
}

inline bool send_all(int fd, const std::vector<uint8_t>& data, int timeout_ms = 5000) {
  return send_all(fd, data.data(), data.size(), timeout_ms);
}

inline bool send_all(int fd, const std::string& data, int timeout_ms = 5000) {
  return send_all(fd, reinterpret_cast<const uint8_t*>(data.data()), data.size(), timeout_ms);
}

}  // namespace marionet
