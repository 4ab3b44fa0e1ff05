#pragma once

// Loopback HTTP sink: the measurement target standing in for any real
// victim. Parses only what the flood emits (request line + headers),
// answers 204, and keeps counting even when CORS is denied.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "marionet/net.hpp"

namespace marionet {

enum class CorsMode { AllowAll, Deny };

struct SinkStats {
  uint64_t total_requests = 0;
  std::map<std::string, uint64_t> per_method;
  uint64_t bytes_received = 0;
  uint64_t first_request_ms = 0;
  uint64_t last_request_ms = 0;
  std::map<uint64_t, uint64_t> per_second;  // offset seconds -> requests
  uint64_t current_connections = 0;
  uint64_t peak_connections = 0;

  nlohmann::json to_json() const {
    nlohmann::json methods = nlohmann::json::object();
    for (const auto& [m, n] : per_method) methods[m] = n;
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [s, n] : per_second) hist[std::to_string(s)] = n;
    return nlohmann::json{{"total_requests", total_requests},
                          {"per_method", methods},
                          {"bytes_received", bytes_received},
                          {"first_request_ms", first_request_ms},
                          {"last_request_ms", last_request_ms},
                          {"per_second", hist},
                          {"current_connections", current_connections},
                          {"peak_connections", peak_connections}};
  }
};

class Sink {
 public:
  struct Options {
    std::string host = "127.0.0.1";
    uint16_t port = 8088;
    CorsMode cors = CorsMode::AllowAll;
    bool allow_nonloopback = false;
  };

  // Per-connection input cap; a connection exceeding it is dropped.
  static constexpr size_t kMaxConnectionBuffer = 16 * 1024 * 1024;

  explicit Sink(Options opt) : opt_(std::move(opt)) {}
  ~Sink() { stop(); }

  void start() {
    listener_.open(opt_.host, opt_.port, opt_.allow_nonloopback);
    running_.store(true);
    started_ms_ = steady_now_ms();
    thread_ = std::thread([this] { loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    if (thread_.joinable()) thread_.join();
    listener_.close();
  }

  uint16_t port() const { return listener_.port(); }

  SinkStats stats() const {
    std::lock_guard<std::mutex> lock(mu_);
    return stats_;
  }

 private:
  struct Conn {
    Socket sock;
    std::string buf;
    size_t scanned = 0;
    uint64_t received = 0;
  };

  void loop() {
    std::vector<Conn> conns;
    while (running_.load()) {
      std::vector<pollfd> pfds;
      pfds.push_back(pollfd{listener_.fd(), POLLIN, 0});
      for (auto& c : conns) pfds.push_back(pollfd{c.sock.fd(), POLLIN, 0});
      ::poll(pfds.data(), pfds.size(), 20);

      if (pfds[0].revents & POLLIN) {
        while (auto sock = listener_.accept()) {
          conns.push_back(Conn{std::move(*sock), {}, 0, 0});
          std::lock_guard<std::mutex> lock(mu_);
          stats_.current_connections = conns.size();
          stats_.peak_connections = std::max(stats_.peak_connections, stats_.current_connections);
        }
      }

      for (size_t i = conns.size(); i-- > 0;) {
        if (i + 1 >= pfds.size()) continue;
        if (!(pfds[i + 1].revents & (POLLIN | POLLHUP | POLLERR))) continue;
        auto& c = conns[i];
        char buf[8192];
        ssize_t n = ::recv(c.sock.fd(), buf, sizeof(buf), 0);
        bool close_conn = false;
        if (n == 0 || (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK)) {
          close_conn = true;
        } else if (n > 0) {
          c.buf.append(buf, static_cast<size_t>(n));
          c.received += static_cast<uint64_t>(n);
          {
            std::lock_guard<std::mutex> lock(mu_);
            stats_.bytes_received += static_cast<uint64_t>(n);
          }
          if (c.buf.size() > kMaxConnectionBuffer) {
            close_conn = true;
          } else {
            size_t header_end = c.buf.find("\r\n\r\n", c.scanned > 3 ? c.scanned - 3 : 0);
            if (header_end != std::string::npos) {
              count_request(c.buf);
              respond(c);
              close_conn = true;  // flood requests are Connection: close
            } else {
              c.scanned = c.buf.size();
            }
          }
        }
        if (close_conn) {
          conns.erase(conns.begin() + static_cast<long>(i));
          std::lock_guard<std::mutex> lock(mu_);
          stats_.current_connections = conns.size();
        }
      }
    }
  }

  void count_request(const std::string& request) {
    std::string method = "OTHER";
    size_t space = request.find(' ');
    if (space != std::string::npos && space > 0 && space <= 16) {
      method = request.substr(0, space);
      for (char ch : method) {
        if (ch < 'A' || ch > 'Z') {
          method = "OTHER";
          break;
        }
      }
    }
    uint64_t now = steady_now_ms();
    std::lock_guard<std::mutex> lock(mu_);
    stats_.total_requests++;
    stats_.per_method[method]++;
    if (stats_.first_request_ms == 0) stats_.first_request_ms = now;
    stats_.last_request_ms = now;
    stats_.per_second[(now - started_ms_) / 1000]++;
  }

  void respond(Conn& c) {
    std::string response = "HTTP/1.1 204 No Content\r\n";
    if (opt_.cors == CorsMode::AllowAll) response += "Access-Control-Allow-Origin: *\r\n";
    response += "Connection: close\r\n\r\n";
    send_all(c.sock.fd(), response, 1000);
  }

  Options opt_;
  Listener listener_;
  std::thread thread_;
  std::atomic<bool> running_{false};
  uint64_t started_ms_ = 0;

  mutable std::mutex mu_;
  SinkStats stats_;
};

}  // namespace marionet
