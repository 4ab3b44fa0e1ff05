#include <catch2/catch_amalgamated.hpp>

#include <thread>

#include "marionet/sink.hpp"
#include "marionet/workloads.hpp"

using namespace marionet;

namespace {

Sink::Options local_sink(CorsMode cors = CorsMode::AllowAll) {
  Sink::Options opt;
  opt.host = "127.0.0.1";
  opt.port = 0;  // pick a free port
  opt.cors = cors;
  return opt;
}

FloodTask flood_at(uint16_t port, uint64_t duration_ms, double rate_cap, int concurrency,
                   HttpMethod method = HttpMethod::OPTIONS) {
  FloodTask t;
  t.host = "127.0.0.1";
  t.port = port;
  t.path = "/";
  t.method = method;
  t.duration_ms = duration_ms;
  t.max_concurrency = concurrency;
  t.rate_cap = rate_cap;
  return t;
}

// Plain blocking client used to inspect the sink's raw response bytes.
std::string raw_request(uint16_t port, const std::string& request) {
  Socket s = connect_blocking("127.0.0.1", port);
  send_all(s.fd(), request);
  std::string response;
  char buf[4096];
  for (int i = 0; i < 100; ++i) {
    pollfd pfd{s.fd(), POLLIN, 0};
    if (::poll(&pfd, 1, 500) <= 0) break;
    ssize_t n = ::recv(s.fd(), buf, sizeof(buf), 0);
    if (n <= 0) break;
    response.append(buf, static_cast<size_t>(n));
    if (response.find("\r\n\r\n") != std::string::npos) break;
  }
  return response;
}

}  // namespace

TEST_CASE("sink starts with zeroed stats and refuses non-loopback binds") {
  Sink sink(local_sink());
  sink.start();
  SinkStats empty = sink.stats();
  CHECK(empty.total_requests == 0);
  CHECK(empty.bytes_received == 0);
  CHECK(empty.per_method.empty());
  sink.stop();

  Sink::Options bad = local_sink();
  bad.host = "0.0.0.0";
  Sink refused(bad);
  CHECK_THROWS_AS(refused.start(), SafetyError);
}

TEST_CASE("allow-all mode sets the CORS header, deny mode omits it but counts") {
  Sink allow(local_sink(CorsMode::AllowAll));
  allow.start();
  std::string resp =
      raw_request(allow.port(), "OPTIONS / HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n");
  CHECK(resp.find("204") != std::string::npos);
  CHECK(resp.find("Access-Control-Allow-Origin: *") != std::string::npos);
  CHECK(allow.stats().total_requests == 1);
  allow.stop();

  Sink deny(local_sink(CorsMode::Deny));
  deny.start();
  resp = raw_request(deny.port(), "OPTIONS / HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n");
  CHECK(resp.find("204") != std::string::npos);
  CHECK(resp.find("Access-Control-Allow-Origin") == std::string::npos);
  CHECK(deny.stats().total_requests == 1);  // still counted
  deny.stop();
}

TEST_CASE("flood against the sink conserves every request") {
  Sink sink(local_sink());
  sink.start();
  FloodTask task = flood_at(sink.port(), 1000, 200, 8);
  FloodStats stats = flood_run(task);

  CHECK(stats.attempted > 0);
  CHECK(stats.attempted == stats.completed + stats.failed + stats.in_flight_at_deadline);
  CHECK(stats.failed == 0);
  CHECK(stats.in_flight_at_deadline == 0);
  CHECK(stats.achieved_rate <= 200.0 + 1e-9);

  SinkStats sunk = sink.stats();
  CHECK(sunk.total_requests == stats.attempted);
  CHECK(sunk.per_method.at("OPTIONS") == stats.attempted);
  CHECK(sunk.bytes_received > 0);
  sink.stop();
}

TEST_CASE("method counts split per method") {
  Sink sink(local_sink());
  sink.start();
  flood_run(flood_at(sink.port(), 300, 100, 4, HttpMethod::GET));
  flood_run(flood_at(sink.port(), 300, 100, 4, HttpMethod::POST));
  SinkStats sunk = sink.stats();
  CHECK(sunk.per_method.count("GET") == 1);
  CHECK(sunk.per_method.count("POST") == 1);
  uint64_t sum = 0;
  for (const auto& [method, n] : sunk.per_method) sum += n;
  CHECK(sum == sunk.total_requests);
  sink.stop();
}

TEST_CASE("snapshots are monotone while traffic flows") {
  Sink sink(local_sink());
  sink.start();
  std::thread flood([&] { flood_run(flood_at(sink.port(), 800, 300, 8)); });
  uint64_t last = 0;
  for (int i = 0; i < 8; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    uint64_t now = sink.stats().total_requests;
    CHECK(now >= last);
    last = now;
  }
  flood.join();
  sink.stop();
}

TEST_CASE("concurrency does not reduce throughput on loopback") {
  Sink sink(local_sink());
  sink.start();
  FloodStats one = flood_run(flood_at(sink.port(), 1200, 0, 1));
  FloodStats many = flood_run(flood_at(sink.port(), 1200, 0, 64));
  CHECK(many.attempted > 0);
  CHECK(one.attempted > 0);
  // allow a little scheduler noise around equality
  CHECK(static_cast<double>(many.attempted) >= 0.9 * static_cast<double>(one.attempted));
  sink.stop();
}

TEST_CASE("hold-open mode parks connections at the sink") {
  Sink sink(local_sink());
  sink.start();
  FloodTask task = flood_at(sink.port(), 1500, 0, 16);
  task.hold_open = true;
  task.hold_trickle_ms = 300;
  FloodStats stats = flood_run(task);

  CHECK(stats.attempted == 16);
  CHECK(stats.completed == 0);
  CHECK(stats.in_flight_at_deadline == 16);
  SinkStats sunk = sink.stats();
  CHECK(sunk.peak_connections == 16);
  CHECK(sunk.total_requests == 0);  // headers never complete
  sink.stop();
}

TEST_CASE("oversized connections are dropped, not buffered") {
  Sink sink(local_sink());
  sink.start();
  Socket s = connect_blocking("127.0.0.1", sink.port());
  std::string blob(Sink::kMaxConnectionBuffer + 4096, 'A');  // no header terminator
  send_all(s.fd(), blob, 30000);
  // server should close on us rather than hold 16 MiB+
  char buf[16];
  pollfd pfd{s.fd(), POLLIN, 0};
  ::poll(&pfd, 1, 3000);
  ssize_t n = ::recv(s.fd(), buf, sizeof(buf), 0);
  CHECK(n <= 0);
  CHECK(sink.stats().total_requests == 0);
  sink.stop();
}
