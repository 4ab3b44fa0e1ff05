#include <catch2/catch_amalgamated.hpp>

#include <memory>
#include <thread>

#include "marionet/puppeteer.hpp"
#include "marionet/servant.hpp"

using namespace marionet;

namespace {

LiveServant::Options servant_opts(uint16_t port, const std::string& id) {
  LiveServant::Options opt;
  opt.port = port;
  opt.servant_id = id;
  opt.origin = "https://distributor.example";
  opt.scope = "/" + id + "/";
  opt.device = default_calibration().devices.front();
  opt.slice_ms = 10;
  return opt;
}

}  // namespace

TEST_CASE("distributed crack over loopback recovers the preimage") {
  PuppeteerServer::Options opt;
  opt.heartbeat_interval_ms = 500;
  PuppeteerServer server(opt);
  server.start();

  std::vector<std::unique_ptr<LiveServant>> servants;
  for (int i = 0; i < 3; ++i) {
    servants.push_back(std::make_unique<LiveServant>(servant_opts(server.port(), "sv" + std::to_string(i))));
    servants.back()->start();
  }
  CHECK(server.wait_for_servants(3, 10000) == 3);

  Digest target = compute_digest(HashAlgorithm::SHA256, "dog");
  std::string job = server.submit_crack_job(HashAlgorithm::SHA256, target,
                                            "abcdefghijklmnopqrstuvwxyz", 3, 6);
  auto outcome = server.wait_for_job(job, 30000);
  CHECK(outcome.status == TaskBoard::JobStatus::Completed);
  REQUIRE(outcome.finding.has_value());
  CHECK(*outcome.finding == "dog");

  for (auto& s : servants) s->stop();

  // the event log carries the full session for the defense pipeline
  auto log = server.log_entries();
  server.stop();
  bool saw_register = false, saw_assign = false, saw_result = false, saw_completed = false;
  for (const auto& e : log) {
    std::string ev = e.value("event", "");
    saw_register |= ev == "register";
    saw_assign |= ev == "task_assign";
    saw_result |= ev == "result";
    saw_completed |= ev == "job_completed";
  }
  CHECK(saw_register);
  CHECK(saw_assign);
  CHECK(saw_result);
  CHECK(saw_completed);
}

TEST_CASE("a digest outside the space exhausts the job") {
  PuppeteerServer::Options opt;
  opt.heartbeat_interval_ms = 500;
  PuppeteerServer server(opt);
  server.start();
  LiveServant servant(servant_opts(server.port(), "sv0"));
  servant.start();

  Digest target = compute_digest(HashAlgorithm::MD5, "0000");  // digits not in a-z
  std::string job = server.submit_crack_job(HashAlgorithm::MD5, target,
                                            "abcdefghijklmnopqrstuvwxyz", 3, 4);
  auto outcome = server.wait_for_job(job, 30000);
  CHECK(outcome.status == TaskBoard::JobStatus::Exhausted);
  CHECK_FALSE(outcome.finding.has_value());
  servant.stop();
  server.stop();
}

TEST_CASE("a dead servant's range is reassigned after missed heartbeats") {
  PuppeteerServer::Options opt;
  opt.heartbeat_interval_ms = 150;  // reassignment after ~450 ms
  opt.miss_threshold = 3;
  PuppeteerServer server(opt);
  server.start();

  // slow servant: holds its ranges without finishing them before it dies
  LiveServant::Options slow = servant_opts(server.port(), "doomed");
  slow.initial_intensity = 0.05;
  auto doomed = std::make_unique<LiveServant>(slow);
  doomed->start();
  std::this_thread::sleep_for(std::chrono::milliseconds(200));

  Digest target = compute_digest(HashAlgorithm::SHA256, "zzzz");
  std::string job =
      server.submit_crack_job(HashAlgorithm::SHA256, target, "abcdefghijklmnopqrstuvwxyz", 4, 2);
  std::this_thread::sleep_for(std::chrono::milliseconds(120));
  doomed->stop();  // simulates the browser closing mid-range

  LiveServant survivor(servant_opts(server.port(), "survivor"));
  survivor.start();
  auto outcome = server.wait_for_job(job, 60000);
  CHECK(outcome.status == TaskBoard::JobStatus::Completed);
  REQUIRE(outcome.finding.has_value());
  CHECK(*outcome.finding == "zzzz");

  auto log = server.log_entries();
  bool reassigned = false;
  for (const auto& e : log) reassigned |= e.value("event", "") == "reassign";
  CHECK(reassigned);

  survivor.stop();
  server.stop();
}

TEST_CASE("rejected registrations never enter the registry") {
  PuppeteerServer::Options opt;
  PuppeteerServer server(opt);
  server.start();

  LiveServant::Options bad = servant_opts(server.port(), "insecure");
  bad.origin = "http://distributor.example";  // not https
  LiveServant servant(bad);
  servant.start();
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  auto registry = server.registry_snapshot();
  CHECK(registry.empty());
  servant.stop();

  auto log = server.log_entries();
  bool rejected = false;
  for (const auto& e : log)
    if (e.value("event", "") == "register_rejected")
      rejected = e.value("reason", "") == "InsecureScheme";
  CHECK(rejected);
  server.stop();
}

TEST_CASE("overlapping scopes on one origin are rejected at registration") {
  PuppeteerServer::Options opt;
  PuppeteerServer server(opt);
  server.start();

  LiveServant::Options first = servant_opts(server.port(), "first");
  first.scope = "/w/";
  LiveServant a(first);
  a.start();
  std::this_thread::sleep_for(std::chrono::milliseconds(250));

  LiveServant::Options nested = servant_opts(server.port(), "second");
  nested.scope = "/w/deeper/";
  LiveServant b(nested);
  b.start();
  std::this_thread::sleep_for(std::chrono::milliseconds(350));

  auto registry = server.registry_snapshot();
  CHECK(registry.size() == 1);
  REQUIRE(registry.count("first") == 1);
  a.stop();
  b.stop();
  server.stop();
}
