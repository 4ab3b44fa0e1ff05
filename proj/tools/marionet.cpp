// Experiment runner: simulation comparisons, loopback crack and flood
// demos, the measurement sink, and the log detector. Everything network
// facing stays on loopback unless --i-am-isolated names an allowlisted
// target explicitly.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

#include "CLI11.hpp"
#include "marionet/marionet.hpp"

namespace fs = std::filesystem;
using namespace marionet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSafety = 3;

// Measured anchors from the calibration notes; reported next to live
// measurements, never asserted against them.
constexpr double kReferenceMd5Hps = 500000;
constexpr double kReferenceSha256Hps = 300000;

volatile std::sig_atomic_t g_signal = 0;
void on_signal(int sig) { g_signal = sig; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

struct SimulateArgs {
  std::string config_path;
  std::string out_dir = "out";
  uint64_t seed = 42;
  bool seed_set = false;
  int population = -1;
  double duration_h = -1;
  double effective_cores = -1;
  int baseline_cores = -1;
  double sw_time_cap_s = -1;
  double sample_interval_s = -1;
  bool plot = false;
};

int cmd_simulate(const SimulateArgs& args) {
  SimConfig cfg;
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw ConfigError("cannot open config: " + args.config_path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + args.config_path);
    cfg = SimConfig::from_json(j);
  }
  if (args.seed_set) cfg.seed = args.seed;
  if (args.population > 0) cfg.population = args.population;
  if (args.duration_h > 0) cfg.duration_s = args.duration_h * 3600;
  if (args.effective_cores > 0) cfg.effective_cores = args.effective_cores;
  if (args.baseline_cores > 0) cfg.baseline_cores = args.baseline_cores;
  if (args.sw_time_cap_s > 0) cfg.sw_time_cap_s = args.sw_time_cap_s;
  if (args.sample_interval_s > 0) cfg.sample_interval_s = args.sample_interval_s;
  cfg.validate();

  SimComparison cmp = run_comparison(cfg);

  fs::create_directories(args.out_dir);
  fs::path out(args.out_dir);
  write_text(out / "marionet.csv", cmp.marionet.series_csv());
  write_text(out / "webworker.csv", cmp.webworker.series_csv());
  write_text(out / "marionet_events.jsonl", cmp.marionet.events_jsonl());
  write_text(out / "webworker_events.jsonl", cmp.webworker.events_jsonl());

  json summary{{"seed", cfg.seed},
               {"config", cfg.to_json()},
               {"crossover_s",
                cmp.empirical_crossover_s ? json(*cmp.empirical_crossover_s) : json(nullptr)},
               {"closed_form_crossover_s", cmp.closed_form_crossover_s},
               {"marionet_final_hashes", cmp.marionet.final_hashes},
               {"webworker_final_hashes", cmp.webworker.final_hashes},
               {"marionet_reactivations_by_push", cmp.marionet.reactivations_by_push},
               {"marionet_reactivations_by_iframe", cmp.marionet.reactivations_by_iframe},
               {"infections", cmp.marionet.infections}};
  write_text(out / "summary.json", summary.dump(2) + "\n");

  if (args.plot) {
    std::string gp =
        "set datafile separator ','\n"
        "set xlabel 'virtual time (s)'\n"
        "set ylabel 'cumulative hashes'\n"
        "set key left top\n"
        "plot 'marionet.csv' using 1:3 with lines title 'persistent servant', \\\n"
        "     'webworker.csv' using 1:3 with lines title 'web-worker baseline'\n";
    write_text(out / "plot.gp", gp);
  }

  std::cout << summary.dump(2) << std::endl;
  return kExitOk;
}

struct CrackArgs {
  std::string digest_hex;
  std::string algorithm = "sha256";
  std::string alphabet = "abcdefghijklmnopqrstuvwxyz";
  uint32_t length = 4;
  uint64_t parts = 4;
  int servants = 4;
  uint64_t heartbeat_ms = 1000;
  double jitter = 0.0;
  double intensity = 1.0;
  double target_utilization = 0.8;
  uint64_t timeout_ms = 120000;
  uint64_t seed = 42;
  std::string out_dir;
};

int cmd_crack_demo(const CrackArgs& args) {
  auto algo = parse_hash_algorithm(args.algorithm);
  if (!algo) throw ConfigError("unknown algorithm: " + args.algorithm);
  auto digest = from_hex(args.digest_hex);
  if (!digest || digest->size() != digest_size(*algo))
    throw ConfigError("malformed digest: expected " + std::to_string(2 * digest_size(*algo)) +
                      " hex chars");

  PuppeteerServer::Options opt;
  opt.heartbeat_interval_ms = args.heartbeat_ms;
  opt.policy.target_utilization = args.target_utilization;
  PuppeteerServer server(opt);
  server.start();

  std::vector<std::unique_ptr<LiveServant>> servants;
  for (int i = 0; i < args.servants; ++i) {
    LiveServant::Options so;
    so.port = server.port();
    so.servant_id = "sv" + std::to_string(i);
    so.origin = "https://distributor.example";
    so.scope = "/sv" + std::to_string(i) + "/";
    so.device = default_calibration().devices.front();
    so.heartbeat_jitter = args.jitter;
    so.initial_intensity = args.intensity;
    so.rng_seed = args.seed + static_cast<uint64_t>(i);
    servants.push_back(std::make_unique<LiveServant>(so));
    servants.back()->start();
  }
  size_t ready = server.wait_for_servants(static_cast<size_t>(args.servants), 10000);
  if (ready < static_cast<size_t>(args.servants))
    std::cerr << "warning: only " << ready << "/" << args.servants << " servants registered"
              << std::endl;

  uint64_t started = steady_now_ms();
  std::string job = server.submit_crack_job(*algo, *digest, args.alphabet, args.length, args.parts);
  auto outcome = server.wait_for_job(job, args.timeout_ms);
  uint64_t elapsed = steady_now_ms() - started;

  json per_servant = json::object();
  uint64_t total_hashes = 0;
  for (size_t i = 0; i < servants.size(); ++i) {
    servants[i]->stop();
    per_servant["sv" + std::to_string(i)] = servants[i]->hashes_done();
    total_hashes += servants[i]->hashes_done();
  }

  std::string status = "running";
  if (outcome.status == TaskBoard::JobStatus::Completed) status = "found";
  if (outcome.status == TaskBoard::JobStatus::Exhausted) status = "exhausted";
  json result{{"status", status},
              {"elapsed_ms", elapsed},
              {"seed", args.seed},
              {"algorithm", to_string(*algo)},
              {"parts", args.parts},
              {"servants", args.servants},
              {"hashes_done", per_servant},
              {"aggregate_hps", elapsed ? total_hashes * 1000.0 / elapsed : 0.0}};
  if (outcome.finding) result["preimage"] = *outcome.finding;

  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    server.write_log((fs::path(args.out_dir) / "crack_events.jsonl").string());
    write_text(fs::path(args.out_dir) / "crack_result.json", result.dump(2) + "\n");
  }
  server.stop();
  std::cout << result.dump(2) << std::endl;
  return status == "running" ? 1 : kExitOk;
}

struct FloodArgs {
  std::string target = "127.0.0.1:0/";
  double rate_cap = 500;
  uint64_t duration_ms = 5000;
  int concurrency = 8;
  std::string method = "OPTIONS";
  std::string cors = "allow";
  bool hold_open = false;
  bool i_am_isolated = false;
  std::string out_dir;
};

int cmd_flood_demo(const FloodArgs& args) {
  auto method = parse_http_method(args.method);
  if (!method) throw ConfigError("unknown method: " + args.method);
  if (args.cors != "allow" && args.cors != "deny") throw ConfigError("cors must be allow|deny");

  Endpoint ep = parse_endpoint(args.target);
  TargetGate gate;
  if (args.i_am_isolated) gate.allowlist.insert(ep.host);
  gate.check(ep.host, ep.port == 0 ? 8088 : ep.port);  // port 0 resolved below

  Sink::Options sink_opt;
  sink_opt.host = ep.host;
  sink_opt.port = ep.port;
  sink_opt.cors = args.cors == "allow" ? CorsMode::AllowAll : CorsMode::Deny;
  sink_opt.allow_nonloopback = args.i_am_isolated;
  Sink sink(sink_opt);
  sink.start();

  std::string target = ep.host + ":" + std::to_string(sink.port()) + ep.path;
  TaskSpec spec = make_flood_task("flood-demo", target, *method, args.duration_ms,
                                  args.concurrency, args.rate_cap, args.hold_open, gate);
  FloodStats stats = flood_run(std::get<FloodTask>(spec.kind), gate);
  // let the sink drain its accept queue before the final snapshot
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  SinkStats sunk = sink.stats();
  sink.stop();

  json result{{"flood",
               {{"attempted", stats.attempted},
                {"completed", stats.completed},
                {"failed", stats.failed},
                {"in_flight_at_deadline", stats.in_flight_at_deadline},
                {"achieved_rate", stats.achieved_rate},
                {"duration_ms", stats.duration_ms}}},
              {"sink", sunk.to_json()},
              {"conserved", args.hold_open ? sunk.total_requests == stats.completed
                                           : sunk.total_requests == stats.attempted},
              {"reference_rates", {{"GbE_max_rps", 1632}, {"Good3G_avg_rps", 214}}}};

  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    write_text(fs::path(args.out_dir) / "flood_result.json", result.dump(2) + "\n");
  }
  std::cout << result.dump(2) << std::endl;
  return kExitOk;
}

struct SinkArgs {
  std::string bind = "127.0.0.1:8088";
  std::string cors = "allow";
  std::string stats_file;
  uint64_t duration_ms = 0;  // 0 = until SIGINT/SIGTERM
  bool i_am_isolated = false;
};

int cmd_sink(const SinkArgs& args) {
  if (args.cors != "allow" && args.cors != "deny") throw ConfigError("cors must be allow|deny");
  Endpoint ep = parse_endpoint(args.bind);
  Sink::Options opt;
  opt.host = ep.host;
  opt.port = ep.port;
  opt.cors = args.cors == "allow" ? CorsMode::AllowAll : CorsMode::Deny;
  opt.allow_nonloopback = args.i_am_isolated;
  Sink sink(opt);
  sink.start();
  std::cerr << "sink listening on " << ep.host << ":" << sink.port() << std::endl;

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  uint64_t started = steady_now_ms();
  while (g_signal == 0) {
    if (args.duration_ms > 0 && steady_now_ms() - started >= args.duration_ms) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  SinkStats stats = sink.stats();
  sink.stop();
  std::string dump = stats.to_json().dump(2) + "\n";
  if (!args.stats_file.empty())
    write_text(args.stats_file, dump);
  else
    std::cout << dump;
  return kExitOk;
}

struct DetectArgs {
  std::string log_path;
  double cv_threshold = 0.1;
  size_t min_count = 10;
  std::string out_path;
};

int cmd_detect(const DetectArgs& args) {
  auto lines = EventLog::read_file(args.log_path);
  auto verdicts = analyze_heartbeat_log(lines, args.cv_threshold, args.min_count);
  if (verdicts.empty()) {
    std::cerr << "empty trace: no heartbeat events in " << args.log_path << std::endl;
    return kExitOk;
  }
  std::string out;
  for (const auto& v : verdicts) out += v.to_json().dump() + "\n";
  if (!args.out_path.empty())
    write_text(args.out_path, out);
  else
    std::cout << out;
  return kExitOk;
}

struct CalibrateArgs {
  uint64_t duration_ms = 500;
  std::string emit_default;
  std::string check_config;
};

int cmd_calibrate(const CalibrateArgs& args) {
  if (!args.emit_default.empty()) {
    write_text(args.emit_default, json::parse(default_calibration_text()).dump(2) + "\n");
    std::cerr << "wrote default calibration to " << args.emit_default << std::endl;
  }
  if (!args.check_config.empty()) {
    CalibrationTable table = load_calibration(args.check_config);
    std::cerr << "calibration ok: " << table.devices.size() << " devices, "
              << table.browsers.size() << " browsers, " << table.networks.size() << " networks"
              << std::endl;
  }
  double md5_hps = measure_hashrate(HashAlgorithm::MD5, args.duration_ms);
  double sha_hps = measure_hashrate(HashAlgorithm::SHA256, args.duration_ms);
  json result{{"measured", {{"md5_hps", md5_hps}, {"sha256_hps", sha_hps}}},
              {"reference",
               {{"md5_hps", kReferenceMd5Hps},
                {"sha256_hps", kReferenceSha256Hps},
                {"note", "reference rates are calibration data from other hardware; "
                         "only the md5 >= sha256 ordering is expected to carry over"}}}};
  std::cout << result.dump(2) << std::endl;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"loopback-only harness for persistent in-browser computation abuse experiments"};
  app.require_subcommand(1);

  uint64_t global_seed = 42;
  std::string global_config;
  std::string global_out = "out";
  app.add_option("--seed", global_seed, "RNG seed recorded in every report");
  app.add_option("--config", global_config, "config file (JSON)");
  app.add_option("--out", global_out, "output directory");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "run the servant vs web-worker comparison");
  simulate->add_option("--population", sim.population, "simulated users");
  simulate->add_option("--duration-h", sim.duration_h, "virtual duration in hours");
  simulate->add_option("--effective-cores", sim.effective_cores, "servant effective core budget");
  simulate->add_option("--baseline-cores", sim.baseline_cores, "web-worker core budget");
  simulate->add_option("--sw-time-cap-s", sim.sw_time_cap_s, "service-worker lifetime cap policy");
  simulate->add_option("--sample-interval-s", sim.sample_interval_s, "time-series resolution");
  simulate->add_flag("--plot", sim.plot, "emit a gnuplot script next to the CSVs");

  CrackArgs crack;
  auto* crack_demo = app.add_subcommand("crack-demo", "distributed hash crack over loopback TCP");
  crack_demo->add_option("--digest", crack.digest_hex, "target digest, lowercase hex")->required();
  crack_demo->add_option("--algorithm", crack.algorithm, "md5|sha256");
  crack_demo->add_option("--alphabet", crack.alphabet, "candidate alphabet");
  crack_demo->add_option("--length", crack.length, "candidate length");
  crack_demo->add_option("--parts", crack.parts, "keyspace partitions");
  crack_demo->add_option("--servants", crack.servants, "servant threads");
  crack_demo->add_option("--heartbeat-ms", crack.heartbeat_ms, "heartbeat interval");
  crack_demo->add_option("--jitter", crack.jitter, "heartbeat jitter fraction");
  crack_demo->add_option("--intensity", crack.intensity, "initial servant intensity");
  crack_demo->add_option("--timeout-ms", crack.timeout_ms, "give up after this long");

  FloodArgs flood;
  auto* flood_demo = app.add_subcommand("flood-demo", "flood a local sink and compare both counts");
  flood_demo->add_option("--target", flood.target, "host:port/path (port 0 picks one)");
  flood_demo->add_option("--rate-cap", flood.rate_cap, "requests/second cap (0 = uncapped)");
  flood_demo->add_option("--duration-ms", flood.duration_ms, "flood duration");
  flood_demo->add_option("--concurrency", flood.concurrency, "in-flight connection bound");
  flood_demo->add_option("--method", flood.method, "GET|POST|OPTIONS");
  flood_demo->add_option("--cors", flood.cors, "sink CORS mode: allow|deny");
  flood_demo->add_flag("--hold-open", flood.hold_open, "slowloris mode: park connections");
  flood_demo->add_flag("--i-am-isolated", flood.i_am_isolated,
                       "allow a non-loopback target (isolated lab only)");

  SinkArgs sink;
  auto* sink_cmd = app.add_subcommand("sink", "run the counting sink");
  sink_cmd->add_option("--bind", sink.bind, "bind address host:port");
  sink_cmd->add_option("--cors", sink.cors, "allow|deny");
  sink_cmd->add_option("--stats-file", sink.stats_file, "write stats JSON here on exit");
  sink_cmd->add_option("--duration-ms", sink.duration_ms, "exit after this long (0 = on signal)");
  sink_cmd->add_flag("--i-am-isolated", sink.i_am_isolated, "allow a non-loopback bind");

  DetectArgs detect;
  auto* detect_cmd = app.add_subcommand("detect", "beacon detection over a puppeteer event log");
  detect_cmd->add_option("--log", detect.log_path, "JSONL event log")->required();
  detect_cmd->add_option("--cv-threshold", detect.cv_threshold, "inter-arrival cv threshold");
  detect_cmd->add_option("--min-count", detect.min_count, "minimum messages per trace");

  CalibrateArgs calibrate;
  auto* calibrate_cmd = app.add_subcommand("calibrate", "measure local hash rates");
  calibrate_cmd->add_option("--duration-ms", calibrate.duration_ms, "per-algorithm measurement time");
  calibrate_cmd->add_option("--emit-default", calibrate.emit_default,
                            "write the built-in calibration table to this path");
  calibrate_cmd->add_option("--check", calibrate.check_config, "validate a calibration file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*simulate) {
      sim.seed = global_seed;
      sim.seed_set = app.count("--seed") > 0;
      sim.config_path = global_config;
      sim.out_dir = global_out;
      return cmd_simulate(sim);
    }
    if (*crack_demo) {
      crack.seed = global_seed;
      crack.out_dir = app.count("--out") > 0 ? global_out : "";
      return cmd_crack_demo(crack);
    }
    if (*flood_demo) {
      flood.out_dir = app.count("--out") > 0 ? global_out : "";
      return cmd_flood_demo(flood);
    }
    if (*sink_cmd) return cmd_sink(sink);
    if (*detect_cmd) {
      detect.out_path = app.count("--out") > 0 ? global_out : "";
      return cmd_detect(detect);
    }
    if (*calibrate_cmd) return cmd_calibrate(calibrate);
  } catch (const SafetyError& e) {
    std::cerr << "safety refusal: " << e.what() << std::endl;
    return kExitSafety;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const CalibrationError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return kExitOk;
}
