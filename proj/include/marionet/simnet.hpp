#pragma once

// Deterministic discrete-event simulation of a browser population.
// Schedules (visits, browser sessions, push grants, iframe activations)
// are sampled up front from the seed; the engine then drives each user's
// ServantState through step_lifecycle in virtual-time order with stable
// tie-breaking, accruing work analytically from the calibration rates.
// The same schedule powers both models: the persistent service-worker
// servant and the greedy web-worker baseline that dies with its page.

#include <cstdint>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "marionet/core_model.hpp"
#include "marionet/defense.hpp"
#include "marionet/protocol.hpp"
#include "marionet/random.hpp"
#include "marionet/servant.hpp"

namespace marionet {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct DistSpec {
  enum class Kind { Exponential, LogNormal, Fixed };
  Kind kind = Kind::Exponential;
  double mean_s = 60;     // exponential
  double median_s = 60;   // lognormal
  double sigma = 1.0;     // lognormal
  double value_s = 60;    // fixed

  double sample(Rng& rng) const {
    switch (kind) {
      case Kind::Exponential: return rng.exponential(mean_s);
      case Kind::LogNormal: return rng.lognormal_median(median_s, sigma);
      case Kind::Fixed: return value_s;
    }
    return value_s;
  }

  double mean() const {
    switch (kind) {
      case Kind::Exponential: return mean_s;
      case Kind::LogNormal: return median_s * std::exp(sigma * sigma / 2);
      case Kind::Fixed: return value_s;
    }
    return value_s;
  }

  static DistSpec exponential(double mean_s) {
    DistSpec d;
    d.kind = Kind::Exponential;
    d.mean_s = mean_s;
    return d;
  }
  static DistSpec lognormal(double median_s, double sigma) {
    DistSpec d;
    d.kind = Kind::LogNormal;
    d.median_s = median_s;
    d.sigma = sigma;
    return d;
  }
  static DistSpec fixed(double value_s) {
    DistSpec d;
    d.kind = Kind::Fixed;
    d.value_s = value_s;
    return d;
  }

  json to_json() const {
    switch (kind) {
      case Kind::Exponential: return json{{"dist", "exponential"}, {"mean_s", mean_s}};
      case Kind::LogNormal:
        return json{{"dist", "lognormal"}, {"median_s", median_s}, {"sigma", sigma}};
      case Kind::Fixed: return json{{"dist", "fixed"}, {"value_s", value_s}};
    }
    return {};
  }

  static DistSpec from_json(const json& j, const std::string& path) {
    if (!j.is_object() || !j.contains("dist") || !j["dist"].is_string())
      throw ConfigError(path + ": expected {\"dist\": ...}");
    std::string kind = j["dist"].get<std::string>();
    auto number = [&](const char* key) {
      if (!j.contains(key) || !j[key].is_number())
        throw ConfigError(path + "." + key + ": expected a number");
      double v = j[key].get<double>();
      if (!(v > 0) || !std::isfinite(v)) throw ConfigError(path + "." + key + ": must be > 0");
      return v;
    };
    if (kind == "exponential") return exponential(number("mean_s"));
    if (kind == "lognormal") {
      DistSpec d = lognormal(number("median_s"), number("sigma"));
      return d;
    }
    if (kind == "fixed") return fixed(number("value_s"));
    throw ConfigError(path + ".dist: unknown distribution '" + kind + "'");
  }
};

enum class BaselineKind { MarioNet, WebWorkerBotnet };

inline const char* to_string(BaselineKind b) {
  return b == BaselineKind::MarioNet ? "MarioNet" : "WebWorkerBotnet";
}

struct SimConfig {
  uint64_t seed = 42;
  int population = 3000;
  DistSpec visit_duration = DistSpec::exponential(60);
  DistSpec browser_uptime = DistSpec::lognormal(4 * 3600, 1.0);
  double push_grant_prob = 0.12;
  double iframe_activation_rate_per_h = 1.0;
  double duration_s = 12 * 3600;
  BaselineKind baseline = BaselineKind::MarioNet;
  double effective_cores = 0.4444;  // servant core budget (fraction of one
                                    // core up to all cores via extra scopes)
  int baseline_cores = 8;           // greedy web-worker core budget
  bool sync_registered = true;
  double sample_interval_s = 10;
  double restart_delay_s = 300;
  double push_probe_interval_s = 60;
  std::optional<double> sw_time_cap_s;
  std::string workload = "hash";  // "hash" | "flood"
  NetworkKind flood_network = NetworkKind::Good3G;
  std::string calibration_path;  // empty = built-in table

  void validate() const {
    if (population < 1) throw ConfigError("population: must be >= 1");
    if (!(push_grant_prob >= 0 && push_grant_prob <= 1))
      throw ConfigError("push_grant_prob: must be in [0,1]");
    if (iframe_activation_rate_per_h < 0)
      throw ConfigError("iframe_activation_rate_per_h: must be >= 0");
    if (!(duration_s > 0)) throw ConfigError("duration_s: must be > 0");
    if (!(effective_cores > 0)) throw ConfigError("effective_cores: must be > 0");
    if (baseline_cores < 1) throw ConfigError("baseline_cores: must be >= 1");
    if (!(sample_interval_s > 0)) throw ConfigError("sample_interval_s: must be > 0");
    if (restart_delay_s < 0) throw ConfigError("restart_delay_s: must be >= 0");
    if (sw_time_cap_s && !(*sw_time_cap_s > 0)) throw ConfigError("sw_time_cap_s: must be > 0");
    if (workload != "hash" && workload != "flood")
      throw ConfigError("workload: expected 'hash' or 'flood'");
  }

  json to_json() const {
    json j{{"seed", seed},
           {"population", population},
           {"visit_duration", visit_duration.to_json()},
           {"browser_uptime", browser_uptime.to_json()},
           {"push_grant_prob", push_grant_prob},
           {"iframe_activation_rate_per_h", iframe_activation_rate_per_h},
           {"duration_s", duration_s},
           {"baseline", to_string(baseline)},
           {"effective_cores", effective_cores},
           {"baseline_cores", baseline_cores},
           {"sync_registered", sync_registered},
           {"sample_interval_s", sample_interval_s},
           {"restart_delay_s", restart_delay_s},
           {"push_probe_interval_s", push_probe_interval_s},
           {"workload", workload},
           {"flood_network", to_string(flood_network)}};
    if (sw_time_cap_s) j["sw_time_cap_s"] = *sw_time_cap_s;
    if (!calibration_path.empty()) j["calibration_path"] = calibration_path;
    return j;
  }

  static SimConfig from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    SimConfig cfg;
    auto number = [&](const char* key, double fallback) {
      if (!j.contains(key)) return fallback;
      if (!j[key].is_number()) throw ConfigError(std::string(key) + ": expected a number");
      return j[key].get<double>();
    };
    if (j.contains("seed")) {
      if (!j["seed"].is_number_unsigned()) throw ConfigError("seed: expected an unsigned integer");
      cfg.seed = j["seed"].get<uint64_t>();
    }
    cfg.population = static_cast<int>(number("population", cfg.population));
    if (j.contains("visit_duration"))
      cfg.visit_duration = DistSpec::from_json(j["visit_duration"], "visit_duration");
    if (j.contains("browser_uptime"))
      cfg.browser_uptime = DistSpec::from_json(j["browser_uptime"], "browser_uptime");
    cfg.push_grant_prob = number("push_grant_prob", cfg.push_grant_prob);
    cfg.iframe_activation_rate_per_h =
        number("iframe_activation_rate_per_h", cfg.iframe_activation_rate_per_h);
    cfg.duration_s = number("duration_s", cfg.duration_s);
    if (j.contains("baseline")) {
      std::string b = j["baseline"].is_string() ? j["baseline"].get<std::string>() : "";
      if (b == "MarioNet")
        cfg.baseline = BaselineKind::MarioNet;
      else if (b == "WebWorkerBotnet")
        cfg.baseline = BaselineKind::WebWorkerBotnet;
      else
        throw ConfigError("baseline: expected 'MarioNet' or 'WebWorkerBotnet'");
    }
    cfg.effective_cores = number("effective_cores", cfg.effective_cores);
    cfg.baseline_cores = static_cast<int>(number("baseline_cores", cfg.baseline_cores));
    if (j.contains("sync_registered")) {
      if (!j["sync_registered"].is_boolean()) throw ConfigError("sync_registered: expected a boolean");
      cfg.sync_registered = j["sync_registered"].get<bool>();
    }
    cfg.sample_interval_s = number("sample_interval_s", cfg.sample_interval_s);
    cfg.restart_delay_s = number("restart_delay_s", cfg.restart_delay_s);
    cfg.push_probe_interval_s = number("push_probe_interval_s", cfg.push_probe_interval_s);
    if (j.contains("sw_time_cap_s")) cfg.sw_time_cap_s = number("sw_time_cap_s", 0);
    if (j.contains("workload")) {
      if (!j["workload"].is_string()) throw ConfigError("workload: expected a string");
      cfg.workload = j["workload"].get<std::string>();
    }
    if (j.contains("flood_network")) {
      auto kind = j["flood_network"].is_string()
                      ? parse_network_kind(j["flood_network"].get<std::string>())
                      : std::nullopt;
      if (!kind) throw ConfigError("flood_network: unknown network kind");
      cfg.flood_network = *kind;
    }
    if (j.contains("calibration_path")) {
      if (!j["calibration_path"].is_string())
        throw ConfigError("calibration_path: expected a string");
      cfg.calibration_path = j["calibration_path"].get<std::string>();
    }
    cfg.validate();
    return cfg;
  }
};

struct BaselineModel {
  int cores_used = 8;
  double visit_s = 60;       // active window: the visit duration
  double per_core_rate = 0;  // H/s from the calibration table
};

// Virtual time at which a persistent servant running `effective_cores`
// overtakes a baseline that burned cores_used cores for one visit:
// t* = cores_used * visit_s / effective_cores.
inline double crossover_time(double marionet_effective_cores, const BaselineModel& baseline,
                             double visit_s) {
  if (!(marionet_effective_cores > 0))
    throw std::domain_error("crossover_time: effective core budget must be > 0");
  return static_cast<double>(baseline.cores_used) * visit_s / marionet_effective_cores;
}

struct UserSchedule {
  double visit_end_s = 0;
  std::vector<std::pair<double, double>> up_intervals;
  bool push_granted = false;
  std::vector<double> push_wakes;
  std::vector<double> iframe_wakes;
  double per_core_rate = 0;   // H/s, one core, full utilization
  double request_rate = 0;    // req/s for the flood workload
  size_t device_index = 0;
  size_t browser_index = 0;
};

// Per-user schedules drawn from the seeded RNG; identical for both models
// so that curves are directly comparable.
inline std::vector<UserSchedule> sample_population(const SimConfig& cfg, Rng& rng,
                                                   const CalibrationTable& table) {
  std::vector<size_t> sw_browsers;
  for (size_t i = 0; i < table.browsers.size(); ++i)
    if (table.browsers[i].sw_supported) sw_browsers.push_back(i);
  if (sw_browsers.empty()) throw ConfigError("calibration: no service-worker-capable browsers");

  std::vector<UserSchedule> users;
  users.reserve(static_cast<size_t>(cfg.population));
  for (int u = 0; u < cfg.population; ++u) {
    UserSchedule user;
    user.device_index = static_cast<size_t>(rng.below(table.devices.size()));
    user.browser_index = sw_browsers[static_cast<size_t>(rng.below(sw_browsers.size()))];
    const DeviceProfile& device = table.devices[user.device_index];
    const BrowserProfile& browser = table.browsers[user.browser_index];
    user.per_core_rate = effective_hashrate(device, browser, 1.0, 1);
    if (cfg.workload == "flood")
      user.request_rate = request_rate(browser, table.network(cfg.flood_network));

    double start = 0;
    while (start < cfg.duration_s && user.up_intervals.size() < 10000) {
      double up = cfg.browser_uptime.sample(rng);
      double end = std::min(start + up, cfg.duration_s);
      user.up_intervals.emplace_back(start, end);
      start = start + up + cfg.restart_delay_s;
    }

    double visit = cfg.visit_duration.sample(rng);
    user.visit_end_s = std::min(visit, user.up_intervals.front().second);

    user.push_granted = rng.bernoulli(cfg.push_grant_prob);
    if (user.push_granted) {
      for (size_t k = 1; k < user.up_intervals.size(); ++k) {
        double wake = user.up_intervals[k].first + cfg.push_probe_interval_s;
        if (wake < user.up_intervals[k].second && wake < cfg.duration_s)
          user.push_wakes.push_back(wake);
      }
    }

    if (cfg.iframe_activation_rate_per_h > 0) {
      double mean_gap_s = 3600.0 / cfg.iframe_activation_rate_per_h;
      for (const auto& [ivl_start, ivl_end] : user.up_intervals) {
        double t = ivl_start;
        while (true) {
          t += rng.exponential(mean_gap_s);
          if (t >= ivl_end || t >= cfg.duration_s) break;
          user.iframe_wakes.push_back(t);
        }
      }
    }
    users.push_back(std::move(user));
  }
  return users;
}

// Scheduling quantum for the lifetime-cap policy check; the enforced bound
// is sw_time_cap_s + kCapQuantumS.
inline constexpr double kCapQuantumS = 0.001;

struct SimEvent {
  double t_s = 0;
  int user = 0;
  std::string type;
  std::string phase;

  json to_json() const {
    return json{{"t_s", t_s}, {"user", user}, {"event", type}, {"phase", phase}};
  }
};

struct SamplePoint {
  double t_s = 0;
  int active = 0;
  double cum_hashes = 0;
  double cum_requests = 0;
};

struct SimReport {
  json config_echo;
  std::vector<SamplePoint> series;
  uint64_t infections = 0;
  uint64_t reactivations_by_push = 0;
  uint64_t reactivations_by_iframe = 0;
  double final_hashes = 0;
  double final_requests = 0;
  std::vector<double> per_servant_hashes;
  std::vector<double> per_servant_rate_hps;
  std::vector<double> per_servant_active_s;
  std::vector<SimEvent> events;

  std::string series_csv() const {
    std::ostringstream out;
    out << "t_s,active,cum_hashes,cum_requests\n";
    for (const auto& p : series)
      out << p.t_s << ',' << p.active << ',' << p.cum_hashes << ',' << p.cum_requests << '\n';
    return out.str();
  }

  std::string events_jsonl() const {
    std::string out;
    for (const auto& e : events) {
      out += e.to_json().dump();
      out += '\n';
    }
    return out;
  }

  json to_json() const {
    return json{{"config", config_echo},
                {"infections", infections},
                {"reactivations_by_push", reactivations_by_push},
                {"reactivations_by_iframe", reactivations_by_iframe},
                {"final_hashes", final_hashes},
                {"final_requests", final_requests},
                {"samples", series.size()},
                {"events", events.size()}};
  }
};

namespace simdetail {

enum class EvType {
  PageVisit,
  NavigateAway,
  BrowserClosed,
  BrowserRestarted,
  PushWake,
  IframeActivation,
  CapCheck,
  Sample,
};

struct Ev {
  double t;
  uint64_t seq;
  int user;
  EvType type;
};

struct EvLater {
  bool operator()(const Ev& a, const Ev& b) const {
    if (a.t != b.t) return a.t > b.t;
    return a.seq > b.seq;  // stable: earlier insertion first
  }
};

}  // namespace simdetail

inline SimReport run_simulation(const SimConfig& cfg) {
  cfg.validate();
  CalibrationTable loaded_table;
  if (!cfg.calibration_path.empty()) loaded_table = load_calibration(cfg.calibration_path);
  const CalibrationTable& table =
      cfg.calibration_path.empty() ? default_calibration() : loaded_table;

  Rng rng(cfg.seed);
  std::vector<UserSchedule> users = sample_population(cfg, rng, table);
  const bool marionet = cfg.baseline == BaselineKind::MarioNet;

  struct UserState {
    ServantState servant;
    double active_since = 0;
    double consumed_active_s = 0;  // total Active time so far
    double total_hashes = 0;       // accrued over closed segments
    double total_requests = 0;
    double hash_rate = 0;
    double req_rate = 0;
    bool cap_scheduled = false;
  };

  SimReport report;
  report.config_echo = cfg.to_json();
  std::vector<UserState> states(users.size());
  for (size_t u = 0; u < users.size(); ++u) {
    states[u].servant.kind =
        marionet ? WorkerKind::ServiceWorker : WorkerKind::DedicatedWebWorker;
    states[u].servant.sync_registered = marionet && cfg.sync_registered;
    states[u].servant.push_granted = marionet && users[u].push_granted;
    double cores = marionet ? cfg.effective_cores : static_cast<double>(cfg.baseline_cores);
    if (cfg.workload == "hash") {
      states[u].hash_rate = users[u].per_core_rate * cores;
    } else {
      states[u].req_rate = users[u].request_rate * cores;
    }
  }

  using simdetail::Ev;
  using simdetail::EvType;
  std::priority_queue<Ev, std::vector<Ev>, simdetail::EvLater> queue;
  uint64_t seq = 0;
  auto push = [&](double t, int user, EvType type) {
    if (t <= cfg.duration_s) queue.push(Ev{t, seq++, user, type});
  };

  for (size_t u = 0; u < users.size(); ++u) {
    const UserSchedule& s = users[u];
    int ui = static_cast<int>(u);
    push(0.0, ui, EvType::PageVisit);
    if (s.visit_end_s < s.up_intervals.front().second)
      push(s.visit_end_s, ui, EvType::NavigateAway);
    for (size_t k = 0; k < s.up_intervals.size(); ++k) {
      if (s.up_intervals[k].second < cfg.duration_s)
        push(s.up_intervals[k].second, ui, EvType::BrowserClosed);
      if (k > 0) push(s.up_intervals[k].first, ui, EvType::BrowserRestarted);
    }
    for (double t : s.push_wakes) push(t, ui, EvType::PushWake);
    for (double t : s.iframe_wakes) push(t, ui, EvType::IframeActivation);
  }
  for (double t = cfg.sample_interval_s; t <= cfg.duration_s + 1e-9; t += cfg.sample_interval_s)
    push(std::min(t, cfg.duration_s), -1, EvType::Sample);

  int active_count = 0;

  auto accrue_to = [&](UserState& st, double t) {
    if (st.servant.phase != Phase::Active) return;
    double dt = t - st.active_since;
    if (dt <= 0) return;
    st.total_hashes += dt * st.hash_rate;
    st.total_requests += dt * st.req_rate;
    st.consumed_active_s += dt;
    st.active_since = t;
    st.servant.uptime_ms = static_cast<uint64_t>(st.consumed_active_s * 1000.0);
  };

  auto cumulative = [&](double t, double& hashes, double& requests) {
    hashes = 0;
    requests = 0;
    for (auto& st : states) {
      hashes += st.total_hashes;
      requests += st.total_requests;
      if (st.servant.phase == Phase::Active) {
        double dt = t - st.active_since;
        if (dt > 0) {
          hashes += dt * st.hash_rate;
          requests += dt * st.req_rate;
        }
      }
    }
  };

  auto apply_transition = [&](int user, double t, Phase before, Phase after,
                              const char* label) {
    UserState& st = states[static_cast<size_t>(user)];
    if (before == Phase::Active && after != Phase::Active) {
      active_count--;
    } else if (before != Phase::Active && after == Phase::Active) {
      active_count++;
      st.active_since = t;
      if (cfg.sw_time_cap_s && !st.cap_scheduled && st.servant.kind == WorkerKind::ServiceWorker) {
        double remaining = *cfg.sw_time_cap_s - st.consumed_active_s;
        if (remaining > 0) {
          // one quantum past the boundary, so the uptime strictly exceeds the cap
          queue.push(Ev{t + remaining + kCapQuantumS, seq++, user, EvType::CapCheck});
          st.cap_scheduled = true;
        }
      }
    }
    report.events.push_back(
        SimEvent{t, user, label, to_string(after)});
  };

  while (!queue.empty()) {
    Ev ev = queue.top();
    queue.pop();
    if (ev.t > cfg.duration_s + 1e-9) break;  // dynamically scheduled past the horizon

    if (ev.type == EvType::Sample) {
      double hashes = 0, requests = 0;
      cumulative(ev.t, hashes, requests);
      report.series.push_back(SamplePoint{ev.t, active_count, hashes, requests});
      continue;
    }

    UserState& st = states[static_cast<size_t>(ev.user)];
    Phase before = st.servant.phase;

    if (ev.type == EvType::CapCheck) {
      st.cap_scheduled = false;
      if (st.servant.phase != Phase::Active) continue;
      double consumed_now = st.consumed_active_s + (ev.t - st.active_since);
      uint64_t uptime_ms = static_cast<uint64_t>(consumed_now * 1000.0 + 0.5);
      PolicyConfig policy;
      policy.sw_time_cap_ms = static_cast<uint64_t>(*cfg.sw_time_cap_s * 1000.0 + 0.5);
      PolicyEvent check{PolicyEvent::Kind::UptimeCheck, "", uptime_ms, false};
      if (consumed_now < *cfg.sw_time_cap_s) {
        // raced with an intervening pause; re-check when the cap is due
        queue.push(Ev{ev.t + (*cfg.sw_time_cap_s - consumed_now) + kCapQuantumS, seq++, ev.user,
                      EvType::CapCheck});
        st.cap_scheduled = true;
        continue;
      }
      if (!enforce_policy(policy, check).allowed) {
        accrue_to(st, ev.t);
        st.servant.phase = Phase::Terminated;
        apply_transition(ev.user, ev.t, before, Phase::Terminated, "policy_terminate");
      }
      continue;
    }

    LifecycleEvent life;
    switch (ev.type) {
      case EvType::PageVisit: life = LifecycleEvent::PageVisit; break;
      case EvType::NavigateAway: life = LifecycleEvent::NavigateAway; break;
      case EvType::BrowserClosed: life = LifecycleEvent::BrowserClosed; break;
      case EvType::BrowserRestarted: life = LifecycleEvent::BrowserRestarted; break;
      case EvType::PushWake: life = LifecycleEvent::PushWakeReceived; break;
      case EvType::IframeActivation: life = LifecycleEvent::IframeActivation; break;
      default: continue;
    }

    if (ev.type == EvType::PageVisit) report.infections++;

    // Close out the running accrual before any phase change.
    accrue_to(st, ev.t);
    StepResult step = step_lifecycle(st.servant, life);
    if (step.ignored) continue;
    Phase after = step.state.phase;
    st.servant = step.state;
    st.servant.uptime_ms = static_cast<uint64_t>(st.consumed_active_s * 1000.0);

    if (before != after) {
      if (after == Phase::Active && ev.type == EvType::PushWake) report.reactivations_by_push++;
      if (after == Phase::Active && ev.type == EvType::IframeActivation)
        report.reactivations_by_iframe++;
      apply_transition(ev.user, ev.t, before, after, to_string(life));
    }
  }

  // Final accrual at the horizon.
  for (size_t u = 0; u < states.size(); ++u) {
    UserState& st = states[u];
    accrue_to(st, cfg.duration_s);
    report.per_servant_hashes.push_back(st.total_hashes);
    report.per_servant_rate_hps.push_back(st.hash_rate);
    report.per_servant_active_s.push_back(st.consumed_active_s);
    report.final_hashes += st.total_hashes;
    report.final_requests += st.total_requests;
  }
  return report;
}

struct SimComparison {
  SimReport marionet;
  SimReport webworker;
  std::optional<double> empirical_crossover_s;
  double closed_form_crossover_s = 0;
};

inline std::optional<double> empirical_crossover(const SimReport& marionet,
                                                 const SimReport& webworker) {
  size_t n = std::min(marionet.series.size(), webworker.series.size());
  for (size_t i = 0; i < n; ++i) {
    const auto& m = marionet.series[i];
    const auto& b = webworker.series[i];
    if (m.t_s <= 0) continue;
    if (b.cum_hashes <= 0) continue;
    if (m.cum_hashes >= b.cum_hashes) return m.t_s;
  }
  return std::nullopt;
}

inline SimComparison run_comparison(const SimConfig& cfg) {
  SimComparison cmp;
  SimConfig m = cfg;
  m.baseline = BaselineKind::MarioNet;
  SimConfig b = cfg;
  b.baseline = BaselineKind::WebWorkerBotnet;
  cmp.marionet = run_simulation(m);
  cmp.webworker = run_simulation(b);
  cmp.empirical_crossover_s = empirical_crossover(cmp.marionet, cmp.webworker);
  BaselineModel model{cfg.baseline_cores, cfg.visit_duration.mean(), 0};
  cmp.closed_form_crossover_s =
      crossover_time(cfg.effective_cores, model, cfg.visit_duration.mean());
  return cmp;
}

// Virtual-clock heartbeat session writer for the detection experiments:
// drives the real heartbeat/encode path and emits puppeteer-format JSONL
// lines with exact virtual timestamps.
inline std::vector<json> generate_heartbeat_log(uint64_t seed, double jitter_frac, size_t beats,
                                                uint64_t interval_ms,
                                                const std::string& servant_id) {
  Rng rng(seed);
  ServantState state;
  state.kind = WorkerKind::ServiceWorker;
  state.phase = Phase::Active;
  state.attached_pages = 1;
  DeviceProfile device = default_calibration().devices.front();
  std::vector<json> lines;
  double t = 0;
  for (size_t i = 0; i < beats; ++i) {
    double gap = static_cast<double>(interval_ms);
    if (jitter_frac > 0) gap *= rng.uniform(1.0 - jitter_frac, 1.0 + jitter_frac);
    t += gap;
    Heartbeat hb = make_heartbeat(state, servant_id, device, static_cast<uint64_t>(t));
    size_t size_bytes = encode(Message{hb}).size();
    lines.push_back(json{{"t_ms", t},
                         {"event", "heartbeat"},
                         {"servant", servant_id},
                         {"seq", hb.seq},
                         {"utilization", hb.utilization},
                         {"size_bytes", size_bytes}});
  }
  return lines;
}

}  // namespace marionet
