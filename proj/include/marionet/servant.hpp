#pragma once

// The in-browser agent as an explicit state machine. Lifetime semantics
// per worker kind:
//   - dedicated web workers die with their page,
//   - shared web workers die when the last connected page goes away,
//   - service workers detach from pages entirely: navigation pauses them
//     unless a sync registration keeps them alive, browser shutdown parks
//     them, and a push wake or page/iframe visit brings them back.
// Terminated is absorbing; a new page visit constructs a fresh state.

#include <atomic>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>

#include "marionet/core_model.hpp"
#include "marionet/net.hpp"
#include "marionet/protocol.hpp"
#include "marionet/workloads.hpp"

namespace marionet {

enum class WorkerKind { DedicatedWebWorker, SharedWebWorker, ServiceWorker };
enum class Phase { Unregistered, Registered, Active, Paused, Terminated };

enum class LifecycleEvent {
  PageVisit,
  TabClosed,
  NavigateAway,
  AllTabsClosed,
  BrowserClosed,
  BrowserRestarted,
  SyncFire,
  PushWakeReceived,
  IframeActivation,
};

inline const char* to_string(WorkerKind k) {
  switch (k) {
    case WorkerKind::DedicatedWebWorker: return "dedicated";
    case WorkerKind::SharedWebWorker: return "shared";
    case WorkerKind::ServiceWorker: return "service";
  }
  return "?";
}

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::Unregistered: return "Unregistered";
    case Phase::Registered: return "Registered";
    case Phase::Active: return "Active";
    case Phase::Paused: return "Paused";
    case Phase::Terminated: return "Terminated";
  }
  return "?";
}

inline const char* to_string(LifecycleEvent e) {
  switch (e) {
    case LifecycleEvent::PageVisit: return "page_visit";
    case LifecycleEvent::TabClosed: return "tab_closed";
    case LifecycleEvent::NavigateAway: return "navigate_away";
    case LifecycleEvent::AllTabsClosed: return "all_tabs_closed";
    case LifecycleEvent::BrowserClosed: return "browser_closed";
    case LifecycleEvent::BrowserRestarted: return "browser_restarted";
    case LifecycleEvent::SyncFire: return "sync_fire";
    case LifecycleEvent::PushWakeReceived: return "push_wake";
    case LifecycleEvent::IframeActivation: return "iframe_activation";
  }
  return "?";
}

struct ServantState {
  WorkerKind kind = WorkerKind::ServiceWorker;
  Phase phase = Phase::Unregistered;
  int attached_pages = 0;
  bool sync_registered = false;
  bool push_granted = false;
  double intensity = 1.0;
  uint64_t uptime_ms = 0;  // accumulated Active time, maintained by the driver
  bool work_paused = false;
  uint64_t heartbeat_seq = 0;

  friend bool operator==(const ServantState&, const ServantState&) = default;
};

struct StepResult {
  ServantState state;
  bool ignored = false;  // event arrived on a Terminated state
};

namespace detail {

inline ServantState fresh_visit_state(const ServantState& prev) {
  ServantState s;
  s.kind = prev.kind;
  s.sync_registered = prev.sync_registered;
  s.push_granted = prev.push_granted;  // the permission belongs to the user
  s.phase = Phase::Active;
  s.attached_pages = 1;
  return s;
}

}  // namespace detail

inline StepResult step_lifecycle(const ServantState& s, LifecycleEvent e) {
  // Terminated is absorbing; only a fresh page visit starts over.
  if (s.phase == Phase::Terminated) {
    if (e == LifecycleEvent::PageVisit) return {detail::fresh_visit_state(s), false};
    return {s, true};
  }

  ServantState next = s;
  switch (e) {
    case LifecycleEvent::PageVisit:
      next.attached_pages = (s.kind == WorkerKind::DedicatedWebWorker)
                                ? 1
                                : s.attached_pages + 1;
      next.phase = Phase::Active;
      return {next, false};

    case LifecycleEvent::TabClosed:
    case LifecycleEvent::NavigateAway:
      switch (s.kind) {
        case WorkerKind::DedicatedWebWorker:
          next.attached_pages = 0;
          next.phase = Phase::Terminated;
          return {next, false};
        case WorkerKind::SharedWebWorker:
          next.attached_pages = std::max(0, s.attached_pages - 1);
          if (next.attached_pages == 0) next.phase = Phase::Terminated;
          return {next, false};
        case WorkerKind::ServiceWorker:
          next.attached_pages = std::max(0, s.attached_pages - 1);
          if (next.attached_pages == 0 && !s.sync_registered && s.phase == Phase::Active)
            next.phase = Phase::Paused;
          return {next, false};
      }
      return {next, false};

    case LifecycleEvent::AllTabsClosed:
      next.attached_pages = 0;
      if (s.kind == WorkerKind::ServiceWorker) {
        if (!s.sync_registered && s.phase == Phase::Active) next.phase = Phase::Paused;
      } else {
        next.phase = Phase::Terminated;
      }
      return {next, false};

    case LifecycleEvent::BrowserClosed:
      next.attached_pages = 0;
      // Service workers park across shutdown; web workers do not survive it.
      next.phase =
          (s.kind == WorkerKind::ServiceWorker) ? Phase::Paused : Phase::Terminated;
      return {next, false};

    case LifecycleEvent::BrowserRestarted:
      // The browser is back, but a parked service worker stays parked until
      // a push wake, page visit, or iframe activation.
      return {next, false};

    case LifecycleEvent::SyncFire:
      // Sync keep-alive is modeled directly in the navigation transitions;
      // the fire itself changes nothing.
      return {next, false};

    case LifecycleEvent::PushWakeReceived:
      if (s.kind == WorkerKind::ServiceWorker && s.push_granted && s.phase == Phase::Paused)
        next.phase = Phase::Active;
      return {next, false};

    case LifecycleEvent::IframeActivation:
      // An iframe render of the controlling origin reactivates a parked
      // service worker without attaching a page.
      if (s.kind == WorkerKind::ServiceWorker && s.phase == Phase::Paused)
        next.phase = Phase::Active;
      return {next, false};
  }
  return {next, false};
}

class StateError : public std::logic_error {
 public:
  explicit StateError(const std::string& what) : std::logic_error(what) {}
};

// Emits the next heartbeat for an Active servant. seq advances by exactly
// one per call; utilization is the modeled load (0 while work is paused).
inline Heartbeat make_heartbeat(ServantState& s, const std::string& servant_id,
                                const DeviceProfile& device, uint64_t now_ms) {
  if (s.phase != Phase::Active)
    throw StateError("make_heartbeat: servant is not Active");
  Heartbeat hb;
  hb.servant_id = servant_id;
  hb.seq = ++s.heartbeat_seq;
  hb.utilization = s.work_paused ? 0.0 : s.intensity;
  hb.battery = device.battery;
  hb.timestamp_ms = now_ms;
  return hb;
}

inline void apply_throttle(ServantState& s, const Throttle& t) {
  if (!(t.intensity >= 0.0 && t.intensity <= 1.0))
    throw std::domain_error("apply_throttle: intensity outside [0,1]");
  s.intensity = t.intensity;
  s.work_paused = t.pause;
}

// A task plus its resumable cursor.
struct ActiveTask {
  TaskSpec spec;
  u128 cursor = 0;
  uint64_t progress_total = 0;
  bool done = false;

  explicit ActiveTask(TaskSpec s) : spec(std::move(s)) {
    if (const auto* crack = std::get_if<HashCrackTask>(&spec.kind))
      cursor = crack->range.begin;
    else if (const auto* pow = std::get_if<PowTask>(&spec.kind))
      cursor = pow->nonce_range.begin;
  }
};

struct SliceResult {
  uint64_t progress = 0;  // candidates/nonces examined in this slice
  std::optional<std::string> finding;
  bool exhausted = false;
  bool unsupported = false;
};

inline constexpr uint64_t kWorkQuantum = 1024;  // candidates between budget checks

// Runs at most budget_ms * intensity of work on the task, in kWorkQuantum
// chunks, and returns. Flood tasks pace themselves and are not sliceable;
// dispatch them through flood_run instead.
inline SliceResult execute_slice(ActiveTask& task, uint64_t budget_ms, double intensity,
                                 const MsClock& clock = steady_clock_ms()) {
  if (!(intensity >= 0.0 && intensity <= 1.0))
    throw std::domain_error("execute_slice: intensity outside [0,1]");
  SliceResult result;
  intensity = std::min(intensity, task.spec.intensity_cap);
  if (intensity <= 0.0 || task.done) return result;

  const uint64_t start = clock();
  const double work_budget_ms = static_cast<double>(budget_ms) * intensity;

  if (auto* crack = std::get_if<HashCrackTask>(&task.spec.kind)) {
    while (!task.done) {
      SearchResult r = hashcrack_search(*crack, task.cursor, kWorkQuantum);
      task.cursor = r.new_cursor;
      task.progress_total += r.examined;
      result.progress += r.examined;
      if (r.finding) {
        result.finding = r.finding;
        task.done = true;
        break;
      }
      if (task.cursor >= crack->range.end) {
        result.exhausted = true;
        task.done = true;
        break;
      }
      if (static_cast<double>(clock() - start) >= work_budget_ms) break;
    }
    return result;
  }
  if (auto* pow = std::get_if<PowTask>(&task.spec.kind)) {
    while (!task.done) {
      PowResult r = pow_attempt(*pow, task.cursor, kWorkQuantum);
      task.cursor = r.new_cursor;
      task.progress_total += r.hashes_done;
      result.progress += r.hashes_done;
      if (r.nonce) {
        result.finding = std::to_string(*r.nonce);
        task.done = true;
        break;
      }
      if (task.cursor >= pow->nonce_range.end) {
        result.exhausted = true;
        task.done = true;
        break;
      }
      if (static_cast<double>(clock() - start) >= work_budget_ms) break;
    }
    return result;
  }
  if (std::holds_alternative<OpaqueTask>(task.spec.kind)) {
    // Opaque kinds exist for the scheduler; a slice performs no local work.
    return result;
  }
  result.unsupported = true;
  return result;
}

// --- live mode -----------------------------------------------------------

// One servant = one thread owning one TCP connection to the puppeteer.
// Messages in and out are immutable values; all state is thread-local.
class LiveServant {
 public:
  struct Options {
    std::string host = "127.0.0.1";
    uint16_t port = 0;
    std::string servant_id;
    std::string origin = "https://distributor.example";
    std::string scope = "/";
    std::string browser_name = "Chrome";
    DeviceProfile device;
    double heartbeat_jitter = 0.0;  // fraction; intervals ~ U[(1-j)T, (1+j)T]
    uint64_t slice_ms = 20;
    double initial_intensity = 1.0;
    uint64_t rng_seed = 1;
  };

  explicit LiveServant(Options opt) : opt_(std::move(opt)) {
    state_.kind = WorkerKind::ServiceWorker;
    state_.sync_registered = true;
    state_.intensity = opt_.initial_intensity;
  }

  ~LiveServant() { stop(); }

  void start() {
    stop_.store(false);
    thread_ = std::thread([this] { run(); });
  }

  void stop() {
    stop_.store(true);
    if (thread_.joinable()) thread_.join();
  }

  uint64_t hashes_done() const { return hashes_done_.load(); }
  bool failed() const { return failed_.load(); }

  // Blocking session loop; normally driven via start()/stop().
  void run() {
    try {
      session();
    } catch (const std::exception&) {
      failed_.store(true);
    }
  }

 private:
  void session() {
    Socket sock = connect_blocking(opt_.host, opt_.port);
    state_.phase = Phase::Registered;
    Register reg;
    reg.servant_id = opt_.servant_id;
    reg.origin = opt_.origin;
    reg.scope = opt_.scope;
    reg.browser_name = opt_.browser_name;
    reg.device_summary.cores = opt_.device.cores;
    reg.device_summary.power_mode = to_string(opt_.device.power_mode);
    if (!send_all(sock.fd(), encode(Message{reg}))) throw NetError("register send failed");

    FrameReader reader;
    uint64_t heartbeat_interval = kDefaultHeartbeatIntervalMs;
    std::mt19937_64 jitter_rng(opt_.rng_seed);
    auto next_interval = [&]() -> uint64_t {
      if (opt_.heartbeat_jitter <= 0.0) return heartbeat_interval;
      double u = (jitter_rng() >> 11) * 0x1.0p-53;
      double f = 1.0 - opt_.heartbeat_jitter + 2.0 * opt_.heartbeat_jitter * u;
      return static_cast<uint64_t>(static_cast<double>(heartbeat_interval) * f);
    };

    uint64_t next_heartbeat = steady_now_ms() + heartbeat_interval;
    uint64_t next_slice = 0;  // a slice occupies slice_ms wall time, of which
                              // intensity's share is work (duty cycling)
    std::optional<ActiveTask> task;
    std::deque<TaskSpec> backlog;

    while (!stop_.load()) {
      uint64_t now = steady_now_ms();
      int timeout = static_cast<int>(next_heartbeat > now ? next_heartbeat - now : 0);
      bool runnable = state_.phase == Phase::Active && task && !task->done && !state_.work_paused &&
                      state_.intensity > 0.0 && now >= next_slice;
      if (runnable) timeout = 0;
      pollfd pfd{sock.fd(), POLLIN, 0};
      ::poll(&pfd, 1, std::min(timeout, 50));

      if (pfd.revents & (POLLIN | POLLHUP)) {
        uint8_t buf[4096];
        ssize_t n = ::recv(sock.fd(), buf, sizeof(buf), 0);
        if (n == 0) return;  // puppeteer closed the channel
        if (n > 0) reader.feed(buf, static_cast<size_t>(n));
        while (auto frame = reader.next()) {
          if (frame->status != DecodeStatus::Ok) continue;
          uint64_t before = heartbeat_interval;
          handle_message(frame->message, heartbeat_interval, task, backlog);
          if (heartbeat_interval != before)  // the ack set the real schedule
            next_heartbeat = steady_now_ms() + next_interval();
        }
        if (reader.fatal()) return;
      }

      now = steady_now_ms();
      if (state_.phase == Phase::Active && now >= next_heartbeat) {
        Heartbeat hb = make_heartbeat(state_, assigned_id_, opt_.device, now);
        if (!send_all(sock.fd(), encode(Message{hb}))) return;
        next_heartbeat = now + next_interval();
      }

      runnable = state_.phase == Phase::Active && task && !task->done && !state_.work_paused &&
                 state_.intensity > 0.0 && now >= next_slice;
      if (runnable) {
        next_slice = now + opt_.slice_ms;
        SliceResult slice = execute_slice(*task, opt_.slice_ms, state_.intensity);
        hashes_done_.fetch_add(slice.progress);
        if (slice.finding || slice.exhausted || slice.unsupported) {
          TaskResult result;
          result.task_id = task->spec.task_id;
          result.payload.hashes_done = task->progress_total;
          if (slice.finding) {
            result.payload.status = ResultPayload::Status::Found;
            result.payload.finding = slice.finding;
          } else if (slice.unsupported) {
            result.payload.status = ResultPayload::Status::Unsupported;
          } else {
            result.payload.status = ResultPayload::Status::Exhausted;
          }
          if (!send_all(sock.fd(), encode(Message{result}))) return;
          task.reset();
          if (!backlog.empty()) {
            task.emplace(backlog.front());
            backlog.pop_front();
          }
        }
      }
    }
  }

  void handle_message(const Message& m, uint64_t& heartbeat_interval,
                      std::optional<ActiveTask>& task, std::deque<TaskSpec>& backlog) {
    if (const auto* ack = std::get_if<RegisterAck>(&m)) {
      assigned_id_ = ack->assigned_id;
      heartbeat_interval = ack->heartbeat_interval_ms;
      state_.phase = Phase::Active;
      state_.attached_pages = 1;
    } else if (const auto* assign = std::get_if<TaskAssign>(&m)) {
      if (task && !task->done)
        backlog.push_back(assign->task);
      else
        task.emplace(assign->task);
    } else if (const auto* throttle = std::get_if<Throttle>(&m)) {
      apply_throttle(state_, *throttle);
    }
  }

  Options opt_;
  ServantState state_;
  std::string assigned_id_;
  std::thread thread_;
  std::atomic<bool> stop_{false};
  std::atomic<bool> failed_{false};
  std::atomic<uint64_t> hashes_done_{0};
};

}  // namespace marionet
