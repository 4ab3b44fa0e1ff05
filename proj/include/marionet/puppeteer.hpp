#pragma once

// Command-and-control service: servant registry, keyspace-partitioned task
// scheduling with heartbeat-miss reassignment, and the AIMD throttle
// controller. The registry and task board are mutated only by the server's
// loop thread; other threads submit commands and read snapshots.

#include <atomic>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "marionet/event_log.hpp"
#include "marionet/keyspace.hpp"
#include "marionet/net.hpp"
#include "marionet/protocol.hpp"
#include "marionet/workloads.hpp"

namespace marionet {

struct ServantRecord {
  std::string id;
  std::string origin;
  uint64_t last_heartbeat_ms = 0;
  double last_utilization = 0.0;
  BatteryStatus battery;
  std::vector<std::string> assigned;  // task ids
  std::set<std::string> scopes;       // pairwise non-overlapping
  double intensity = 1.0;
  bool connected = true;
};

using Registry = std::map<std::string, ServantRecord>;

struct ThrottlePolicy {
  double target_utilization = 0.8;
  double battery_floor = 0.2;
  bool pause_on_discharge_below_floor = true;
  double step_up = 0.05;   // additive increase per interval
  double backoff = 0.7;    // multiplicative decrease factor in (0,1)
};

// Additive-increase / multiplicative-decrease toward the utilization
// target, with a battery guard that pauses outright.
inline Throttle throttle_decision(const Heartbeat& hb, const ThrottlePolicy& pol,
                                  double current_intensity) {
  if (pol.pause_on_discharge_below_floor && !hb.battery.charging &&
      hb.battery.level < pol.battery_floor)
    return Throttle{current_intensity, true};
  if (hb.utilization > pol.target_utilization)
    return Throttle{current_intensity * pol.backoff, false};
  return Throttle{std::min(1.0, current_intensity + pol.step_up), false};
}

// Drains `pending`, handing each subtask to the least-loaded connected
// servant (ties broken by id). No connected servants leaves the queue
// untouched.
inline std::vector<std::pair<std::string, TaskAssign>> schedule(Registry& registry,
                                                                std::deque<TaskSpec>& pending) {
  std::vector<std::pair<std::string, TaskAssign>> assignments;
  std::vector<ServantRecord*> active;
  for (auto& [id, record] : registry)
    if (record.connected) active.push_back(&record);
  if (active.empty()) return assignments;

  while (!pending.empty()) {
    ServantRecord* least = active.front();
    for (ServantRecord* r : active)
      if (r->assigned.size() < least->assigned.size()) least = r;
    TaskSpec task = std::move(pending.front());
    pending.pop_front();
    least->assigned.push_back(task.task_id);
    assignments.emplace_back(least->id, TaskAssign{std::move(task)});
  }
  return assignments;
}

// Servants whose last heartbeat is older than misses * interval.
inline std::vector<std::string> expired_servants(const Registry& registry, uint64_t now_ms,
                                                 uint64_t interval_ms, int misses = 3) {
  std::vector<std::string> out;
  for (const auto& [id, record] : registry)
    if (now_ms - record.last_heartbeat_ms > interval_ms * static_cast<uint64_t>(misses))
      out.push_back(id);
  return out;
}

// Job/subtask bookkeeping. Every range of the original partition is at all
// times pending, assigned, or done (done covers cancelled), so work is
// conserved under churn.
class TaskBoard {
 public:
  enum class JobStatus { Running, Completed, Exhausted };
  enum class TaskState { Pending, Assigned, Done, Cancelled };

  struct Job {
    std::string id;
    JobStatus status = JobStatus::Running;
    std::optional<std::string> finding;
    std::vector<std::string> subtask_ids;
    size_t open = 0;  // subtasks not yet done/cancelled
  };

  struct ResultOutcome {
    bool known = false;
    bool duplicate = false;
    bool job_completed = false;
    bool job_exhausted = false;
    std::string job_id;
    std::vector<std::string> cancelled;  // sibling task ids withdrawn
  };

  std::string add_crack_job(HashAlgorithm algorithm, Digest target, const std::string& alphabet,
                            uint32_t length, uint64_t parts) {
    std::string job_id = "job" + std::to_string(++job_counter_);
    Job job;
    job.id = job_id;
    auto ranges = partition_keyspace(alphabet.size(), length, parts);
    for (size_t i = 0; i < ranges.size(); ++i) {
      std::string task_id = job_id + ".r" + std::to_string(i);
      TaskSpec spec = make_crack_task(task_id, algorithm, target, alphabet, length, ranges[i]);
      job.subtask_ids.push_back(task_id);
      task_job_[task_id] = job_id;
      states_[task_id] = TaskState::Pending;
      specs_[task_id] = spec;
      pending_.push_back(std::move(spec));
    }
    job.open = job.subtask_ids.size();
    jobs_[job_id] = std::move(job);
    return job_id;
  }

  void enqueue(TaskSpec spec) {
    states_[spec.task_id] = TaskState::Pending;
    specs_[spec.task_id] = spec;
    pending_.push_back(std::move(spec));
  }

  std::vector<std::pair<std::string, TaskAssign>> dispatch(Registry& registry) {
    auto assignments = schedule(registry, pending_);
    for (const auto& [servant_id, assign] : assignments) {
      states_[assign.task.task_id] = TaskState::Assigned;
      holder_[assign.task.task_id] = servant_id;
    }
    return assignments;
  }

  ResultOutcome record_result(const std::string& task_id, const ResultPayload& payload) {
    ResultOutcome outcome;
    auto state_it = states_.find(task_id);
    if (state_it == states_.end()) return outcome;  // unknown task id
    outcome.known = true;
    auto job_it = task_job_.find(task_id);
    if (job_it != task_job_.end()) outcome.job_id = job_it->second;

    if (state_it->second == TaskState::Done || state_it->second == TaskState::Cancelled) {
      outcome.duplicate = true;  // late or repeated report, ignored
      return outcome;
    }
    finish(task_id, TaskState::Done);

    if (job_it == task_job_.end()) return outcome;  // free-standing task
    Job& job = jobs_[job_it->second];
    job.open--;

    if (payload.status == ResultPayload::Status::Found && payload.finding) {
      if (job.status == JobStatus::Running) {
        job.status = JobStatus::Completed;
        job.finding = payload.finding;
        outcome.job_completed = true;
        // withdraw the siblings
        for (const auto& sibling : job.subtask_ids) {
          TaskState s = states_[sibling];
          if (s == TaskState::Pending || s == TaskState::Assigned) {
            if (s == TaskState::Assigned) outcome.cancelled.push_back(sibling);
            finish(sibling, TaskState::Cancelled);
            job.open--;
          }
        }
      }
    } else if (job.open == 0 && job.status == JobStatus::Running) {
      job.status = JobStatus::Exhausted;
      outcome.job_exhausted = true;
    }
    return outcome;
  }

  // Returns the task ids moved back to pending.
  std::vector<std::string> requeue_from_servant(const std::string& servant_id) {
    std::vector<std::string> requeued;
    for (auto& [task_id, holder] : holder_) {
      if (holder != servant_id || states_[task_id] != TaskState::Assigned) continue;
      states_[task_id] = TaskState::Pending;
      pending_.push_back(specs_[task_id]);
      requeued.push_back(task_id);
    }
    for (const auto& id : requeued) holder_.erase(id);
    return requeued;
  }

  const Job* job(const std::string& job_id) const {
    auto it = jobs_.find(job_id);
    return it == jobs_.end() ? nullptr : &it->second;
  }

  size_t pending_count() const { return pending_.size(); }
  std::deque<TaskSpec>& pending() { return pending_; }
  TaskState task_state(const std::string& task_id) const { return states_.at(task_id); }
  const TaskSpec& task_spec(const std::string& task_id) const { return specs_.at(task_id); }

  // All ranges of a job keyed by current state; the conservation property
  // checks their union against the original keyspace.
  std::vector<std::pair<TaskState, KeyRange>> job_ranges(const std::string& job_id) const {
    std::vector<std::pair<TaskState, KeyRange>> out;
    const Job& job = jobs_.at(job_id);
    for (const auto& task_id : job.subtask_ids) {
      const TaskSpec& spec = specs_.at(task_id);
      if (const auto* crack = std::get_if<HashCrackTask>(&spec.kind))
        out.emplace_back(states_.at(task_id), crack->range);
    }
    return out;
  }

 private:
  void finish(const std::string& task_id, TaskState final_state) {
    TaskState prev = states_[task_id];
    states_[task_id] = final_state;
    if (prev == TaskState::Pending) {
      for (auto it = pending_.begin(); it != pending_.end(); ++it) {
        if (it->task_id == task_id) {
          pending_.erase(it);
          break;
        }
      }
    }
    holder_.erase(task_id);
  }

  uint64_t job_counter_ = 0;
  std::deque<TaskSpec> pending_;
  std::map<std::string, TaskState> states_;
  std::map<std::string, TaskSpec> specs_;
  std::map<std::string, std::string> holder_;  // task id -> servant id
  std::map<std::string, std::string> task_job_;
  std::map<std::string, Job> jobs_;
};

// Accepts a scope for an origin iff it does not overlap any scope already
// accepted for that origin.
inline bool accept_scope(Registry& registry, const std::string& origin, const std::string& scope) {
  std::set<std::string> existing;
  for (const auto& [id, record] : registry)
    if (record.origin == origin)
      existing.insert(record.scopes.begin(), record.scopes.end());
  RegistrationRequest req{origin, origin, scope, existing};
  return validate_registration(req).accepted;
}

// --- live C&C service ------------------------------------------------------

class PuppeteerServer {
 public:
  struct Options {
    std::string host = "127.0.0.1";
    uint16_t port = 0;  // 0 picks a free port
    bool allow_nonloopback = false;
    ThrottlePolicy policy;
    uint64_t heartbeat_interval_ms = kDefaultHeartbeatIntervalMs;
    int miss_threshold = 3;
  };

  struct JobOutcome {
    TaskBoard::JobStatus status = TaskBoard::JobStatus::Running;
    std::optional<std::string> finding;
  };

  explicit PuppeteerServer(Options opt) : opt_(std::move(opt)) {}
  ~PuppeteerServer() { stop(); }

  void start() {
    listener_.open(opt_.host, opt_.port, opt_.allow_nonloopback);
    if (pipe2(wake_pipe_, O_NONBLOCK) != 0) throw NetError("pipe2 failed");
    running_.store(true);
    thread_ = std::thread([this] { loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    wake();
    if (thread_.joinable()) thread_.join();
    listener_.close();
    ::close(wake_pipe_[0]);
    ::close(wake_pipe_[1]);
  }

  uint16_t port() const { return listener_.port(); }

  std::string submit_crack_job(HashAlgorithm algorithm, const Digest& target,
                               const std::string& alphabet, uint32_t length, uint64_t parts) {
    std::lock_guard<std::mutex> lock(mu_);
    std::string job_id = board_.add_crack_job(algorithm, target, alphabet, length, parts);
    log_.append({{"t_ms", steady_now_ms()},
                 {"event", "job_submitted"},
                 {"job", job_id},
                 {"algorithm", to_string(algorithm)},
                 {"parts", parts}});
    wake();
    return job_id;
  }

  std::optional<JobOutcome> job_outcome(const std::string& job_id) {
    std::lock_guard<std::mutex> lock(mu_);
    const TaskBoard::Job* job = board_.job(job_id);
    if (!job) return std::nullopt;
    return JobOutcome{job->status, job->finding};
  }

  // Blocks until `count` servants are registered and connected, or the
  // timeout expires. Returns the connected count.
  size_t wait_for_servants(size_t count, uint64_t timeout_ms) {
    uint64_t deadline = steady_now_ms() + timeout_ms;
    while (true) {
      size_t connected = 0;
      {
        std::lock_guard<std::mutex> lock(mu_);
        for (const auto& [id, record] : registry_)
          if (record.connected) connected++;
      }
      if (connected >= count || steady_now_ms() >= deadline) return connected;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }

  // Polls until the job leaves Running or the timeout expires.
  JobOutcome wait_for_job(const std::string& job_id, uint64_t timeout_ms) {
    uint64_t deadline = steady_now_ms() + timeout_ms;
    while (steady_now_ms() < deadline) {
      auto outcome = job_outcome(job_id);
      if (outcome && outcome->status != TaskBoard::JobStatus::Running) return *outcome;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    auto outcome = job_outcome(job_id);
    return outcome ? *outcome : JobOutcome{};
  }

  std::vector<nlohmann::json> log_entries() const { return log_.entries(); }
  void write_log(const std::string& path) const { log_.write_file(path); }

  Registry registry_snapshot() {
    std::lock_guard<std::mutex> lock(mu_);
    return registry_;
  }

 private:
  struct Conn {
    Socket sock;
    FrameReader reader;
    std::string servant_id;  // empty until registered
  };

  void wake() {
    uint8_t b = 1;
    ssize_t rc = ::write(wake_pipe_[1], &b, 1);
    (void)rc;
  }

  void loop() {
    uint64_t next_sweep = steady_now_ms() + opt_.heartbeat_interval_ms;
    while (running_.load()) {
      std::vector<pollfd> pfds;
      pfds.push_back(pollfd{listener_.fd(), POLLIN, 0});
      pfds.push_back(pollfd{wake_pipe_[0], POLLIN, 0});
      for (auto& c : conns_) pfds.push_back(pollfd{c.sock.fd(), POLLIN, 0});
      ::poll(pfds.data(), pfds.size(), 20);

      if (pfds[0].revents & POLLIN) {
        while (auto sock = listener_.accept()) conns_.push_back(Conn{std::move(*sock), {}, {}});
      }
      if (pfds[1].revents & POLLIN) {
        uint8_t buf[64];
        while (::read(wake_pipe_[0], buf, sizeof(buf)) > 0) {
        }
      }

      std::lock_guard<std::mutex> lock(mu_);
      uint64_t now = steady_now_ms();

      for (size_t i = conns_.size(); i-- > 0;) {
        if (i + 2 >= pfds.size()) continue;
        if (!(pfds[i + 2].revents & (POLLIN | POLLHUP | POLLERR))) continue;
        uint8_t buf[8192];
        ssize_t n = ::recv(conns_[i].sock.fd(), buf, sizeof(buf), 0);
        if (n <= 0 && (n == 0 || (errno != EAGAIN && errno != EWOULDBLOCK))) {
          drop_connection(i, now);
          continue;
        }
        if (n > 0) conns_[i].reader.feed(buf, static_cast<size_t>(n));
        bool closed = false;
        while (auto frame = conns_[i].reader.next()) {
          if (frame->status != DecodeStatus::Ok) {
            log_.append({{"t_ms", now},
                         {"event", "protocol_error"},
                         {"detail", "undecodable frame"},
                         {"servant", conns_[i].servant_id}});
            continue;
          }
          if (!handle_message(conns_[i], frame->message, now,
                              4 + message_to_json(frame->message).dump().size())) {
            drop_connection(i, now);
            closed = true;
            break;
          }
        }
        if (!closed && conns_[i].reader.fatal()) drop_connection(i, now);
      }

      now = steady_now_ms();
      if (now >= next_sweep) {
        sweep(now);
        next_sweep = now + opt_.heartbeat_interval_ms;
      }
      dispatch(now);
    }
  }

  void drop_connection(size_t index, uint64_t now) {
    const std::string id = conns_[index].servant_id;
    if (!id.empty()) {
      auto it = registry_.find(id);
      if (it != registry_.end()) it->second.connected = false;
      log_.append({{"t_ms", now}, {"event", "disconnect"}, {"servant", id}});
    }
    conns_.erase(conns_.begin() + static_cast<long>(index));
  }

  // Returns false when the connection should be closed.
  bool handle_message(Conn& conn, const Message& m, uint64_t now, size_t frame_bytes) {
    if (const auto* reg = std::get_if<Register>(&m)) {
      std::set<std::string> existing;
      for (const auto& [id, record] : registry_)
        if (record.origin == reg->origin && record.connected)
          existing.insert(record.scopes.begin(), record.scopes.end());
      RegistrationDecision decision =
          validate_registration({reg->origin, reg->origin, reg->scope, existing});
      if (!decision.accepted) {
        log_.append({{"t_ms", now},
                     {"event", "register_rejected"},
                     {"servant", reg->servant_id},
                     {"origin", reg->origin},
                     {"scope", reg->scope},
                     {"reason", to_string(decision.reason)}});
        send_all(conn.sock.fd(),
                 encode(Message{ProtocolError{"registration_rejected", to_string(decision.reason)}}));
        return false;
      }
      std::string assigned_id = reg->servant_id;
      while (registry_.count(assigned_id) && registry_[assigned_id].connected)
        assigned_id += "+";
      ServantRecord record;
      record.id = assigned_id;
      record.origin = reg->origin;
      record.scopes = {reg->scope};
      record.last_heartbeat_ms = now;
      registry_[assigned_id] = std::move(record);
      conn.servant_id = assigned_id;
      log_.append({{"t_ms", now},
                   {"event", "register"},
                   {"servant", assigned_id},
                   {"origin", reg->origin},
                   {"scope", reg->scope},
                   {"browser", reg->browser_name},
                   {"cores", reg->device_summary.cores}});
      return send_all(conn.sock.fd(),
                      encode(Message{RegisterAck{assigned_id, opt_.heartbeat_interval_ms}}));
    }

    if (conn.servant_id.empty()) {
      send_all(conn.sock.fd(), encode(Message{ProtocolError{"not_registered", "register first"}}));
      return false;
    }
    auto reg_it = registry_.find(conn.servant_id);
    if (reg_it == registry_.end()) return false;
    ServantRecord& record = reg_it->second;

    if (const auto* hb = std::get_if<Heartbeat>(&m)) {
      record.last_heartbeat_ms = now;
      record.last_utilization = hb->utilization;
      record.battery = hb->battery;
      log_.append({{"t_ms", now},
                   {"event", "heartbeat"},
                   {"servant", conn.servant_id},
                   {"seq", hb->seq},
                   {"utilization", hb->utilization},
                   {"battery_level", hb->battery.level},
                   {"size_bytes", frame_bytes}});
      Throttle throttle = throttle_decision(*hb, opt_.policy, record.intensity);
      record.intensity = throttle.intensity;
      log_.append({{"t_ms", now},
                   {"event", "throttle"},
                   {"servant", conn.servant_id},
                   {"intensity", throttle.intensity},
                   {"pause", throttle.pause}});
      return send_all(conn.sock.fd(), encode(Message{throttle}));
    }

    if (const auto* result = std::get_if<TaskResult>(&m)) {
      record.last_heartbeat_ms = now;  // results prove liveness too
      auto outcome = board_.record_result(result->task_id, result->payload);
      auto& assigned = record.assigned;
      assigned.erase(std::remove(assigned.begin(), assigned.end(), result->task_id),
                     assigned.end());
      if (!outcome.known) {
        log_.append({{"t_ms", now},
                     {"event", "protocol_error"},
                     {"detail", "result for unknown task " + result->task_id},
                     {"servant", conn.servant_id}});
        return true;
      }
      log_.append({{"t_ms", now},
                   {"event", "result"},
                   {"servant", conn.servant_id},
                   {"task", result->task_id},
                   {"status", to_string(result->payload.status)},
                   {"hashes_done", result->payload.hashes_done},
                   {"duplicate", outcome.duplicate}});
      if (outcome.job_completed) {
        log_.append({{"t_ms", now},
                     {"event", "job_completed"},
                     {"job", outcome.job_id},
                     {"finding", result->payload.finding ? *result->payload.finding : ""}});
        cancel_assignments(outcome.cancelled, now);
      }
      if (outcome.job_exhausted)
        log_.append({{"t_ms", now}, {"event", "job_exhausted"}, {"job", outcome.job_id}});
      return true;
    }

    if (const auto* err = std::get_if<ProtocolError>(&m)) {
      log_.append({{"t_ms", now},
                   {"event", "servant_error"},
                   {"servant", conn.servant_id},
                   {"code", err->code},
                   {"detail", err->detail}});
      return true;
    }

    // Register/RegisterAck/TaskAssign/Throttle/PushWake are not valid in
    // this direction.
    send_all(conn.sock.fd(), encode(Message{ProtocolError{"unexpected", "unexpected message"}}));
    return true;
  }

  // Best-effort withdrawal: pause the servants still holding cancelled
  // subtasks; late results are deduplicated by the board.
  void cancel_assignments(const std::vector<std::string>& cancelled, uint64_t now) {
    for (const auto& task_id : cancelled) {
      for (auto& [id, record] : registry_) {
        auto it = std::find(record.assigned.begin(), record.assigned.end(), task_id);
        if (it == record.assigned.end()) continue;
        record.assigned.erase(it);
        for (auto& c : conns_) {
          if (c.servant_id == id) {
            send_all(c.sock.fd(), encode(Message{Throttle{record.intensity, true}}));
            break;
          }
        }
        log_.append({{"t_ms", now}, {"event", "cancel"}, {"task", task_id}, {"servant", id}});
      }
    }
  }

  void sweep(uint64_t now) {
    auto expired = expired_servants(registry_, now, opt_.heartbeat_interval_ms, opt_.miss_threshold);
    for (const auto& id : expired) {
      auto requeued = board_.requeue_from_servant(id);
      for (const auto& task_id : requeued)
        log_.append({{"t_ms", now}, {"event", "reassign"}, {"task", task_id}, {"servant", id}});
      log_.append({{"t_ms", now}, {"event", "servant_expired"}, {"servant", id}});
      registry_.erase(id);
    }
  }

  void dispatch(uint64_t now) {
    auto assignments = board_.dispatch(registry_);
    for (auto& [servant_id, assign] : assignments) {
      bool sent = false;
      for (auto& c : conns_) {
        if (c.servant_id == servant_id) {
          sent = send_all(c.sock.fd(), encode(Message{assign}));
          break;
        }
      }
      if (sent) {
        json detail{{"t_ms", now},
                    {"event", "task_assign"},
                    {"task", assign.task.task_id},
                    {"servant", servant_id}};
        if (const auto* crack = std::get_if<HashCrackTask>(&assign.task.kind)) {
          detail["range_begin"] = u128_to_string(crack->range.begin);
          detail["range_end"] = u128_to_string(crack->range.end);
        }
        log_.append(detail);
      } else {
        // connection went away between schedule and send
        auto it = registry_.find(servant_id);
        if (it != registry_.end()) {
          it->second.connected = false;
          auto& assigned = it->second.assigned;
          assigned.erase(std::remove(assigned.begin(), assigned.end(), assign.task.task_id),
                         assigned.end());
        }
        board_.requeue_from_servant(servant_id);
      }
    }
  }

  Options opt_;
  Listener listener_;
  int wake_pipe_[2] = {-1, -1};
  std::thread thread_;
  std::atomic<bool> running_{false};

  std::mutex mu_;
  std::vector<Conn> conns_;
  Registry registry_;
  TaskBoard board_;
  EventLog log_;
};

}  // namespace marionet
