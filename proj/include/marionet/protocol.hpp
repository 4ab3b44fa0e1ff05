#pragma once

// Servant <-> Puppeteer wire protocol. Frames are a 4-byte big-endian
// payload length followed by the payload: canonical JSON (sorted object
// keys, no whitespace). The codec is pure; transports (TCP or the
// in-process sim channel) carry identical frames.

#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "marionet/core_model.hpp"
#include "marionet/workloads.hpp"

namespace marionet {

inline constexpr size_t kMaxFrameBytes = 16 * 1024 * 1024;
inline constexpr uint64_t kDefaultHeartbeatIntervalMs = 30000;

struct DeviceSummary {
  int cores = 1;
  std::string power_mode = "HighPerformance";

  friend bool operator==(const DeviceSummary&, const DeviceSummary&) = default;
};

struct Register {
  std::string servant_id;
  std::string origin;   // scheme+host
  std::string scope;    // absolute URI path
  std::string browser_name;
  DeviceSummary device_summary;

  friend bool operator==(const Register&, const Register&) = default;
};

struct RegisterAck {
  std::string assigned_id;
  uint64_t heartbeat_interval_ms = kDefaultHeartbeatIntervalMs;

  friend bool operator==(const RegisterAck&, const RegisterAck&) = default;
};

struct Heartbeat {
  std::string servant_id;
  uint64_t seq = 0;
  double utilization = 0.0;
  BatteryStatus battery;
  uint64_t timestamp_ms = 0;

  friend bool operator==(const Heartbeat&, const Heartbeat&) = default;
};

struct TaskAssign {
  TaskSpec task;

  friend bool operator==(const TaskAssign&, const TaskAssign&) = default;
};

struct ResultPayload {
  enum class Status { Found, Exhausted, Progress, Unsupported };
  Status status = Status::Progress;
  std::optional<std::string> finding;
  uint64_t hashes_done = 0;
  std::optional<FloodStats> flood;

  friend bool operator==(const ResultPayload&, const ResultPayload&) = default;
};

struct TaskResult {
  std::string task_id;
  ResultPayload payload;

  friend bool operator==(const TaskResult&, const TaskResult&) = default;
};

struct Throttle {
  double intensity = 1.0;
  bool pause = false;

  friend bool operator==(const Throttle&, const Throttle&) = default;
};

struct PushWake {
  std::string servant_id;

  friend bool operator==(const PushWake&, const PushWake&) = default;
};

struct ProtocolError {
  std::string code;
  std::string detail;

  friend bool operator==(const ProtocolError&, const ProtocolError&) = default;
};

using Message = std::variant<Register, RegisterAck, Heartbeat, TaskAssign, TaskResult, Throttle,
                             PushWake, ProtocolError>;

inline const char* to_string(ResultPayload::Status s) {
  switch (s) {
    case ResultPayload::Status::Found: return "found";
    case ResultPayload::Status::Exhausted: return "exhausted";
    case ResultPayload::Status::Progress: return "progress";
    case ResultPayload::Status::Unsupported: return "unsupported";
  }
  return "?";
}

namespace wire {

inline json range_to_json(const KeyRange& r) {
  return json{{"begin", u128_to_string(r.begin)}, {"end", u128_to_string(r.end)}};
}

inline bool range_from_json(const json& j, KeyRange& out) {
  if (!j.is_object() || !j.contains("begin") || !j.contains("end")) return false;
  if (!j["begin"].is_string() || !j["end"].is_string()) return false;
  u128 b = 0, e = 0;
  if (!parse_u128(j["begin"].get<std::string>(), b)) return false;
  if (!parse_u128(j["end"].get<std::string>(), e)) return false;
  if (b > e) return false;
  out = KeyRange{b, e};
  return true;
}

inline json task_to_json(const TaskSpec& t) {
  json j{{"task_id", t.task_id}, {"intensity_cap", t.intensity_cap}};
  if (const auto* crack = std::get_if<HashCrackTask>(&t.kind)) {
    j["kind"] = "hash_crack";
    j["algorithm"] = to_string(crack->algorithm);
    j["target_digest"] = to_hex(crack->target_digest);
    j["alphabet"] = crack->alphabet;
    j["length"] = crack->length;
    j["range"] = range_to_json(crack->range);
  } else if (const auto* pow = std::get_if<PowTask>(&t.kind)) {
    j["kind"] = "pow";
    j["header"] = to_hex(pow->header.data(), pow->header.size());
    j["target"] = to_hex(pow->target);
    j["nonce_range"] = range_to_json(pow->nonce_range);
  } else if (const auto* flood = std::get_if<FloodTask>(&t.kind)) {
    j["kind"] = "flood";
    j["target"] = flood->host + ":" + std::to_string(flood->port) + flood->path;
    j["method"] = to_string(flood->method);
    j["duration_ms"] = flood->duration_ms;
    j["max_concurrency"] = flood->max_concurrency;
    j["rate_cap"] = flood->rate_cap;
    j["hold_open"] = flood->hold_open;
  } else if (const auto* opaque = std::get_if<OpaqueTask>(&t.kind)) {
    j["kind"] = "opaque";
    j["label"] = opaque->label;
  }
  return j;
}

inline bool fraction_from_json(const json& j, const char* key, double& out) {
  if (!j.contains(key) || !j[key].is_number()) return false;
  double v = j[key].get<double>();
  if (!(v >= 0.0 && v <= 1.0)) return false;
  out = v;
  return true;
}

inline bool string_from_json(const json& j, const char* key, std::string& out) {
  if (!j.contains(key) || !j[key].is_string()) return false;
  out = j[key].get<std::string>();
  return true;
}

inline bool uint_from_json(const json& j, const char* key, uint64_t& out) {
  if (!j.contains(key) || !j[key].is_number_unsigned()) return false;
  out = j[key].get<uint64_t>();
  return true;
}

inline bool task_from_json(const json& j, TaskSpec& out) {
  if (!j.is_object()) return false;
  if (!string_from_json(j, "task_id", out.task_id)) return false;
  if (!fraction_from_json(j, "intensity_cap", out.intensity_cap)) return false;
  std::string kind;
  if (!string_from_json(j, "kind", kind)) return false;
  if (kind == "hash_crack") {
    HashCrackTask crack;
    std::string algo, digest_hex;
    if (!string_from_json(j, "algorithm", algo)) return false;
    auto parsed = parse_hash_algorithm(algo);
    if (!parsed) return false;
    crack.algorithm = *parsed;
    if (!string_from_json(j, "target_digest", digest_hex)) return false;
    auto digest = from_hex(digest_hex);
    if (!digest) return false;
    crack.target_digest = *digest;
    if (!string_from_json(j, "alphabet", crack.alphabet) || crack.alphabet.empty()) return false;
    uint64_t length = 0;
    if (!uint_from_json(j, "length", length) || length == 0 || length > 64) return false;
    crack.length = static_cast<uint32_t>(length);
    if (!j.contains("range") || !range_from_json(j["range"], crack.range)) return false;
    out.kind = std::move(crack);
    return true;
  }
  if (kind == "pow") {
    PowTask pow;
    std::string header_hex, target_hex;
    if (!string_from_json(j, "header", header_hex)) return false;
    auto header = from_hex(header_hex);
    if (!header) return false;
    pow.header = *header;
    if (!string_from_json(j, "target", target_hex) || target_hex.size() != 64) return false;
    auto target = from_hex(target_hex);
    if (!target) return false;
    std::copy(target->begin(), target->end(), pow.target.begin());
    if (!j.contains("nonce_range") || !range_from_json(j["nonce_range"], pow.nonce_range))
      return false;
    out.kind = std::move(pow);
    return true;
  }
  if (kind == "flood") {
    FloodTask flood;
    std::string target, method;
    if (!string_from_json(j, "target", target)) return false;
    try {
      Endpoint ep = parse_endpoint(target);
      flood.host = ep.host;
      flood.port = ep.port;
      flood.path = ep.path;
    } catch (const NetError&) {
      return false;
    }
    if (!string_from_json(j, "method", method)) return false;
    auto m = parse_http_method(method);
    if (!m) return false;
    flood.method = *m;
    if (!uint_from_json(j, "duration_ms", flood.duration_ms)) return false;
    uint64_t conc = 0;
    if (!uint_from_json(j, "max_concurrency", conc) || conc == 0 || conc > 65536) return false;
    flood.max_concurrency = static_cast<int>(conc);
    if (!j.contains("rate_cap") || !j["rate_cap"].is_number()) return false;
    flood.rate_cap = j["rate_cap"].get<double>();
    if (flood.rate_cap < 0) return false;
    if (!j.contains("hold_open") || !j["hold_open"].is_boolean()) return false;
    flood.hold_open = j["hold_open"].get<bool>();
    out.kind = std::move(flood);
    return true;
  }
  if (kind == "opaque") {
    OpaqueTask opaque;
    if (!string_from_json(j, "label", opaque.label)) return false;
    out.kind = std::move(opaque);
    return true;
  }
  return false;
}

inline json battery_to_wire(const BatteryStatus& b) {
  return json{{"charging", b.charging}, {"level", b.level}};
}

inline bool battery_from_wire(const json& j, BatteryStatus& out) {
  if (!j.is_object() || !j.contains("charging") || !j["charging"].is_boolean()) return false;
  out.charging = j["charging"].get<bool>();
  double level = 0;
  if (!fraction_from_json(j, "level", level)) return false;
  out.level = level;
  return true;
}

}  // namespace wire

inline json message_to_json(const Message& m) {
  json j;
  if (const auto* reg = std::get_if<Register>(&m)) {
    j["type"] = "register";
    j["servant_id"] = reg->servant_id;
    j["origin"] = reg->origin;
    j["scope"] = reg->scope;
    j["browser_name"] = reg->browser_name;
    j["device_summary"] =
        json{{"cores", reg->device_summary.cores}, {"power_mode", reg->device_summary.power_mode}};
  } else if (const auto* ack = std::get_if<RegisterAck>(&m)) {
    j["type"] = "register_ack";
    j["assigned_id"] = ack->assigned_id;
    j["heartbeat_interval_ms"] = ack->heartbeat_interval_ms;
  } else if (const auto* hb = std::get_if<Heartbeat>(&m)) {
    j["type"] = "heartbeat";
    j["servant_id"] = hb->servant_id;
    j["seq"] = hb->seq;
    j["utilization"] = hb->utilization;
    j["battery"] = wire::battery_to_wire(hb->battery);
    j["timestamp_ms"] = hb->timestamp_ms;
  } else if (const auto* assign = std::get_if<TaskAssign>(&m)) {
    j["type"] = "task_assign";
    j["task"] = wire::task_to_json(assign->task);
  } else if (const auto* result = std::get_if<TaskResult>(&m)) {
    j["type"] = "task_result";
    j["task_id"] = result->task_id;
    json p{{"status", to_string(result->payload.status)},
           {"hashes_done", result->payload.hashes_done}};
    if (result->payload.finding) p["finding"] = *result->payload.finding;
    if (result->payload.flood) {
      const FloodStats& f = *result->payload.flood;
      p["flood"] = json{{"attempted", f.attempted},
                        {"completed", f.completed},
                        {"failed", f.failed},
                        {"in_flight_at_deadline", f.in_flight_at_deadline},
                        {"achieved_rate", f.achieved_rate},
                        {"duration_ms", f.duration_ms}};
    }
    j["payload"] = p;
  } else if (const auto* throttle = std::get_if<Throttle>(&m)) {
    j["type"] = "throttle";
    j["intensity"] = throttle->intensity;
    j["pause"] = throttle->pause;
  } else if (const auto* wake = std::get_if<PushWake>(&m)) {
    j["type"] = "push_wake";
    j["servant_id"] = wake->servant_id;
  } else if (const auto* err = std::get_if<ProtocolError>(&m)) {
    j["type"] = "error";
    j["code"] = err->code;
    j["detail"] = err->detail;
  }
  return j;
}

inline bool message_from_json(const json& j, Message& out) {
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) return false;
  const std::string type = j["type"].get<std::string>();
  using namespace wire;
  if (type == "register") {
    Register m;
    if (!string_from_json(j, "servant_id", m.servant_id)) return false;
    if (!string_from_json(j, "origin", m.origin)) return false;
    if (!string_from_json(j, "scope", m.scope)) return false;
    if (!string_from_json(j, "browser_name", m.browser_name)) return false;
    if (!j.contains("device_summary") || !j["device_summary"].is_object()) return false;
    const json& ds = j["device_summary"];
    if (!ds.contains("cores") || !ds["cores"].is_number_integer()) return false;
    m.device_summary.cores = ds["cores"].get<int>();
    if (m.device_summary.cores < 1) return false;
    if (!string_from_json(ds, "power_mode", m.device_summary.power_mode)) return false;
    out = std::move(m);
    return true;
  }
  if (type == "register_ack") {
    RegisterAck m;
    if (!string_from_json(j, "assigned_id", m.assigned_id)) return false;
    if (!uint_from_json(j, "heartbeat_interval_ms", m.heartbeat_interval_ms)) return false;
    out = std::move(m);
    return true;
  }
  if (type == "heartbeat") {
    Heartbeat m;
    if (!string_from_json(j, "servant_id", m.servant_id)) return false;
    if (!uint_from_json(j, "seq", m.seq)) return false;
    if (!fraction_from_json(j, "utilization", m.utilization)) return false;
    if (!j.contains("battery") || !battery_from_wire(j["battery"], m.battery)) return false;
    if (!uint_from_json(j, "timestamp_ms", m.timestamp_ms)) return false;
    out = std::move(m);
    return true;
  }
  if (type == "task_assign") {
    TaskAssign m;
    if (!j.contains("task") || !task_from_json(j["task"], m.task)) return false;
    out = std::move(m);
    return true;
  }
  if (type == "task_result") {
    TaskResult m;
    if (!string_from_json(j, "task_id", m.task_id)) return false;
    if (!j.contains("payload") || !j["payload"].is_object()) return false;
    const json& p = j["payload"];
    std::string status;
    if (!string_from_json(p, "status", status)) return false;
    if (status == "found")
      m.payload.status = ResultPayload::Status::Found;
    else if (status == "exhausted")
      m.payload.status = ResultPayload::Status::Exhausted;
    else if (status == "progress")
      m.payload.status = ResultPayload::Status::Progress;
    else if (status == "unsupported")
      m.payload.status = ResultPayload::Status::Unsupported;
    else
      return false;
    if (!uint_from_json(p, "hashes_done", m.payload.hashes_done)) return false;
    if (p.contains("finding")) {
      if (!p["finding"].is_string()) return false;
      m.payload.finding = p["finding"].get<std::string>();
    }
    if (p.contains("flood")) {
      const json& f = p["flood"];
      if (!f.is_object()) return false;
      FloodStats fs;
      if (!uint_from_json(f, "attempted", fs.attempted)) return false;
      if (!uint_from_json(f, "completed", fs.completed)) return false;
      if (!uint_from_json(f, "failed", fs.failed)) return false;
      if (!uint_from_json(f, "in_flight_at_deadline", fs.in_flight_at_deadline)) return false;
      if (!f.contains("achieved_rate") || !f["achieved_rate"].is_number()) return false;
      fs.achieved_rate = f["achieved_rate"].get<double>();
      if (!uint_from_json(f, "duration_ms", fs.duration_ms)) return false;
      m.payload.flood = fs;
    }
    out = std::move(m);
    return true;
  }
  if (type == "throttle") {
    Throttle m;
    if (!fraction_from_json(j, "intensity", m.intensity)) return false;
    if (!j.contains("pause") || !j["pause"].is_boolean()) return false;
    m.pause = j["pause"].get<bool>();
    out = std::move(m);
    return true;
  }
  if (type == "push_wake") {
    PushWake m;
    if (!string_from_json(j, "servant_id", m.servant_id)) return false;
    out = std::move(m);
    return true;
  }
  if (type == "error") {
    ProtocolError m;
    if (!string_from_json(j, "code", m.code)) return false;
    if (!string_from_json(j, "detail", m.detail)) return false;
    out = std::move(m);
    return true;
  }
  return false;  // caller maps this to UnknownTag
}

// 4-byte big-endian length prefix, then the canonical JSON payload.
inline std::vector<uint8_t> encode(const Message& m) {
  std::string payload = message_to_json(m).dump();
  std::vector<uint8_t> frame;
  frame.reserve(payload.size() + 4);
  uint32_t len = static_cast<uint32_t>(payload.size());
  frame.push_back(static_cast<uint8_t>(len >> 24));
  frame.push_back(static_cast<uint8_t>(len >> 16));
  frame.push_back(static_cast<uint8_t>(len >> 8));
  frame.push_back(static_cast<uint8_t>(len));
  frame.insert(frame.end(), payload.begin(), payload.end());
  return frame;
}

enum class DecodeStatus { Ok, NeedMoreBytes, MalformedFrame, OversizeFrame, UnknownTag };

struct Decoded {
  DecodeStatus status = DecodeStatus::NeedMoreBytes;
  Message message;
  // Bytes consumed by this frame (0 when more input is needed; for
  // OversizeFrame the stream cannot be resynchronized).
  size_t frame_size = 0;
  size_t error_offset = 0;
};

inline Decoded decode(std::span<const uint8_t> bytes) {
  Decoded d;
  if (bytes.size() < 4) {
    d.status = DecodeStatus::NeedMoreBytes;
    return d;
  }
  uint32_t len = (uint32_t(bytes[0]) << 24) | (uint32_t(bytes[1]) << 16) |
                 (uint32_t(bytes[2]) << 8) | uint32_t(bytes[3]);
  if (len > kMaxFrameBytes) {
    d.status = DecodeStatus::OversizeFrame;
    d.error_offset = 0;
    return d;
  }
  if (bytes.size() < 4 + static_cast<size_t>(len)) {
    d.status = DecodeStatus::NeedMoreBytes;
    return d;
  }
  d.frame_size = 4 + static_cast<size_t>(len);
  json payload = json::parse(bytes.begin() + 4, bytes.begin() + 4 + len, nullptr, false);
  if (payload.is_discarded()) {
    d.status = DecodeStatus::MalformedFrame;
    d.error_offset = 4;
    return d;
  }
  if (!payload.is_object() || !payload.contains("type") || !payload["type"].is_string()) {
    d.status = DecodeStatus::MalformedFrame;
    d.error_offset = 4;
    return d;
  }
  Message m;
  if (!message_from_json(payload, m)) {
    static const char* kKnown[] = {"register",    "register_ack", "heartbeat", "task_assign",
                                   "task_result", "throttle",     "push_wake", "error"};
    const std::string type = payload["type"].get<std::string>();
    bool known = false;
    for (const char* k : kKnown) known |= (type == k);
    d.status = known ? DecodeStatus::MalformedFrame : DecodeStatus::UnknownTag;
    d.error_offset = 4;
    return d;
  }
  d.status = DecodeStatus::Ok;
  d.message = std::move(m);
  return d;
}

// Incremental frame extraction for a connection's read buffer.
class FrameReader {
 public:
  void feed(const uint8_t* data, size_t len) { buf_.insert(buf_.end(), data, data + len); }

  // Returns the next decoded frame, or nullopt when more bytes are needed.
  // Malformed/unknown frames are consumed and reported; an oversize length
  // prefix poisons the stream (fatal() turns true).
  std::optional<Decoded> next() {
    if (fatal_) return std::nullopt;
    Decoded d = decode(std::span<const uint8_t>(buf_.data(), buf_.size()));
    if (d.status == DecodeStatus::NeedMoreBytes) return std::nullopt;
    if (d.status == DecodeStatus::OversizeFrame) {
      fatal_ = true;
      return d;
    }
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<long>(d.frame_size));
    return d;
  }

  bool fatal() const { return fatal_; }
  size_t buffered() const { return buf_.size(); }

 private:
  std::vector<uint8_t> buf_;
  bool fatal_ = false;
};

// --- registration validation -------------------------------------------

struct RegistrationRequest {
  std::string origin;         // scheme+host of the registering page
  std::string script_origin;  // scheme+host the worker script is fetched from
  std::string scope;          // absolute URI path
  std::set<std::string> existing_scopes;
};

enum class RejectReason { InsecureScheme, ThirdPartyScript, ScopeOverlap, MalformedScope };

struct RegistrationDecision {
  bool accepted = false;
  RejectReason reason = RejectReason::MalformedScope;
};

inline const char* to_string(RejectReason r) {
  switch (r) {
    case RejectReason::InsecureScheme: return "InsecureScheme";
    case RejectReason::ThirdPartyScript: return "ThirdPartyScript";
    case RejectReason::ScopeOverlap: return "ScopeOverlap";
    case RejectReason::MalformedScope: return "MalformedScope";
  }
  return "?";
}

namespace detail {

inline std::vector<std::string> scope_segments(const std::string& scope) {
  std::vector<std::string> segments;
  std::string current;
  for (size_t i = 1; i < scope.size(); ++i) {
    if (scope[i] == '/') {
      if (!current.empty()) segments.push_back(current);
      current.clear();
    } else {
      current.push_back(scope[i]);
    }
  }
  if (!current.empty()) segments.push_back(current);
  return segments;
}

}  // namespace detail

// Overlap at path-segment granularity: one scope controls the other when
// its segment list is a prefix of the other's ("/a/" vs "/a/b/", but not
// "/a/" vs "/ab/").
inline bool scopes_overlap(const std::string& a, const std::string& b) {
  auto sa = detail::scope_segments(a);
  auto sb = detail::scope_segments(b);
  size_t n = std::min(sa.size(), sb.size());
  for (size_t i = 0; i < n; ++i)
    if (sa[i] != sb[i]) return false;
  return true;
}

inline RegistrationDecision validate_registration(const RegistrationRequest& r) {
  if (r.scope.empty() || r.scope[0] != '/')
    return {false, RejectReason::MalformedScope};
  if (r.origin.rfind("https://", 0) != 0)
    return {false, RejectReason::InsecureScheme};
  if (r.script_origin != r.origin)
    return {false, RejectReason::ThirdPartyScript};
  for (const auto& existing : r.existing_scopes)
    if (scopes_overlap(r.scope, existing)) return {false, RejectReason::ScopeOverlap};
  return {true, RejectReason::MalformedScope};
}

}  // namespace marionet
