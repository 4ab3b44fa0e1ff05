#pragma once

// Countermeasures as executable analyses over event logs and registration
// streams: metadata-only beacon detection (the channel may be encrypted,
// but the messages still have to flow), payload signature scanning, and
// registration/lifetime policy enforcement.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "marionet/event_log.hpp"

namespace marionet {

struct TimedMessage {
  double t_ms = 0;
  double size_bytes = 0;
};

struct FlowFeatures {
  size_t message_count = 0;
  double inter_arrival_mean_ms = 0;
  double inter_arrival_cv = 0;  // std/mean; 0 by convention for < 2 intervals
  double payload_size_mean = 0;
  double payload_size_cv = 0;
  double duty_cycle = 0;  // fraction of 1 s bins in [first, last] with traffic

  nlohmann::json to_json() const {
    return nlohmann::json{{"message_count", message_count},
                          {"inter_arrival_mean_ms", inter_arrival_mean_ms},
                          {"inter_arrival_cv", inter_arrival_cv},
                          {"payload_size_mean", payload_size_mean},
                          {"payload_size_cv", payload_size_cv},
                          {"duty_cycle", duty_cycle}};
  }
};

class EmptyTrace : public std::invalid_argument {
 public:
  EmptyTrace() : std::invalid_argument("extract_features: empty trace") {}
};

namespace detail {

inline double coefficient_of_variation(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (mean == 0) return 0.0;
  double var = 0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return std::sqrt(var) / mean;
}

}  // namespace detail

inline FlowFeatures extract_features(const std::vector<TimedMessage>& trace) {
  if (trace.empty()) throw EmptyTrace();
  for (size_t i = 1; i < trace.size(); ++i)
    if (trace[i].t_ms < trace[i - 1].t_ms)
      throw std::invalid_argument("extract_features: trace not sorted by timestamp");

  FlowFeatures f;
  f.message_count = trace.size();

  std::vector<double> gaps;
  gaps.reserve(trace.size());
  for (size_t i = 1; i < trace.size(); ++i) gaps.push_back(trace[i].t_ms - trace[i - 1].t_ms);
  if (!gaps.empty()) {
    double mean = 0;
    for (double g : gaps) mean += g;
    f.inter_arrival_mean_ms = mean / static_cast<double>(gaps.size());
  }
  f.inter_arrival_cv = detail::coefficient_of_variation(gaps);

  std::vector<double> sizes;
  sizes.reserve(trace.size());
  double size_mean = 0;
  for (const auto& m : trace) {
    sizes.push_back(m.size_bytes);
    size_mean += m.size_bytes;
  }
  f.payload_size_mean = size_mean / static_cast<double>(trace.size());
  f.payload_size_cv = detail::coefficient_of_variation(sizes);

  double span_s = (trace.back().t_ms - trace.front().t_ms) / 1000.0;
  uint64_t bins = static_cast<uint64_t>(span_s) + 1;
  std::set<uint64_t> occupied;
  for (const auto& m : trace)
    occupied.insert(static_cast<uint64_t>((m.t_ms - trace.front().t_ms) / 1000.0));
  f.duty_cycle = static_cast<double>(occupied.size()) / static_cast<double>(bins);
  return f;
}

struct BeaconVerdict {
  bool flagged = false;
  double score = 0.0;  // 1 - cv/threshold, clamped to [0,1]
};

inline BeaconVerdict detect_beacon(const FlowFeatures& f, double cv_threshold, size_t min_count) {
  BeaconVerdict v;
  double score = cv_threshold > 0 ? 1.0 - f.inter_arrival_cv / cv_threshold : 0.0;
  v.score = std::min(1.0, std::max(0.0, score));
  v.flagged = f.message_count >= min_count && f.inter_arrival_cv < cv_threshold;
  return v;
}

struct SignatureMatch {
  size_t pattern_index = 0;
  size_t offset = 0;

  friend bool operator==(const SignatureMatch&, const SignatureMatch&) = default;
};

// Leftmost non-overlapping matches per pattern.
inline std::vector<SignatureMatch> signature_scan(
    std::span<const uint8_t> payload, const std::vector<std::vector<uint8_t>>& signatures) {
  std::vector<SignatureMatch> matches;
  for (size_t p = 0; p < signatures.size(); ++p) {
    const auto& pattern = signatures[p];
    if (pattern.empty()) throw std::invalid_argument("signature_scan: empty pattern");
    size_t pos = 0;
    while (pos + pattern.size() <= payload.size()) {
      auto it = std::search(payload.begin() + static_cast<long>(pos), payload.end(),
                            pattern.begin(), pattern.end());
      if (it == payload.end()) break;
      size_t offset = static_cast<size_t>(it - payload.begin());
      matches.push_back(SignatureMatch{p, offset});
      pos = offset + pattern.size();
    }
  }
  return matches;
}

struct PolicyConfig {
  std::set<std::string> whitelist;  // empty = no whitelist restriction
  std::optional<uint64_t> sw_time_cap_ms;
  bool click_to_activate = false;
  double consent_grant_prob = 0.12;  // sim-mode consent sampling
};

struct PolicyEvent {
  enum class Kind { Registration, UptimeCheck };
  Kind kind = Kind::Registration;
  std::string origin;
  uint64_t uptime_ms = 0;
  bool consent_given = false;
};

enum class DenyReason { NotWhitelisted, TimeCap, NoConsent };

inline const char* to_string(DenyReason r) {
  switch (r) {
    case DenyReason::NotWhitelisted: return "NotWhitelisted";
    case DenyReason::TimeCap: return "TimeCap";
    case DenyReason::NoConsent: return "NoConsent";
  }
  return "?";
}

struct PolicyDecision {
  bool allowed = true;
  DenyReason reason = DenyReason::NotWhitelisted;
};

inline PolicyDecision enforce_policy(const PolicyConfig& p, const PolicyEvent& event) {
  if (event.kind == PolicyEvent::Kind::Registration) {
    if (!p.whitelist.empty() && p.whitelist.count(event.origin) == 0)
      return {false, DenyReason::NotWhitelisted};
    if (p.click_to_activate && !event.consent_given) return {false, DenyReason::NoConsent};
    return {true, DenyReason::NotWhitelisted};
  }
  if (p.sw_time_cap_ms && event.uptime_ms > *p.sw_time_cap_ms)
    return {false, DenyReason::TimeCap};
  return {true, DenyReason::NotWhitelisted};
}

// --- log pipeline ----------------------------------------------------------

struct TraceVerdict {
  std::string trace_id;
  BeaconVerdict verdict;
  FlowFeatures features;

  nlohmann::json to_json() const {
    return nlohmann::json{{"trace_id", trace_id},
                          {"flagged", verdict.flagged},
                          {"score", verdict.score},
                          {"features", features.to_json()}};
  }
};

// Groups heartbeat events by servant and runs the beacon detector per
// trace. Consumes the puppeteer JSONL format verbatim.
inline std::vector<TraceVerdict> analyze_heartbeat_log(const std::vector<nlohmann::json>& lines,
                                                       double cv_threshold, size_t min_count) {
  std::map<std::string, std::vector<TimedMessage>> traces;
  for (const auto& line : lines) {
    if (!line.is_object() || line.value("event", "") != "heartbeat") continue;
    if (!line.contains("t_ms") || !line["t_ms"].is_number()) continue;
    std::string servant = line.value("servant", "");
    TimedMessage m;
    m.t_ms = line["t_ms"].get<double>();
    m.size_bytes = line.value("size_bytes", 0.0);
    traces[servant].push_back(m);
  }
  std::vector<TraceVerdict> verdicts;
  for (auto& [servant, trace] : traces) {
    std::sort(trace.begin(), trace.end(),
              [](const TimedMessage& a, const TimedMessage& b) { return a.t_ms < b.t_ms; });
    TraceVerdict tv;
    tv.trace_id = servant;
    tv.features = extract_features(trace);
    tv.verdict = detect_beacon(tv.features, cv_threshold, min_count);
    verdicts.push_back(std::move(tv));
  }
  return verdicts;
}

}  // namespace marionet
