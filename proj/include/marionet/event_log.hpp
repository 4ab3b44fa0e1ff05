#pragma once

// JSONL event log. The puppeteer writes one object per line; the defense
// module reads the same format back. Kept in memory and flushed on demand
// so tests can inspect entries without touching the filesystem.

#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace marionet {

class EventLog {
 public:
  EventLog() = default;

  void append(nlohmann::json event) {
    std::lock_guard<std::mutex> lock(mu_);
    entries_.push_back(std::move(event));
  }

  std::vector<nlohmann::json> entries() const {
    std::lock_guard<std::mutex> lock(mu_);
    return entries_;
  }

  size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return entries_.size();
  }

  std::string to_jsonl() const {
    std::lock_guard<std::mutex> lock(mu_);
    std::string out;
    for (const auto& e : entries_) {
      out += e.dump();
      out += '\n';
    }
    return out;
  }

  void write_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write event log: " + path);
    out << to_jsonl();
  }

  static std::vector<nlohmann::json> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read event log: " + path);
    std::vector<nlohmann::json> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (!j.is_discarded()) lines.push_back(std::move(j));
    }
    return lines;
  }

  static std::vector<nlohmann::json> parse_jsonl(const std::string& text) {
    std::vector<nlohmann::json> lines;
    size_t pos = 0;
    while (pos < text.size()) {
      size_t nl = text.find('\n', pos);
      if (nl == std::string::npos) nl = text.size();
      std::string line = text.substr(pos, nl - pos);
      pos = nl + 1;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (!j.is_discarded()) lines.push_back(std::move(j));
    }
    return lines;
  }

 private:
  mutable std::mutex mu_;
  std::vector<nlohmann::json> entries_;
};

}  // namespace marionet
