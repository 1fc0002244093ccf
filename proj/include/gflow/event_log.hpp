#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gflow/rational.hpp"

namespace gflow {

// One line of a job's event log: {seq, time, job_id, sample_id?, event, payload}.
struct Event {
  std::uint64_t seq = 0;
  Rational time;  // hours since job start
  std::string job_id;
  std::optional<std::string> sample_id;
  std::string type;
  nlohmann::json payload = nlohmann::json::object();
};

std::string encode_event(const Event& event);
// Throws Error(CorruptLog).
Event decode_event(std::string_view line);

class EventLog {
 public:
  virtual ~EventLog() = default;
  virtual void append(const Event& event) = 0;
};

class MemoryEventLog : public EventLog {
 public:
  void append(const Event& event) override { lines_.push_back(encode_event(event)); }

  const std::vector<std::string>& lines() const { return lines_; }
  std::string text() const;

 private:
  std::vector<std::string> lines_;
};

// Line-delimited JSON, one write(2) per record on an O_APPEND descriptor.
class FileEventLog : public EventLog {
 public:
  explicit FileEventLog(const std::filesystem::path& path, bool fsync_each = false);
  ~FileEventLog() override;
  FileEventLog(const FileEventLog&) = delete;
  FileEventLog& operator=(const FileEventLog&) = delete;

  void append(const Event& event) override;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  bool fsync_each_;
};

// Thrown by CrashingEventLog to stand in for the controller dying.
struct SimulatedCrash : std::runtime_error {
  SimulatedCrash() : std::runtime_error("simulated crash") {}
};

// Forwards to `inner` and throws SimulatedCrash at the `crash_at`-th append (1-based), either before
// the record is written or just after it.
class CrashingEventLog : public EventLog {
 public:
  CrashingEventLog(std::unique_ptr<EventLog> inner, std::size_t crash_at, bool after_write)
      : inner_(std::move(inner)), crash_at_(crash_at), after_write_(after_write) {}

  void append(const Event& event) override {
    ++count_;
    if (count_ == crash_at_ && !after_write_) throw SimulatedCrash();
    inner_->append(event);
    if (count_ == crash_at_ && after_write_) throw SimulatedCrash();
  }

 private:
  std::unique_ptr<EventLog> inner_;
  std::size_t crash_at_;
  bool after_write_;
  std::size_t count_ = 0;
};

struct CorruptRecord {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct LogContents {
  std::vector<Event> events;
  std::optional<CorruptRecord> corruption;
  // Bytes of the well-formed prefix.
  std::uint64_t valid_bytes = 0;
};

// Reads records until the first malformed line (bad JSON, missing newline, or a seq gap).
LogContents parse_event_log(std::string_view text);
LogContents read_event_log(const std::filesystem::path& path);

}  // namespace gflow
