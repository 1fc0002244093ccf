#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gflow/event_log.hpp"
#include "gflow/execution.hpp"
#include "gflow/object_store.hpp"
#include "gflow/rational.hpp"
#include "gflow/workflow.hpp"

namespace gflow {

enum class TaskState { Queued, Running, Succeeded, Failed, Exhausted };
enum class StepState { Pending, Running, Succeeded, Failed };

std::string_view to_string(TaskState state);
std::string_view to_string(StepState state);

inline constexpr int kDefaultMaxRetries = 3;
inline const Rational kDefaultLeaseHours{24};

struct Job {
  std::string job_id;
  Workflow workflow;
  std::vector<std::string> sample_ids;
  ResourceRequest defaults;
  int max_retries = kDefaultMaxRetries;
  StoreUri result_root;
  Rational lease_hours = kDefaultLeaseHours;
  // Concurrent step slots per machine type.
  std::map<std::string, int> pool_capacity;
};

struct AttemptRecord {
  int attempt = 0;
  Rational leased_at;
  std::optional<Rational> finished_at;
  std::vector<StepObservation> steps;
  std::optional<TaskState> result;  // Succeeded or Failed once the attempt ends
  std::string failed_step;
  FailureReason reason = FailureReason::None;
};

struct TaskRecord {
  std::string sample_id;
  TaskState state = TaskState::Queued;
  int attempts = 0;
  // Rule names in workflow order.
  std::vector<std::pair<std::string, StepState>> step_states;
  std::vector<std::pair<TaskState, Rational>> timestamps;
  std::vector<AttemptRecord> history;
  std::optional<std::string> running_step;
  std::optional<std::string> running_pool;
  Rational running_step_since;
};

struct NodePool {
  std::string machine;
  int capacity = 1;
  int in_use = 0;

  int free() const { return capacity - in_use; }
};

// FIFO of pending samples plus leased samples with their expiry.
class QueueState {
 public:
  QueueState() = default;
  explicit QueueState(const std::vector<std::string>& samples);

  // Re-enqueues expired leases at the tail, then leases the head until now + lease_duration.
  std::optional<std::string> lease_next(const Rational& now, const Rational& lease_duration);

  void push(const std::string& sample);
  void take(const std::string& sample, const Rational& expiry);  // head of pending -> in flight
  void renew(const std::string& sample, const Rational& expiry);
  void release(const std::string& sample);

  // Leases with expiry <= now, ordered by (expiry, sample).
  std::vector<std::string> expired(const Rational& now) const;

  const std::deque<std::string>& pending() const { return pending_; }
  const std::map<std::string, Rational>& in_flight() const { return in_flight_; }
  bool contains(const std::string& sample) const;

 private:
  std::deque<std::string> pending_;
  std::map<std::string, Rational> in_flight_;
};

struct Lease {
  std::string sample_id;
  int attempt = 0;
  Rational expiry;
};

struct TaskOutcome {
  bool succeeded = true;
  std::string step;
  FailureReason reason = FailureReason::None;
  std::string detail;

  static TaskOutcome success() { return {}; }
  static TaskOutcome failure(std::string step, FailureReason reason, std::string detail = {}) {
    return {false, std::move(step), reason, std::move(detail)};
  }
};

struct StepProgress {
  std::size_t pending = 0;
  std::size_t running = 0;
  std::size_t succeeded = 0;
  std::size_t failed = 0;
};

struct JobStatus {
  std::string job_id;
  std::map<TaskState, std::size_t> counts;
  std::map<std::string, StepProgress> steps;
  Rational elapsed_hours;
  std::optional<Rational> eta_hours;
  std::size_t total = 0;
};

std::string render_status(const JobStatus& status);

struct RecoveryReport {
  std::size_t events_replayed = 0;
  std::vector<std::string> reverted;  // Running at crash time, re-queued or exhausted now
  std::optional<CorruptRecord> corruption;
};

struct Recovery;

// Single-writer controller state. Every mutation is appended to the event log first and then
// applied through the same fold used by recovery, so replaying the log rebuilds this object.
class Orchestrator {
 public:
  // Validates the job and appends `job_submitted`. Throws EmptySampleList, DuplicateSampleId, InvalidArgument.
  static Orchestrator submit(Job job, std::unique_ptr<EventLog> log, const Rational& now = Rational(0));

  // Folds a log. Throws Error(CorruptLog) on an illegal or malformed transition.
  static Orchestrator replay(const std::vector<Event>& events, std::unique_ptr<EventLog> sink = nullptr);

  // Rebuilds state from a log file, truncates a torn tail, and reverts Running tasks whose workers are gone.
  static Recovery recover(const std::filesystem::path& log_path, bool fsync_each = false);

  Orchestrator(Orchestrator&&) noexcept;
  Orchestrator& operator=(Orchestrator&&) noexcept;
  ~Orchestrator();

  // Expires stale leases, then leases the queue head (attempts increments here).
  std::optional<Lease> lease_next(const Rational& now);
  void expire_leases(const Rational& now);

  // Claims a slot in `pool` and renews the task lease.
  void step_started(const std::string& sample, const std::string& rule, const std::string& pool, const Rational& now);
  void step_finished(const std::string& sample, const StepObservation& observation, const Rational& now);

  // Throws UnknownSample, NotInFlight (also when `attempt` is given and stale).
  const TaskRecord& report_outcome(const std::string& sample, const TaskOutcome& outcome, const Rational& now,
                                   std::optional<int> attempt = std::nullopt);

  const Job& job() const { return job_; }
  const QueueState& queue() const { return queue_; }
  const std::map<std::string, NodePool>& pools() const { return pools_; }
  const TaskRecord& record(const std::string& sample) const;
  const std::map<std::string, TaskRecord>& records() const { return records_; }
  std::map<TaskState, std::size_t> counts() const;
  bool finished() const;
  const Rational& last_time() const { return last_time_; }
  const Rational& submitted_at() const { return submitted_at_; }
  std::uint64_t last_seq() const { return last_seq_; }

  JobStatus status(const Rational& now) const;

  // Called after every applied event; used by tests to check invariants at each log point.
  using Observer = std::function<void(const Orchestrator&, const Event&)>;
  void set_observer(Observer observer) { observer_ = std::move(observer); }

  // Appends a marker that changes no state (audit records such as `recovered`).
  void note(const std::string& type, nlohmann::json payload, const Rational& now);

 private:
  Orchestrator();

  void emit(std::optional<std::string> sample, std::string type, nlohmann::json payload, const Rational& now);
  void apply(const Event& event);
  // Requeues a Failed task or marks it Exhausted when its retries are spent.
  void settle_failed(const std::string& sample, const Rational& now);
  void fail_running(const std::string& sample, FailureReason reason, const std::string& detail, const Rational& now);
  void close_running_step(const std::string& sample, FailureReason reason, const Rational& now);
  TaskRecord& mutable_record(const std::string& sample);

  std::unique_ptr<EventLog> log_;
  Job job_;
  std::map<std::string, TaskRecord> records_;
  QueueState queue_;
  std::map<std::string, NodePool> pools_;
  std::uint64_t last_seq_ = 0;
  Rational last_time_;
  Rational submitted_at_;
  bool submitted_ = false;
  Observer observer_;
};

struct Recovery {
  Orchestrator orchestrator;
  RecoveryReport report;
};

// One ID per line; `#` comments and blank lines ignored. Throws EmptySampleList, DuplicateSampleId.
std::vector<std::string> parse_sample_list(std::string_view text);
std::vector<std::string> load_sample_list(const std::filesystem::path& path);

// Reads the sample file and submits a job over it.
Orchestrator submit_job(const Workflow& workflow, const std::filesystem::path& samples_file,
                        const ResourceRequest& defaults, const StoreUri& result_root, std::string job_id,
                        std::unique_ptr<EventLog> log, int max_retries = kDefaultMaxRetries);

nlohmann::json job_to_json(const Job& job);
Job job_from_json(const nlohmann::json& doc);

}  // namespace gflow
