#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "gflow/catalog.hpp"
#include "gflow/local_runner.hpp"
#include "gflow/object_store.hpp"
#include "gflow/orchestrator.hpp"
#include "gflow/workload.hpp"

namespace gflow {

struct StepCompletion {
  std::string sample_id;
  int attempt = 0;
  StepObservation observation;
};

// Where steps actually run. run_job owns ordering and pool slots; an executor only starts steps and
// reports them back, on a real or a virtual clock.
class StepExecutor {
 public:
  virtual ~StepExecutor() = default;

  virtual Rational now() const = 0;

  // Prepares a fresh attempt (task disk, reference staging). A returned observation means the
  // attempt failed before its first step.
  virtual std::optional<StepObservation> begin_task(const TaskPlan& plan, int attempt) = 0;

  virtual void start_step(const TaskPlan& plan, std::size_t index, int attempt) = 0;

  // Next finished step; nullopt when nothing is running or, if the executor honours it, when
  // `deadline` comes first (now() is then the deadline).
  virtual std::optional<StepCompletion> wait_next(const std::optional<Rational>& deadline) = 0;

  virtual void cancel(const std::string& sample, int attempt) = 0;

  // Writes the task's results under `result_root/<sample>/` without replacing existing objects.
  // Returns (written, already present).
  virtual std::pair<std::size_t, std::size_t> publish(const TaskPlan& plan, int attempt,
                                                      const StoreUri& result_root) = 0;

  virtual void end_task(const TaskPlan& plan, int attempt, bool succeeded) {
    (void)plan, (void)attempt, (void)succeeded;
  }
};

// Discrete-event executor: a step finishing at virtual time t is delivered in (t, start order) order.
class SimExecutor : public StepExecutor {
 public:
  // `store` may be null, in which case nothing is published.
  SimExecutor(WorkloadSpec spec, MachineCatalog catalog, ObjectStore* store, Rational start = Rational(0));

  Rational now() const override { return now_; }
  std::optional<StepObservation> begin_task(const TaskPlan& plan, int attempt) override;
  void start_step(const TaskPlan& plan, std::size_t index, int attempt) override;
  std::optional<StepCompletion> wait_next(const std::optional<Rational>& deadline) override;
  void cancel(const std::string& sample, int attempt) override;
  std::pair<std::size_t, std::size_t> publish(const TaskPlan& plan, int attempt, const StoreUri& result_root) override;

 private:
  struct Pending {
    Rational time;
    std::uint64_t seq;
    StepCompletion completion;
  };
  struct Later {
    bool operator()(const Pending& a, const Pending& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  WorkloadSpec spec_;
  MachineCatalog catalog_;
  ObjectStore* store_;
  Rational now_;
  std::uint64_t next_seq_ = 0;
  std::priority_queue<Pending, std::vector<Pending>, Later> events_;
  std::map<std::string, int> cancelled_;  // sample -> attempt whose completion is dropped
};

// Runs steps as local processes. Each attempt gets its own task disk
// `<work_root>/<job>/<sample>/attempt-<n>`, which is also every step's working directory.
class LocalExecutor : public StepExecutor {
 public:
  LocalExecutor(ObjectStore& store, std::optional<StoreUri> ref_root, std::filesystem::path work_root,
                LocalOptions options, Rational start = Rational(0));

  Rational now() const override;
  std::optional<StepObservation> begin_task(const TaskPlan& plan, int attempt) override;
  void start_step(const TaskPlan& plan, std::size_t index, int attempt) override;
  // Ignores the deadline; long local steps are bounded by the step timeout instead.
  std::optional<StepCompletion> wait_next(const std::optional<Rational>& deadline) override;
  void cancel(const std::string& sample, int attempt) override;
  std::pair<std::size_t, std::size_t> publish(const TaskPlan& plan, int attempt, const StoreUri& result_root) override;
  void end_task(const TaskPlan& plan, int attempt, bool succeeded) override;

  std::filesystem::path task_disk(const std::string& sample, int attempt) const;

  // Keep task disks of successful attempts (failed ones are always kept for inspection).
  bool keep_disks = false;

 private:
  ObjectStore& store_;
  std::optional<StoreUri> ref_root_;
  std::filesystem::path work_root_;
  ProcessPool pool_;
  Rational start_;
  std::chrono::steady_clock::time_point epoch_;
};

struct RunReport {
  std::string job_id;
  Rational started;
  Rational finished;
  // Job submission to the last step completion.
  Rational makespan;
  std::map<TaskState, std::size_t> counts;
  std::vector<std::string> exhausted;
  std::size_t results_written = 0;
  std::size_t results_present = 0;

  bool all_succeeded() const { return exhausted.empty(); }
};

// Drives the orchestrator until every task is Succeeded or Exhausted. Steps of a task run in
// topological order, each holding a slot in the pool of its machine. Waiting steps of admitted
// tasks go before new admissions, and admission is strict FIFO on the queue head.
RunReport run_job(Orchestrator& orch, StepExecutor& executor, std::string_view reference_root = "reference");

// The plan run_job uses for `sample`.
TaskPlan plan_for(const Job& job, const std::string& sample, std::string_view reference_root = "reference");

}  // namespace gflow
