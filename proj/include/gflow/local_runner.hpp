#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <sys/resource.h>
#include <sys/types.h>

#include "gflow/execution.hpp"
#include "gflow/object_store.hpp"
#include "gflow/workflow.hpp"

namespace gflow {

struct LocalOptions {
  // Step logs go to <log_root>/<job_id>/<sample>/<rule>.{out,err}.
  std::filesystem::path log_root = "logs";
  std::string job_id = "job";
  std::optional<std::chrono::milliseconds> step_timeout;
  // Wraps steps that name an image, e.g. "docker run --rm -v \"$PWD\":/w -w /w {image} sh -c {command}".
  // Both placeholders are substituted shell-quoted. Empty disables wrapping.
  std::string container_template;
  std::chrono::milliseconds poll_interval{20};
};

// Runs step commands as `/bin/sh -c` children in their own process groups, several at once.
class ProcessPool {
 public:
  explicit ProcessPool(LocalOptions options);
  ~ProcessPool();
  ProcessPool(const ProcessPool&) = delete;
  ProcessPool& operator=(const ProcessPool&) = delete;

  // Starts `step` with working directory `cwd` (the task disk). A spawn error is reported by the next wait_any.
  void start(const std::string& id, const std::string& sample, const StepSpec& step, const std::filesystem::path& cwd,
             const std::string& machine);

  // Blocks until some step finishes. Nullopt when nothing is running.
  std::optional<std::pair<std::string, StepObservation>> wait_any();

  // Kills the step's process group and forgets it.
  void cancel(const std::string& id);

  std::size_t running() const { return children_.size(); }
  const LocalOptions& options() const { return options_; }

 private:
  struct Child {
    pid_t pid = -1;
    std::string sample;
    StepSpec step;
    std::filesystem::path cwd;
    std::string machine;
    std::chrono::steady_clock::time_point started;
    std::uint64_t peak_rss = 0;
    bool timed_out = false;
    int exec_errno_fd = -1;
    std::optional<StepObservation> early;  // spawn failures
  };

  StepObservation complete(Child& child, int status, const struct rusage& usage);
  void sample_memory();

  LocalOptions options_;
  std::map<std::string, Child> children_;
  std::chrono::steady_clock::time_point last_sample_;
};

// Apparent size of every regular file under `dir`, symlinks not followed.
std::uintmax_t directory_bytes(const std::filesystem::path& dir);

// Runs one step to completion in `cwd`.
StepObservation run_step_local(const StepSpec& step, const std::string& sample, const std::filesystem::path& cwd,
                               const LocalOptions& options);

// Stages references (when `ref_root` is given) onto `disk_root`, then runs the steps in order, stopping at
// the first failure. Staging errors become a failed outcome naming the first step.
ExecutionOutcome run_task_local(const TaskPlan& plan, const std::filesystem::path& disk_root,
                                const ObjectStore* store, const std::optional<StoreUri>& ref_root,
                                const LocalOptions& options);

}  // namespace gflow
