#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gflow/rational.hpp"
#include "gflow/types.hpp"

namespace gflow {

enum class FailureReason {
  None,
  NonzeroExit,
  SpawnFailure,
  Timeout,
  DiskQuotaExceeded,
  OutOfMemory,
  DiskFull,
  InjectedFault,
  LeaseExpired,
  WorkerLost,
  MissingOutput,
};

std::string_view to_string(FailureReason reason);
FailureReason parse_failure_reason(std::string_view text);

// What one step did on one attempt, with the machine and disk it ran on.
struct StepObservation {
  std::string rule;
  Rational duration_hours;
  Rational peak_cpu_cores;
  Rational peak_mem_gb;
  Rational peak_disk_gb;
  int exit_status = 0;
  FailureReason failure = FailureReason::None;
  std::string detail;
  std::string machine;
  int disk_gb = 0;
  DiskClass disk_class = DiskClass::Balanced;

  bool succeeded() const { return failure == FailureReason::None; }
  bool operator==(const StepObservation&) const = default;
};

nlohmann::ordered_json observation_to_json(const StepObservation& obs);
StepObservation observation_from_json(const nlohmann::json& doc);

struct ExecutionOutcome {
  std::string sample_id;
  std::vector<StepObservation> steps;
  bool succeeded = false;
  // Set on failure: the first failing step.
  std::optional<std::string> failed_step;
  FailureReason reason = FailureReason::None;
  std::string detail;

  Rational total_hours() const;
};

}  // namespace gflow
