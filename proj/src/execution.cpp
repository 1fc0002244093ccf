#include "gflow/execution.hpp"

#include "gflow/error.hpp"

namespace gflow {

std::string_view to_string(FailureReason reason) {
  switch (reason) {
    case FailureReason::None: return "None";
    case FailureReason::NonzeroExit: return "NonzeroExit";
    case FailureReason::SpawnFailure: return "SpawnFailure";
    case FailureReason::Timeout: return "Timeout";
    case FailureReason::DiskQuotaExceeded: return "DiskQuotaExceeded";
    case FailureReason::OutOfMemory: return "OutOfMemory";
    case FailureReason::DiskFull: return "DiskFull";
    case FailureReason::InjectedFault: return "InjectedFault";
    case FailureReason::LeaseExpired: return "LeaseExpired";
    case FailureReason::WorkerLost: return "WorkerLost";
    case FailureReason::MissingOutput: return "MissingOutput";
  }
  return "None";
}

FailureReason parse_failure_reason(std::string_view text) {
  for (auto r : {FailureReason::None, FailureReason::NonzeroExit, FailureReason::SpawnFailure, FailureReason::Timeout,
                 FailureReason::DiskQuotaExceeded, FailureReason::OutOfMemory, FailureReason::DiskFull,
                 FailureReason::InjectedFault, FailureReason::LeaseExpired, FailureReason::WorkerLost,
                 FailureReason::MissingOutput}) {
    if (to_string(r) == text) return r;
  }
  throw Error(Errc::ParseError, "unknown failure reason '" + std::string(text) + "'");
}

nlohmann::ordered_json observation_to_json(const StepObservation& obs) {
  nlohmann::ordered_json doc;
  doc["rule"] = obs.rule;
  doc["duration_hours"] = to_exact_string(obs.duration_hours);
  doc["peak_cpu_cores"] = to_exact_string(obs.peak_cpu_cores);
  doc["peak_mem_gb"] = to_exact_string(obs.peak_mem_gb);
  doc["peak_disk_gb"] = to_exact_string(obs.peak_disk_gb);
  doc["exit_status"] = obs.exit_status;
  doc["failure"] = std::string(to_string(obs.failure));
  if (!obs.detail.empty()) doc["detail"] = obs.detail;
  doc["machine"] = obs.machine;
  doc["disk_gb"] = obs.disk_gb;
  doc["disk_class"] = std::string(to_string(obs.disk_class));
  return doc;
}

StepObservation observation_from_json(const nlohmann::json& doc) {
  StepObservation obs;
  obs.rule = doc.at("rule").get<std::string>();
  obs.duration_hours = rational_from_json(doc.at("duration_hours"));
  obs.peak_cpu_cores = rational_from_json(doc.at("peak_cpu_cores"));
  obs.peak_mem_gb = rational_from_json(doc.at("peak_mem_gb"));
  obs.peak_disk_gb = rational_from_json(doc.at("peak_disk_gb"));
  obs.exit_status = doc.value("exit_status", 0);
  obs.failure = parse_failure_reason(doc.value("failure", std::string("None")));
  obs.detail = doc.value("detail", std::string());
  obs.machine = doc.value("machine", std::string());
  obs.disk_gb = doc.value("disk_gb", 0);
  auto cls = parse_disk_class(doc.value("disk_class", std::string("balanced")));
  if (!cls) throw Error(Errc::ParseError, "bad disk_class in step observation");
  obs.disk_class = *cls;
  return obs;
}

Rational ExecutionOutcome::total_hours() const {
  Rational total = 0;
  for (const auto& s : steps) total += s.duration_hours;
  return total;
}

}  // namespace gflow
