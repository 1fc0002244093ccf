#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gflow/catalog.hpp"
#include "gflow/execution.hpp"
#include "gflow/rational.hpp"
#include "gflow/workflow.hpp"

namespace gflow {

// A fixed value or a seeded distribution. Drawn values are clamped at zero.
struct Distribution {
  enum class Kind { Fixed, Uniform, Normal, LogNormal };
  Kind kind = Kind::Fixed;
  Rational value;      // Fixed
  double a = 0, b = 0;  // uniform(low, high), normal(mean, sd), lognormal(mu, sigma)

  bool degenerate() const;
};

struct RuleWorkload {
  Distribution duration_hours;
  Distribution peak_cpu;
  Distribution peak_mem_gb;
  Distribution peak_disk_gb;
};

// Fixed values for one (sample, rule); unset fields fall back to the rule entry.
struct WorkloadOverride {
  std::string sample;
  std::string rule;
  std::optional<Rational> duration_hours;
  std::optional<Rational> peak_cpu;
  std::optional<Rational> peak_mem_gb;
  std::optional<Rational> peak_disk_gb;
};

struct InjectedFailure {
  std::string sample;
  std::set<int> attempts;
  std::string step;  // empty: the task's first step
};

struct WorkloadSpec {
  std::uint64_t seed = 0;
  // Draws are keyed by attempt too, so retries see fresh values.
  bool vary_by_attempt = false;
  std::map<std::string, RuleWorkload> rules;
  std::vector<WorkloadOverride> overrides;
  std::vector<InjectedFailure> failures;
  // Seeded Bernoulli fault per step; 0 disables.
  double failure_rate = 0;
};

// Throws Error(ParseError) on a malformed or negative entry.
WorkloadSpec parse_workload(const nlohmann::json& doc);
WorkloadSpec load_workload(const std::filesystem::path& path);
nlohmann::ordered_json workload_to_json(const WorkloadSpec& spec);

struct StepDraw {
  Rational duration_hours;
  Rational peak_cpu;
  Rational peak_mem_gb;
  Rational peak_disk_gb;
};

// Deterministic in (seed, sample, rule, attempt when vary_by_attempt). Throws Error(IncompleteSpec).
StepDraw draw_step(const WorkloadSpec& spec, const std::string& sample, const std::string& rule, int attempt);

struct VirtualClock {
  Rational now;

  void advance(const Rational& hours) { now += hours; }
};

// One simulated step on `machine`. Failure checks in order: memory, disk, injected, random.
StepObservation simulate_step(const WorkloadSpec& spec, const std::string& sample, const StepSpec& step,
                              const MachineType& machine, int attempt, bool first_step);

// Runs the plan's steps in order on their assigned machines, stopping at the first failure.
// Throws Error(IncompleteSpec) if a rule has no workload entry.
ExecutionOutcome run_task_sim(const TaskPlan& plan, const WorkloadSpec& spec, VirtualClock& clock,
                              const MachineCatalog& catalog, int attempt);

// Same, with every step on `machine`.
ExecutionOutcome run_task_sim(const TaskPlan& plan, const WorkloadSpec& spec, VirtualClock& clock,
                              const MachineType& machine, int attempt);

}  // namespace gflow
