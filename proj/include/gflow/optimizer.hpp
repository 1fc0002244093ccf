#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gflow/catalog.hpp"
#include "gflow/orchestrator.hpp"
#include "gflow/rational.hpp"
#include "gflow/scheduler.hpp"
#include "gflow/workflow.hpp"

namespace gflow {

inline const Rational kDefaultHeadroom{11, 10};
inline constexpr int kDefaultTestSamples = 3;
inline constexpr int kDiskGranularityGb = 10;

struct RuleProfile {
  Rational peak_cpu;
  Rational peak_mem_gb;
  Rational peak_disk_gb;
  Rational mean_duration_hours;
  std::size_t samples = 0;
  std::optional<DiskClass> requested_disk_class;
};

struct ResourceProfile {
  std::map<std::string, RuleProfile> rules;
};

// Max peaks and mean duration over successful step observations, per rule of `workflow`.
// Throws Error(AllTestTasksFailed) when some rule has no successful observation.
ResourceProfile build_profile(const Workflow& workflow, const std::vector<StepObservation>& observations);
ResourceProfile build_profile(const Workflow& workflow, const std::map<std::string, TaskRecord>& records);

// The workflow's testsamplesize, else `engine_default`, clamped to the sample count. Sets `clamped`.
int test_sample_count(const Workflow& workflow, int engine_default, std::size_t sample_count, bool* clamped = nullptr);

struct TestRun {
  ResourceProfile profile;
  RunReport report;
  std::vector<std::string> completed;  // samples that succeeded in the test run
};

// Runs the first `n_test` samples of `job` (clamped) and profiles them. `job.sample_ids` is cut down here.
TestRun profile(Job job, int n_test, StepExecutor& executor, std::unique_ptr<EventLog> log = nullptr);

struct RuleRecommendation {
  std::string machine;
  int disk_gb = 0;
  DiskClass disk_class = DiskClass::Balanced;

  bool operator==(const RuleRecommendation&) const = default;
};

struct Recommendation {
  std::map<std::string, RuleRecommendation> rules;
  Rational headroom = kDefaultHeadroom;

  bool operator==(const Recommendation&) const = default;
};

// Per rule: requirement = peaks x headroom, cheapest feasible machine, disk rounded up to 10 GB.
// Throws Error(NoFeasibleMachine) naming the rule and the binding constraint, InvalidArgument if headroom < 1.
Recommendation recommend(const ResourceProfile& profile, const MachineCatalog& catalog,
                         const Rational& headroom = kDefaultHeadroom);

// ceil(required / 10) x 10, at least 10.
int round_disk_gb(const Rational& required_gb);

nlohmann::ordered_json recommendation_to_json(const Recommendation& rec);
// Validates machine names against the catalog and disk sizes. Throws Error(ParseError).
Recommendation recommendation_from_json(const nlohmann::json& doc, const MachineCatalog& catalog);

// Copy of `workflow` whose listed rules carry the recommended resources. Throws InvalidArgument on an unknown rule.
Workflow apply_recommendation(const Workflow& workflow, const Recommendation& rec);

struct CostBreakdown {
  Rational machine;
  Rational disk;
  Rational total() const { return machine + disk; }
};

// price x hours + disk price x disk_gb x hours, exact. Throws UnknownDiskClass, InvalidArgument (hours < 0).
CostBreakdown estimate_task_cost(const MachineType& machine, int disk_gb, DiskClass disk_class, const Rational& hours,
                                 const MachineCatalog& catalog);
CostBreakdown estimate_step_cost(const StepObservation& obs, const MachineCatalog& catalog);

// (1 - optimized / baseline) x 100. Throws NonpositiveBaseline.
Rational compare_costs(const Rational& baseline, const Rational& optimized);
// Nearest whole percent, e.g. "77%".
std::string render_percent(const Rational& percent);

struct SampleCost {
  std::string sample_id;
  int attempts = 0;
  Rational hours;
  Rational machine_cost;
  Rational disk_cost;
  Rational total() const { return machine_cost + disk_cost; }
};

struct CostComparison {
  Rational baseline;
  Rational optimized;
  Rational reduction_percent;
};

struct CostReport {
  std::string currency;
  std::vector<SampleCost> samples;
  Rational aggregate;
  Rational mean_per_sample;
  std::optional<CostComparison> comparison;
};

// Bills every step of every attempt, failed ones included. Throws MissingDuration for a task that has not finished.
CostReport job_cost_report(const std::map<std::string, TaskRecord>& records, const std::vector<std::string>& order,
                           const MachineCatalog& catalog);
CostReport job_cost_report(const Orchestrator& orch, const MachineCatalog& catalog);

// Fills `report.comparison` against a baseline per-sample cost.
void attach_baseline(CostReport& report, const Rational& baseline_per_sample);

// Half-up cents with the catalog's currency, e.g. "$1.72".
std::string render_money(const Rational& amount, const std::string& currency);
// Exact decimal when the value terminates within `max_digits`, else rounded to that many digits.
std::string to_decimal_string(const Rational& value, int max_digits = 12);

std::string render_cost_table(const CostReport& report);
nlohmann::ordered_json cost_report_to_json(const CostReport& report);
CostReport cost_report_from_json(const nlohmann::json& doc);

}  // namespace gflow
