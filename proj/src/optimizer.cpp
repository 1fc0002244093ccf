#include "gflow/optimizer.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "gflow/error.hpp"

namespace gflow {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Profiling

ResourceProfile build_profile(const Workflow& workflow, const std::vector<StepObservation>& observations) {
  ResourceProfile profile;
  std::map<std::string, Rational> total_hours;
  for (const auto& obs : observations) {
    if (!obs.succeeded()) continue;
    auto& p = profile.rules[obs.rule];
    if (p.samples == 0) {
      p.peak_cpu = obs.peak_cpu_cores;
      p.peak_mem_gb = obs.peak_mem_gb;
      p.peak_disk_gb = obs.peak_disk_gb;
    } else {
      p.peak_cpu = std::max(p.peak_cpu, obs.peak_cpu_cores);
      p.peak_mem_gb = std::max(p.peak_mem_gb, obs.peak_mem_gb);
      p.peak_disk_gb = std::max(p.peak_disk_gb, obs.peak_disk_gb);
    }
    ++p.samples;
    total_hours[obs.rule] += obs.duration_hours;
  }
  for (const auto& rule : workflow.rules) {
    auto it = profile.rules.find(rule.name);
    if (it == profile.rules.end()) {
      throw Error(Errc::AllTestTasksFailed,
                  "no test sample completed rule '" + rule.name + "'; try a larger default machine or disk");
    }
    it->second.mean_duration_hours = total_hours[rule.name] / it->second.samples;
    if (rule.resources) it->second.requested_disk_class = rule.resources->disk_class;
  }
  // Observations for rules the workflow no longer has carry no weight.
  for (auto it = profile.rules.begin(); it != profile.rules.end();) {
    it = workflow.find_rule(it->first) ? std::next(it) : profile.rules.erase(it);
  }
  return profile;
}

ResourceProfile build_profile(const Workflow& workflow, const std::map<std::string, TaskRecord>& records) {
  std::vector<StepObservation> observations;
  for (const auto& [_, rec] : records) {
    for (const auto& attempt : rec.history) {
      observations.insert(observations.end(), attempt.steps.begin(), attempt.steps.end());
    }
  }
  return build_profile(workflow, observations);
}

int test_sample_count(const Workflow& workflow, int engine_default, std::size_t sample_count, bool* clamped) {
  int n = workflow.testsamplesize.value_or(engine_default);
  if (n < 1) throw Error(Errc::InvalidArgument, "test sample count must be >= 1");
  const bool clamp = static_cast<std::size_t>(n) > sample_count;
  if (clamp) n = static_cast<int>(sample_count);
  if (clamped) *clamped = clamp;
  return n;
}

TestRun profile(Job job, int n_test, StepExecutor& executor, std::unique_ptr<EventLog> log) {
  if (n_test < 1) throw Error(Errc::InvalidArgument, "test sample count must be >= 1");
  if (static_cast<std::size_t>(n_test) < job.sample_ids.size()) job.sample_ids.resize(n_test);
  const Workflow workflow = job.workflow;
  Orchestrator orch = Orchestrator::submit(std::move(job), std::move(log), executor.now());
  TestRun run;
  run.report = run_job(orch, executor);
  for (const auto& sample : orch.job().sample_ids) {
    if (orch.record(sample).state == TaskState::Succeeded) run.completed.push_back(sample);
  }
  run.profile = build_profile(workflow, orch.records());
  return run;
}

// ---------------------------------------------------------------------------
// Recommendation

int round_disk_gb(const Rational& required_gb) {
  const BigInt tens = gflow::ceil(required_gb / kDiskGranularityGb);
  const BigInt gb = std::max(BigInt(kMinDiskGb), BigInt(tens * kDiskGranularityGb));
  return gb.convert_to<int>();
}

Recommendation recommend(const ResourceProfile& profile, const MachineCatalog& catalog, const Rational& headroom) {
  if (headroom < 1) throw Error(Errc::InvalidArgument, "headroom must be >= 1");
  Recommendation rec;
  rec.headroom = headroom;
  for (const auto& [rule, p] : profile.rules) {
    const Rational cpu = p.peak_cpu * headroom;
    const Rational mem = p.peak_mem_gb * headroom;
    const Rational disk = p.peak_disk_gb * headroom;
    const auto feasible = feasible_machines(catalog, cpu, mem);
    if (feasible.empty()) {
      const auto& ms = catalog.machines();
      const bool mem_ok = std::any_of(ms.begin(), ms.end(), [&](const MachineType& m) { return m.mem_gb >= mem; });
      const bool cpu_ok = std::any_of(ms.begin(), ms.end(), [&](const MachineType& m) { return m.vcpu >= cpu; });
      const std::string constraint = !mem_ok ? "memory" : !cpu_ok ? "cpu" : "cpu and memory together";
      throw Error(Errc::NoFeasibleMachine, "rule '" + rule + "': no machine satisfies " + constraint + " (need " +
                                               to_fixed(cpu, 3) + " vCPU, " + to_fixed(mem, 3) + " GB)");
    }
    rec.rules[rule] = RuleRecommendation{feasible.front().name, round_disk_gb(disk),
                                         p.requested_disk_class.value_or(DiskClass::Balanced)};
  }
  return rec;
}

ordered_json recommendation_to_json(const Recommendation& rec) {
  ordered_json doc;
  doc["headroom"] = to_double(rec.headroom);
  auto& rules = doc["rules"] = ordered_json::object();
  for (const auto& [rule, r] : rec.rules) {
    rules[rule] = {{"machine", r.machine}, {"disk_gb", r.disk_gb}, {"disk_class", std::string(to_string(r.disk_class))}};
  }
  return doc;
}

Recommendation recommendation_from_json(const json& doc, const MachineCatalog& catalog) {
  auto bad = [](const std::string& message) -> Error { return Error(Errc::ParseError, "optparams: " + message); };
  if (!doc.is_object() || !doc.contains("rules") || !doc.at("rules").is_object()) throw bad("missing 'rules' object");
  Recommendation rec;
  try {
    if (doc.contains("headroom")) rec.headroom = rational_from_json(doc.at("headroom"));
  } catch (const Error& e) {
    throw bad("headroom: " + e.detail());
  }
  if (rec.headroom < 1) throw bad("headroom must be >= 1");
  for (const auto& [rule, entry] : doc.at("rules").items()) {
    if (!entry.is_object()) throw bad("rule '" + rule + "' must be an object");
    RuleRecommendation r;
    if (!entry.contains("machine") || !entry.at("machine").is_string()) throw bad("rule '" + rule + "' needs a machine");
    r.machine = entry.at("machine").get<std::string>();
    if (!catalog.find(r.machine)) throw bad("rule '" + rule + "': machine '" + r.machine + "' is not in the catalog");
    if (!entry.contains("disk_gb") || !entry.at("disk_gb").is_number_integer()) {
      throw bad("rule '" + rule + "' needs an integer disk_gb");
    }
    r.disk_gb = entry.at("disk_gb").get<int>();
    if (r.disk_gb < kMinDiskGb) throw bad("rule '" + rule + "': disk_gb must be >= " + std::to_string(kMinDiskGb));
    const auto cls = parse_disk_class(entry.value("disk_class", std::string("balanced")));
    if (!cls) throw bad("rule '" + rule + "': unknown disk_class");
    r.disk_class = *cls;
    rec.rules[rule] = r;
  }
  return rec;
}

Workflow apply_recommendation(const Workflow& workflow, const Recommendation& rec) {
  Workflow out = workflow;
  for (const auto& [rule, r] : rec.rules) {
    auto it = std::find_if(out.rules.begin(), out.rules.end(), [&](const Rule& x) { return x.name == rule; });
    if (it == out.rules.end()) throw Error(Errc::InvalidArgument, "optparams names unknown rule '" + rule + "'");
    it->resources = ResourceRequest{r.machine, r.disk_gb, r.disk_class};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Costs

CostBreakdown estimate_task_cost(const MachineType& machine, int disk_gb, DiskClass disk_class, const Rational& hours,
                                 const MachineCatalog& catalog) {
  if (hours < 0) throw Error(Errc::InvalidArgument, "hours must be >= 0");
  return CostBreakdown{machine.price_per_hour * hours, catalog.disk_price(disk_class) * disk_gb * hours};
}

CostBreakdown estimate_step_cost(const StepObservation& obs, const MachineCatalog& catalog) {
  return estimate_task_cost(catalog.at(obs.machine), obs.disk_gb, obs.disk_class, obs.duration_hours, catalog);
}

Rational compare_costs(const Rational& baseline, const Rational& optimized) {
  if (baseline <= 0) throw Error(Errc::NonpositiveBaseline, "baseline cost must be positive");
  return (1 - optimized / baseline) * 100;
}

std::string render_percent(const Rational& percent) { return round_half_up(percent).str() + "%"; }

CostReport job_cost_report(const std::map<std::string, TaskRecord>& records, const std::vector<std::string>& order,
                           const MachineCatalog& catalog) {
  CostReport report;
  report.currency = catalog.currency();
  for (const auto& sample : order) {
    auto it = records.find(sample);
    if (it == records.end()) throw Error(Errc::UnknownSample, "no record for sample '" + sample + "'");
    const TaskRecord& rec = it->second;
    if (rec.state != TaskState::Succeeded && rec.state != TaskState::Exhausted) {
      throw Error(Errc::MissingDuration, "sample '" + sample + "' has not finished (" +
                                             std::string(to_string(rec.state)) + ")");
    }
    SampleCost cost;
    cost.sample_id = sample;
    cost.attempts = rec.attempts;
    for (const auto& attempt : rec.history) {
      if (attempt.result == TaskState::Succeeded && attempt.steps.empty()) {
        throw Error(Errc::MissingDuration, "sample '" + sample + "' succeeded without step durations");
      }
      for (const auto& obs : attempt.steps) {
        const CostBreakdown c = estimate_step_cost(obs, catalog);
        cost.hours += obs.duration_hours;
        cost.machine_cost += c.machine;
        cost.disk_cost += c.disk;
      }
    }
    report.aggregate += cost.total();
    report.samples.push_back(std::move(cost));
  }
  if (!report.samples.empty()) report.mean_per_sample = report.aggregate / report.samples.size();
  return report;
}

CostReport job_cost_report(const Orchestrator& orch, const MachineCatalog& catalog) {
  return job_cost_report(orch.records(), orch.job().sample_ids, catalog);
}

void attach_baseline(CostReport& report, const Rational& baseline_per_sample) {
  report.comparison = CostComparison{baseline_per_sample, report.mean_per_sample,
                                     compare_costs(baseline_per_sample, report.mean_per_sample)};
}

std::string to_decimal_string(const Rational& value, int max_digits) {
  BigInt den = boost::multiprecision::denominator(value);
  int twos = 0, fives = 0;
  while (den % 2 == 0) den /= 2, ++twos;
  while (den % 5 == 0) den /= 5, ++fives;
  const int digits = std::max(twos, fives);
  if (den == 1 && digits <= max_digits) return to_fixed(value, digits);
  std::string s = to_fixed(value, max_digits);
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  return s;
}

std::string render_money(const Rational& amount, const std::string& currency) {
  const std::string prefix = currency == "USD" ? "$" : currency.empty() ? "" : currency + " ";
  std::string digits = to_fixed(amount, 2);
  if (!digits.empty() && digits.front() == '-') return "-" + prefix + digits.substr(1);
  return prefix + digits;
}

std::string render_cost_table(const CostReport& report) {
  std::ostringstream out;
  const auto money = [&](const Rational& r) { return render_money(r, report.currency); };
  std::size_t width = 6;
  for (const auto& s : report.samples) width = std::max(width, s.sample_id.size());
  out << std::left << std::setw(static_cast<int>(width) + 2) << "sample" << std::right << std::setw(8) << "attempts"
      << std::setw(10) << "hours" << std::setw(12) << "machine" << std::setw(12) << "disk" << std::setw(12) << "total"
      << "\n";
  for (const auto& s : report.samples) {
    out << std::left << std::setw(static_cast<int>(width) + 2) << s.sample_id << std::right << std::setw(8)
        << s.attempts << std::setw(10) << to_fixed(s.hours, 2) << std::setw(12) << money(s.machine_cost)
        << std::setw(12) << money(s.disk_cost) << std::setw(12) << money(s.total()) << "\n";
  }
  out << "samples: " << report.samples.size() << "\n";
  out << "aggregate: " << money(report.aggregate) << "\n";
  out << "mean per sample: " << money(report.mean_per_sample) << "\n";
  if (report.comparison) {
    out << "baseline per sample: " << money(report.comparison->baseline) << "\n";
    out << "optimized per sample: " << money(report.comparison->optimized) << "\n";
    out << "reduction: " << render_percent(report.comparison->reduction_percent) << "\n";
  }
  return out.str();
}

ordered_json cost_report_to_json(const CostReport& report) {
  ordered_json doc;
  doc["currency"] = report.currency;
  auto& samples = doc["samples"] = ordered_json::array();
  for (const auto& s : report.samples) {
    samples.push_back({{"sample", s.sample_id},
                       {"attempts", s.attempts},
                       {"hours", to_exact_string(s.hours)},
                       {"machine_cost", to_exact_string(s.machine_cost)},
                       {"disk_cost", to_exact_string(s.disk_cost)},
                       {"total", to_exact_string(s.total())}});
  }
  doc["aggregate"] = to_exact_string(report.aggregate);
  doc["mean_per_sample"] = to_exact_string(report.mean_per_sample);
  doc["aggregate_display"] = render_money(report.aggregate, report.currency);
  doc["mean_per_sample_display"] = render_money(report.mean_per_sample, report.currency);
  if (report.comparison) {
    doc["comparison"] = {{"baseline", to_exact_string(report.comparison->baseline)},
                         {"optimized", to_exact_string(report.comparison->optimized)},
                         {"reduction_percent", to_exact_string(report.comparison->reduction_percent)},
                         {"reduction_display", render_percent(report.comparison->reduction_percent)}};
  }
  return doc;
}

CostReport cost_report_from_json(const json& doc) {
  CostReport report;
  try {
    report.currency = doc.value("currency", std::string());
    for (const auto& s : doc.at("samples")) {
      SampleCost c;
      c.sample_id = s.at("sample").get<std::string>();
      c.attempts = s.at("attempts").get<int>();
      c.hours = rational_from_json(s.at("hours"));
      c.machine_cost = rational_from_json(s.at("machine_cost"));
      c.disk_cost = rational_from_json(s.at("disk_cost"));
      report.samples.push_back(std::move(c));
    }
    report.aggregate = rational_from_json(doc.at("aggregate"));
    report.mean_per_sample = rational_from_json(doc.at("mean_per_sample"));
    if (doc.contains("comparison")) {
      const auto& c = doc.at("comparison");
      report.comparison = CostComparison{rational_from_json(c.at("baseline")), rational_from_json(c.at("optimized")),
                                         rational_from_json(c.at("reduction_percent"))};
    }
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("cost report: ") + e.what());
  }
  return report;
}

}  // namespace gflow
