#include "gflow/workload.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "gflow/error.hpp"

namespace gflow {

using nlohmann::json;

namespace {

constexpr const char* kFields[] = {"duration_hours", "peak_cpu", "peak_mem_gb", "peak_disk_gb"};

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Independent stream per key; uniforms lie strictly inside (0, 1).
class KeyedStream {
 public:
  KeyedStream(std::uint64_t seed, std::string_view key) : state_(fnv1a(key) ^ (seed * 0xD1B54A32D192ED03ull)) {}
  double uniform() { return (static_cast<double>(splitmix(state_) >> 11) + 0.5) * 0x1.0p-53; }
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::uint64_t state_;
};

std::string draw_key(const std::string& sample, const std::string& rule, std::string_view field,
                     int attempt) {
  std::string key = sample;
  key += '\x1f';
  key += rule;
  key += '\x1f';
  key += field;
  if (attempt > 0) {
    key += '\x1f';
    key += std::to_string(attempt);
  }
  return key;
}

Rational quantize(double value, long long unit, long long minimum) {
  if (!std::isfinite(value) || value < 0) value = 0;
  long long ticks = std::llround(value * static_cast<double>(unit));
  if (ticks < minimum) ticks = minimum;
  return Rational(ticks, unit);
}

Rational draw(const Distribution& d, KeyedStream stream, bool is_duration) {
  if (d.kind == Distribution::Kind::Fixed) return d.value;
  double x = 0;
  switch (d.kind) {
    case Distribution::Kind::Uniform: x = d.a + (d.b - d.a) * stream.uniform(); break;
    case Distribution::Kind::Normal: x = d.a + d.b * stream.normal(); break;
    case Distribution::Kind::LogNormal: x = std::exp(d.a + d.b * stream.normal()); break;
    case Distribution::Kind::Fixed: break;
  }
  // Durations to whole seconds (at least one), peaks to 1/1000 of a unit.
  return is_duration ? quantize(x, 3600, 1) : quantize(x, 1000, 0);
}

[[noreturn]] void bad(const std::string& where, const std::string& message) {
  throw Error(Errc::ParseError, "workload " + where + ": " + message);
}

double number(const json& doc, const char* key, const std::string& where) {
  if (!doc.contains(key) || !doc.at(key).is_number()) bad(where, std::string("missing numeric '") + key + "'");
  return doc.at(key).get<double>();
}

Rational nonnegative(const json& value, const std::string& where) {
  Rational r;
  try {
    r = rational_from_json(value);
  } catch (const Error& e) {
    bad(where, e.detail());
  }
  if (r < 0) bad(where, "negative value");
  return r;
}

Distribution parse_distribution(const json& doc, const std::string& where, bool is_duration) {
  Distribution d;
  if (!doc.is_object()) {
    d.value = nonnegative(doc, where);
    if (is_duration && d.value <= 0) bad(where, "duration must be positive");
    return d;
  }
  const std::string kind = doc.value("dist", std::string("fixed"));
  if (kind == "fixed") {
    if (!doc.contains("value")) bad(where, "missing 'value'");
    return parse_distribution(doc.at("value"), where, is_duration);
  }
  if (kind == "uniform") {
    d.kind = Distribution::Kind::Uniform;
    d.a = number(doc, "low", where);
    d.b = number(doc, "high", where);
    if (d.a < 0 || d.b < d.a) bad(where, "uniform needs 0 <= low <= high");
  } else if (kind == "normal") {
    d.kind = Distribution::Kind::Normal;
    d.a = number(doc, "mean", where);
    d.b = number(doc, "sd", where);
    if (d.a < 0 || d.b < 0) bad(where, "normal needs mean >= 0 and sd >= 0");
  } else if (kind == "lognormal") {
    d.kind = Distribution::Kind::LogNormal;
    d.a = number(doc, "mu", where);
    d.b = number(doc, "sigma", where);
    if (d.b < 0) bad(where, "lognormal needs sigma >= 0");
  } else {
    bad(where, "unknown distribution '" + kind + "'");
  }
  return d;
}

json distribution_to_json(const Distribution& d) {
  switch (d.kind) {
    case Distribution::Kind::Fixed: return to_exact_string(d.value);
    case Distribution::Kind::Uniform: return json{{"dist", "uniform"}, {"low", d.a}, {"high", d.b}};
    case Distribution::Kind::Normal: return json{{"dist", "normal"}, {"mean", d.a}, {"sd", d.b}};
    case Distribution::Kind::LogNormal: return json{{"dist", "lognormal"}, {"mu", d.a}, {"sigma", d.b}};
  }
  return nullptr;
}

const WorkloadOverride* find_override(const WorkloadSpec& spec, const std::string& sample, const std::string& rule) {
  for (const auto& o : spec.overrides) {
    if (o.sample == sample && o.rule == rule) return &o;
  }
  return nullptr;
}

}  // namespace

bool Distribution::degenerate() const {
  switch (kind) {
    case Kind::Fixed: return true;
    case Kind::Uniform: return a == b;
    case Kind::Normal:
    case Kind::LogNormal: return b == 0;
  }
  return true;
}

WorkloadSpec parse_workload(const json& doc) {
  if (!doc.is_object()) bad("document", "expected an object");
  WorkloadSpec spec;
  if (doc.contains("seed")) {
    const auto& seed = doc.at("seed");
    if (!seed.is_number_integer() || seed.get<long long>() < 0) bad("seed", "expected a nonnegative integer");
    spec.seed = seed.get<std::uint64_t>();
  }
  spec.vary_by_attempt = doc.value("vary_by_attempt", false);
  if (doc.contains("failure_rate")) {
    spec.failure_rate = doc.at("failure_rate").get<double>();
    if (spec.failure_rate < 0 || spec.failure_rate > 1) bad("failure_rate", "must lie in [0, 1]");
  }
  const json rules = doc.value("rules", json::object());
  for (const auto& [rule, entry] : rules.items()) {
    RuleWorkload w;
    Distribution* slots[] = {&w.duration_hours, &w.peak_cpu, &w.peak_mem_gb, &w.peak_disk_gb};
    for (int i = 0; i < 4; ++i) {
      const std::string where = "rule '" + rule + "' " + kFields[i];
      if (!entry.contains(kFields[i])) bad(where, "missing");
      *slots[i] = parse_distribution(entry.at(kFields[i]), where, i == 0);
    }
    spec.rules[rule] = w;
  }
  for (const auto& entry : doc.value("overrides", json::array())) {
    WorkloadOverride o;
    if (!entry.contains("sample") || !entry.contains("rule")) bad("override", "needs 'sample' and 'rule'");
    o.sample = entry.at("sample").get<std::string>();
    o.rule = entry.at("rule").get<std::string>();
    std::optional<Rational>* slots[] = {&o.duration_hours, &o.peak_cpu, &o.peak_mem_gb, &o.peak_disk_gb};
    for (int i = 0; i < 4; ++i) {
      if (!entry.contains(kFields[i])) continue;
      const std::string where = "override " + o.sample + "/" + o.rule + " " + kFields[i];
      *slots[i] = nonnegative(entry.at(kFields[i]), where);
      if (i == 0 && **slots[i] <= 0) bad(where, "duration must be positive");
    }
    spec.overrides.push_back(std::move(o));
  }
  for (const auto& entry : doc.value("failures", json::array())) {
    InjectedFailure f;
    if (!entry.contains("sample")) bad("failure", "needs 'sample'");
    f.sample = entry.at("sample").get<std::string>();
    for (const auto& a : entry.value("attempts", json::array())) {
      const int attempt = a.get<int>();
      if (attempt < 1) bad("failure " + f.sample, "attempts are numbered from 1");
      f.attempts.insert(attempt);
    }
    f.step = entry.value("step", std::string());
    spec.failures.push_back(std::move(f));
  }
  return spec;
}

WorkloadSpec load_workload(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot read workload " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
  return parse_workload(doc);
}

nlohmann::ordered_json workload_to_json(const WorkloadSpec& spec) {
  nlohmann::ordered_json doc;
  doc["seed"] = spec.seed;
  doc["vary_by_attempt"] = spec.vary_by_attempt;
  doc["failure_rate"] = spec.failure_rate;
  auto& rules = doc["rules"] = nlohmann::ordered_json::object();
  for (const auto& [rule, w] : spec.rules) {
    rules[rule] = {{"duration_hours", distribution_to_json(w.duration_hours)},
                   {"peak_cpu", distribution_to_json(w.peak_cpu)},
                   {"peak_mem_gb", distribution_to_json(w.peak_mem_gb)},
                   {"peak_disk_gb", distribution_to_json(w.peak_disk_gb)}};
  }
  auto& overrides = doc["overrides"] = nlohmann::ordered_json::array();
  for (const auto& o : spec.overrides) {
    nlohmann::ordered_json e{{"sample", o.sample}, {"rule", o.rule}};
    const std::optional<Rational>* slots[] = {&o.duration_hours, &o.peak_cpu, &o.peak_mem_gb, &o.peak_disk_gb};
    for (int i = 0; i < 4; ++i) {
      if (*slots[i]) e[kFields[i]] = to_exact_string(**slots[i]);
    }
    overrides.push_back(std::move(e));
  }
  auto& failures = doc["failures"] = nlohmann::ordered_json::array();
  for (const auto& f : spec.failures) {
    nlohmann::ordered_json e{{"sample", f.sample}, {"attempts", f.attempts}};
    if (!f.step.empty()) e["step"] = f.step;
    failures.push_back(std::move(e));
  }
  return doc;
}

StepDraw draw_step(const WorkloadSpec& spec, const std::string& sample, const std::string& rule, int attempt) {
  const WorkloadOverride* o = find_override(spec, sample, rule);
  auto rit = spec.rules.find(rule);
  const RuleWorkload* w = rit == spec.rules.end() ? nullptr : &rit->second;
  const int key_attempt = spec.vary_by_attempt ? attempt : 0;  // 0: not part of the key

  const std::optional<Rational> fixed[] = {o ? o->duration_hours : std::nullopt, o ? o->peak_cpu : std::nullopt,
                                           o ? o->peak_mem_gb : std::nullopt, o ? o->peak_disk_gb : std::nullopt};
  Rational out[4];
  for (int i = 0; i < 4; ++i) {
    if (fixed[i]) {
      out[i] = *fixed[i];
      continue;
    }
    if (!w) {
      throw Error(Errc::IncompleteSpec, "workload has no " + std::string(kFields[i]) + " for rule '" + rule +
                                            "' (sample '" + sample + "')");
    }
    const Distribution* dists[] = {&w->duration_hours, &w->peak_cpu, &w->peak_mem_gb, &w->peak_disk_gb};
    out[i] = draw(*dists[i], KeyedStream(spec.seed, draw_key(sample, rule, kFields[i], key_attempt)), i == 0);
  }
  return StepDraw{out[0], out[1], out[2], out[3]};
}

StepObservation simulate_step(const WorkloadSpec& spec, const std::string& sample, const StepSpec& step,
                              const MachineType& machine, int attempt, bool first_step) {
  const StepDraw d = draw_step(spec, sample, step.rule_name, attempt);
  StepObservation obs;
  obs.rule = step.rule_name;
  obs.duration_hours = d.duration_hours;
  obs.peak_cpu_cores = d.peak_cpu;
  obs.peak_mem_gb = d.peak_mem_gb;
  obs.peak_disk_gb = d.peak_disk_gb;
  obs.machine = machine.name;
  obs.disk_gb = step.resources.disk_gb.value_or(0);
  obs.disk_class = step.resources.disk_class.value_or(DiskClass::Balanced);

  if (d.peak_mem_gb > machine.mem_gb) {
    obs.failure = FailureReason::OutOfMemory;
    obs.detail = "peak " + to_fixed(d.peak_mem_gb, 3) + " GB exceeds " + to_fixed(machine.mem_gb, 3) + " GB on " +
                 machine.name;
  } else if (d.peak_disk_gb > obs.disk_gb) {
    obs.failure = FailureReason::DiskFull;
    obs.detail = "peak " + to_fixed(d.peak_disk_gb, 3) + " GB exceeds the " + std::to_string(obs.disk_gb) + " GB disk";
  } else {
    for (const auto& f : spec.failures) {
      if (f.sample != sample || !f.attempts.count(attempt)) continue;
      if (f.step.empty() ? first_step : f.step == step.rule_name) {
        obs.failure = FailureReason::InjectedFault;
        obs.detail = "injected on attempt " + std::to_string(attempt);
        break;
      }
    }
    if (obs.succeeded() && spec.failure_rate > 0) {
      KeyedStream stream(spec.seed, draw_key(sample, step.rule_name, "fault", attempt));
      if (stream.uniform() < spec.failure_rate) {
        obs.failure = FailureReason::InjectedFault;
        obs.detail = "random fault";
      }
    }
  }
  if (!obs.succeeded()) obs.exit_status = 1;
  return obs;
}

namespace {

template <typename MachineFor>
ExecutionOutcome run_sim(const TaskPlan& plan, const WorkloadSpec& spec, VirtualClock& clock, int attempt,
                         MachineFor machine_for) {
  // Check coverage up front so a spec gap never surfaces as a half-run task.
  for (const auto& step : plan.steps) draw_step(spec, plan.sample_id, step.rule_name, attempt);

  ExecutionOutcome outcome;
  outcome.sample_id = plan.sample_id;
  outcome.succeeded = true;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const StepSpec& step = plan.steps[i];
    StepObservation obs = simulate_step(spec, plan.sample_id, step, machine_for(step), attempt, i == 0);
    clock.advance(obs.duration_hours);
    const bool ok = obs.succeeded();
    outcome.steps.push_back(std::move(obs));
    if (!ok) {
      outcome.succeeded = false;
      outcome.failed_step = step.rule_name;
      outcome.reason = outcome.steps.back().failure;
      outcome.detail = outcome.steps.back().detail;
      break;
    }
  }
  return outcome;
}

}  // namespace

ExecutionOutcome run_task_sim(const TaskPlan& plan, const WorkloadSpec& spec, VirtualClock& clock,
                              const MachineCatalog& catalog, int attempt) {
  return run_sim(plan, spec, clock, attempt, [&](const StepSpec& step) -> const MachineType& {
    if (!step.resources.machine) throw Error(Errc::InvalidArgument, "step '" + step.rule_name + "' has no machine");
    return catalog.at(*step.resources.machine);
  });
}

ExecutionOutcome run_task_sim(const TaskPlan& plan, const WorkloadSpec& spec, VirtualClock& clock,
                              const MachineType& machine, int attempt) {
  return run_sim(plan, spec, clock, attempt, [&](const StepSpec&) -> const MachineType& { return machine; });
}

}  // namespace gflow
