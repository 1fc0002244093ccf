// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion; exits nonzero on any failure.

#include <chrono>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "../cli_runner.hpp"
#include "../sim_fixtures.hpp"
#include "../test_util.hpp"
#include "gflow/error.hpp"
#include "gflow/optimizer.hpp"
#include "gflow/project.hpp"
#include "gflow/scheduler.hpp"

namespace fs = std::filesystem;
using namespace gflow;
using gflow::testing::R;

namespace {

const fs::path kExamples = GFLOW_EXAMPLES_DIR;

struct Failed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(bool ok, const std::string& what) {
  if (!ok) throw Failed(what);
}

template <typename T>
std::string str(const T& v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

// Every sample is in exactly one state and no pool is over capacity.
void check_conservation(const Orchestrator& o) {
  std::size_t total = 0;
  for (const auto& [state, n] : o.counts()) total += n;
  check(total == o.job().sample_ids.size(), "state counts sum to " + str(total));
  std::size_t queued = 0, running = 0;
  for (const auto& [s, rec] : o.records()) {
    queued += rec.state == TaskState::Queued;
    running += rec.state == TaskState::Running;
  }
  check(queued == o.queue().pending().size(), "queued tasks match the pending queue");
  check(running == o.queue().in_flight().size(), "running tasks match the in-flight leases");
  for (const auto& [name, pool] : o.pools()) {
    check(pool.in_use >= 0 && pool.in_use <= pool.capacity, "pool " + name + " within capacity");
  }
}

Job rnaseq_job(const Workflow& w, int n, const MachineCatalog& catalog) {
  (void)catalog;
  std::vector<std::string> samples = load_sample_list(kExamples / "rnaseq_samples.txt");
  samples.resize(n);
  return gflow::testing::sim_job(w, samples, {{"*", 4}});
}

// ---------------------------------------------------------------------------

std::string c1_shapes() {
  const std::pair<const char*, std::pair<int, int>> cases[] = {
      {"e2-standard-16", {16, 64}}, {"n2-highmem-16", {16, 128}}, {"e2-standard-4", {4, 16}}, {"n2-standard-4", {4, 16}}};
  for (const auto& [name, shape] : cases) {
    const MachineShape s = parse_machine_name(name);
    check(s.vcpu == shape.first && s.mem_gb == shape.second, std::string(name) + " has the wrong shape");
  }
  return "4 shapes exact";
}

std::string c2_percent() {
  const Rational pct = compare_costs(R("7.34"), R("1.72"));
  check(std::abs(to_double(pct) - 76.57) <= 0.01, "value " + to_fixed(pct, 4));
  check(render_percent(pct) == "77%", "rendered " + render_percent(pct));
  return "compare_costs(7.34, 1.72) = " + to_fixed(pct, 2) + " -> " + render_percent(pct);
}

std::string c3_case1() {
  const MachineCatalog catalog = gflow::testing::sample_catalog();
  const Workflow w = load_job_file(kExamples / "rnaseq_one_step.smk", catalog);
  const WorkloadSpec spec = load_workload(kExamples / "rnaseq_workload.json");

  auto mean_cost = [&](const Workflow& wf, const MachineCatalog& cat) {
    Orchestrator orch = Orchestrator::submit(rnaseq_job(wf, 20, cat), nullptr);
    SimExecutor exec(spec, cat, nullptr);
    const RunReport r = run_job(orch, exec);
    check(r.all_succeeded(), "20-sample run did not finish");
    return job_cost_report(orch, cat).mean_per_sample;
  };

  SimExecutor test_exec(spec, catalog, nullptr);
  const TestRun test = profile(rnaseq_job(w, 20, catalog), 3, test_exec);
  check(test.completed.size() == 3, "test run completed " + str(test.completed.size()));
  const Recommendation rec = recommend(test.profile, catalog, R("1.1"));
  const RuleRecommendation& r = rec.rules.at("quantify");
  const MachineType& m = catalog.at(r.machine);
  check(m.vcpu <= 8 && m.mem_gb <= 64, "recommended " + r.machine);
  check(r.disk_gb == 250, "disk " + str(r.disk_gb));

  const Workflow optimized = apply_recommendation(w, rec);
  const Rational base = mean_cost(w, catalog), opt = mean_cost(optimized, catalog);
  check(opt < base, "optimized not cheaper");

  // Same scenario with the recommended machine priced so its run costs 1.72 against 7.34.
  std::vector<MachineType> machines = catalog.machines();
  for (auto& mt : machines) {
    if (mt.name == r.machine) mt.price_per_hour = (R("1.72") - R("0.0001") * r.disk_gb * 7) / 7;
    if (mt.name == "n2-highmem-16") mt.price_per_hour = (R("7.34") - R("0.0001") * 500 * 7) / 7;
  }
  const MachineCatalog ratio(machines, catalog.disks(), catalog.currency());
  const Rational rbase = mean_cost(w, ratio), ropt = mean_cost(optimized, ratio);
  const Rational reduction = compare_costs(rbase, ropt);
  check(reduction >= 50, "reduction at 7.34:1.72 is " + to_fixed(reduction, 2));
  return r.machine + " " + str(r.disk_gb) + " GB; per sample " + render_money(base, "USD") + " -> " +
         render_money(opt, "USD") + " (" + render_percent(compare_costs(base, opt)) + "); at 7.34:1.72 " +
         render_percent(reduction);
}

std::string c4_case2() {
  const MachineCatalog catalog = gflow::testing::sample_catalog();
  WorkloadSpec spec;
  spec.rules["work"] = gflow::testing::fixed_workload(R("0.64"), R("3.5"), R("12"), R("180"));
  const Workflow w = gflow::testing::one_step_workflow("n2-highmem-16", 500);
  SimExecutor test_exec(spec, catalog, nullptr);
  const TestRun test = profile(gflow::testing::sim_job(w, gflow::testing::sample_ids(10), {{"*", 4}}), 3, test_exec);
  const Recommendation rec = recommend(test.profile, catalog);
  const RuleRecommendation want{"e2-standard-4", 200, DiskClass::Balanced};
  check(rec.rules.at("work") == want, "recommended " + rec.rules.at("work").machine + " " +
                                          str(rec.rules.at("work").disk_gb));
  Orchestrator orch = Orchestrator::submit(
      gflow::testing::sim_job(apply_recommendation(w, rec), gflow::testing::sample_ids(10), {{"*", 4}}), nullptr);
  SimExecutor exec(spec, catalog, nullptr);
  run_job(orch, exec);
  const CostReport cost = job_cost_report(orch, catalog);
  check(std::abs(to_double(cost.mean_per_sample) - 0.12) <= 0.005, "per sample " + to_fixed(cost.mean_per_sample, 4));
  check(render_money(cost.mean_per_sample, cost.currency) == "$0.12", "rendered wrongly");
  return "e2-standard-4, 200 GB balanced; per sample " + render_money(cost.mean_per_sample, cost.currency);
}

std::string c5_oracle() {
  std::mt19937_64 rng(2024);
  const char* series[] = {"e2", "n2", "n1"};
  const char* families[] = {"standard", "highmem", "highcpu"};
  const int sizes[] = {2, 4, 8, 16, 32, 64};
  int cases = 0, infeasible = 0;
  for (; cases < 1000; ++cases) {
    std::vector<MachineType> ms;
    std::set<std::string> seen;
    const int n = 1 + static_cast<int>(rng() % 50);
    while (static_cast<int>(ms.size()) < n) {
      const std::string name =
          std::string(series[rng() % 3]) + "-" + families[rng() % 3] + "-" + std::to_string(sizes[rng() % 6]);
      if (!seen.insert(name).second) continue;
      ms.push_back(gflow::testing::machine(name, std::to_string(1 + rng() % 12).c_str()));
    }
    const MachineCatalog cat = gflow::testing::small_catalog(ms);
    ResourceProfile p;
    const Rational cpu(static_cast<long long>(rng() % 500), 10), mem(static_cast<long long>(rng() % 4000), 10);
    p.rules["r"] = {cpu, mem, Rational(static_cast<long long>(rng() % 5000), 10), Rational(1), 1, std::nullopt};
    const Rational need_cpu = cpu * kDefaultHeadroom, need_mem = mem * kDefaultHeadroom;
    const MachineType* best = nullptr;
    for (const auto& m : ms) {
      if (m.vcpu < need_cpu || m.mem_gb < need_mem) continue;
      const bool better = !best || m.price_per_hour < best->price_per_hour ||
                          (m.price_per_hour == best->price_per_hour &&
                           (m.vcpu < best->vcpu || (m.vcpu == best->vcpu && m.name < best->name)));
      if (better) best = &m;
    }
    if (!best) {
      ++infeasible;
      bool threw = false;
      try {
        recommend(p, cat);
      } catch (const Error& e) {
        threw = e.code() == Errc::NoFeasibleMachine;
      }
      check(threw, "case " + str(cases) + ": expected NoFeasibleMachine");
      continue;
    }
    const std::string got = recommend(p, cat).rules.at("r").machine;
    check(got == best->name, "case " + str(cases) + ": got " + got + ", oracle " + best->name);
  }
  return str(cases) + " cases agree (" + str(infeasible) + " infeasible)";
}

std::string c6_failover() {
  gflow::testing::TempDir dir;
  ObjectStore store(dir / "store");
  store.create_bucket("results");
  WorkloadSpec spec;
  spec.seed = 11;
  RuleWorkload w;
  w.duration_hours.kind = Distribution::Kind::Uniform;
  w.duration_hours.a = 0.5;
  w.duration_hours.b = 3;
  w.peak_cpu.value = 1;
  w.peak_mem_gb.value = 1;
  w.peak_disk_gb.value = 1;
  spec.rules["work"] = w;
  const auto samples = gflow::testing::sample_ids(100);
  for (int i = 0; i < 100; i += 5) spec.failures.push_back({samples[i], {1}, ""});
  Orchestrator orch =
      Orchestrator::submit(gflow::testing::sim_job(gflow::testing::one_step_workflow(), samples, {{"*", 8}}, 3),
                           std::make_unique<MemoryEventLog>());
  std::size_t events = 0;
  orch.set_observer([&](const Orchestrator& o, const Event&) {
    ++events;
    check_conservation(o);
  });
  SimExecutor exec(spec, gflow::testing::sample_catalog(), &store);
  const RunReport r = run_job(orch, exec);
  check(r.counts.at(TaskState::Succeeded) == 100, "succeeded " + str(r.counts.at(TaskState::Succeeded)));
  int twice = 0;
  for (const auto& [s, rec] : orch.records()) twice += rec.attempts == 2;
  check(twice == 20, "attempts == 2 for " + str(twice));
  const std::size_t objects = store.list(StoreUri("results")).size();
  check(objects == 100 && r.results_written == 100, "result objects " + str(objects));
  return "100/100 succeeded, 20 retried once, " + str(events) + " events conserved, 100 results";
}

std::string c7_determinism() {
  WorkloadSpec spec = load_workload(kExamples / "rnaseq_workload.json");
  spec.rules["quantify"].duration_hours.kind = Distribution::Kind::LogNormal;
  spec.rules["quantify"].duration_hours.a = 1.5;
  spec.rules["quantify"].duration_hours.b = 0.3;
  spec.failure_rate = 0.1;
  const MachineCatalog catalog = gflow::testing::sample_catalog();
  const Workflow w = load_job_file(kExamples / "rnaseq_one_step.smk", catalog);
  auto run = [&](std::uint64_t seed) {
    WorkloadSpec s = spec;
    s.seed = seed;
    auto log = std::make_unique<MemoryEventLog>();
    MemoryEventLog* raw = log.get();
    Orchestrator orch = Orchestrator::submit(rnaseq_job(w, 20, catalog), std::move(log));
    SimExecutor exec(s, catalog, nullptr);
    run_job(orch, exec);
    return std::make_pair(raw->text(), cost_report_to_json(job_cost_report(orch, catalog)).dump());
  };
  const auto a = run(7), b = run(7);
  check(a.first == b.first, "event logs differ");
  check(a.second == b.second, "cost reports differ");
  WorkloadSpec other = spec;
  other.seed = 8;
  bool changed = false;
  for (const auto& s : load_sample_list(kExamples / "rnaseq_samples.txt")) {
    WorkloadSpec s7 = spec;
    s7.seed = 7;
    changed |= draw_step(s7, s, "quantify", 1).duration_hours != draw_step(other, s, "quantify", 1).duration_hours;
  }
  check(changed, "seed change left every duration unchanged");
  check(run(8).first != a.first, "seed change left the log unchanged");
  return "identical logs (" + str(a.first.size()) + " bytes) and cost reports; seed change alters durations";
}

std::string c8_makespan() {
  WorkloadSpec spec;
  spec.rules["work"] = gflow::testing::fixed_workload(Rational(7), Rational(1), Rational(1), Rational(1));
  Orchestrator orch = Orchestrator::submit(
      gflow::testing::sim_job(gflow::testing::one_step_workflow(), gflow::testing::sample_ids(4), {{"*", 2}}), nullptr);
  SimExecutor exec(spec, gflow::testing::sample_catalog(), nullptr);
  const RunReport r = run_job(orch, exec);
  check(r.makespan == 14, "makespan " + to_exact_string(r.makespan));

  std::mt19937_64 rng(8);
  for (int round = 0; round < 200; ++round) {
    const int n = 1 + static_cast<int>(rng() % 30);
    const int cap = 1 + static_cast<int>(rng() % 6);
    WorkloadSpec s;
    s.rules["work"] = gflow::testing::fixed_workload(Rational(1), Rational(1), Rational(1), Rational(1));
    Rational total = 0, longest = 0;
    const auto samples = gflow::testing::sample_ids(n);
    for (const auto& id : samples) {
      const Rational h(static_cast<long long>(1 + rng() % 96), 8);
      s.overrides.push_back({id, "work", h, std::nullopt, std::nullopt, std::nullopt});
      total += h;
      longest = std::max(longest, h);
    }
    Orchestrator o = Orchestrator::submit(
        gflow::testing::sim_job(gflow::testing::one_step_workflow(), samples, {{"*", cap}}), nullptr);
    SimExecutor e(s, gflow::testing::sample_catalog(), nullptr);
    const Rational m = run_job(o, e).makespan;
    const Rational lower = std::max(Rational(total / cap), longest);
    check(m >= lower, "instance " + str(round) + ": makespan " + to_exact_string(m) + " < " + to_exact_string(lower));
  }
  return "4 x 7 h on 2 slots = 14 h; bound holds on 200 instances";
}

std::string c9_local_cli() {
  gflow::testing::TempDir dir;
  using gflow::testing::shell_quote_arg;
  const std::string common = "--backend local --store-root " + shell_quote_arg((dir / "store").string()) +
                             " --samples " + shell_quote_arg((kExamples / "toy_samples.txt").string()) +
                             " --default-machine e2-standard-4 --default-disk 10";
  auto step = [&](const std::string& args) {
    const auto r = gflow::testing::run_cli(common + " " + args);
    check(r.exit_code == 0, "`gflow " + args + "` exited " + str(r.exit_code) + ": " + r.out);
    return r.out;
  };
  step("create " + shell_quote_arg((kExamples / "fastq_to_bam.smk").string()) + " --project toy");
  step("optimize toy");
  step("run toy --optparams " + shell_quote_arg((dir / "store/.gflow/projects/toy/optparams.json").string()));
  ObjectStore store(dir / "store");
  const std::size_t results = store.list(StoreUri("toy-results")).size();
  check(results == 3, "result objects " + str(results));
  const std::string dst = shell_quote_arg((dir / "fetched").string());
  const std::string first = step("fetch store://toy-results " + dst);
  check(first.find("copied 3, skipped 0") != std::string::npos, "first fetch: " + first);
  const std::string second = step("fetch store://toy-results " + dst);
  check(second.find("copied 0, skipped 3") != std::string::npos, "second fetch: " + second);
  return "create -> optimize -> run: 3 results; refetch copied 0, skipped 3";
}

std::string c10_recovery() {
  const auto samples = gflow::testing::sample_ids(12);
  WorkloadSpec spec;
  spec.seed = 3;
  RuleWorkload w;
  w.duration_hours.kind = Distribution::Kind::Uniform;
  w.duration_hours.a = 0.5;
  w.duration_hours.b = 4;
  w.peak_cpu.value = 1;
  w.peak_mem_gb.value = 1;
  w.peak_disk_gb.value = 1;
  spec.rules["a"] = w;
  spec.rules["b"] = w;
  spec.failures.push_back({"S4", {1}, "b"});
  const Workflow wf = parse_workflow(R"(
rule a:
    output: ["{sampleID}.a"]
    shell: "a"
rule b:
    input: ["{sampleID}.a"]
    output: ["{sampleID}.b"]
    shell: "b"
)");
  const Job job = gflow::testing::sim_job(wf, samples, {{"*", 3}});
  const MachineCatalog catalog = gflow::testing::sample_catalog();

  // Event indices (1-based) at which some task has succeeded and another holds a lease.
  std::vector<std::size_t> eligible;
  {
    Orchestrator o = Orchestrator::submit(job, std::make_unique<MemoryEventLog>());
    std::size_t idx = 1;  // job_submitted
    o.set_observer([&](const Orchestrator& x, const Event&) {
      ++idx;
      const auto c = x.counts();
      const auto get = [&](TaskState s) { return c.count(s) ? c.at(s) : 0; };
      if (get(TaskState::Succeeded) >= 1 && get(TaskState::Running) >= 1) eligible.push_back(idx);
    });
    SimExecutor e(spec, catalog, nullptr);
    run_job(o, e);
  }
  check(eligible.size() >= 10, "too few crash points");

  std::mt19937_64 rng(10);
  int crashes = 0;
  for (int trial = 0; trial < 50; ++trial) {
    gflow::testing::TempDir dir;
    ObjectStore store(dir / "store");
    store.create_bucket("results");
    const fs::path log_path = dir / "job.log";
    // Crash before writing event k+1 leaves the state of event k; after writing k, the state of k.
    const std::size_t k = eligible[rng() % eligible.size()];
    const bool after = rng() % 2;
    auto log = std::make_unique<CrashingEventLog>(std::make_unique<FileEventLog>(log_path), after ? k : k + 1, after);
    std::size_t written_before = 0;
    try {
      Orchestrator o = Orchestrator::submit(job, std::move(log));
      SimExecutor e(spec, catalog, &store);
      written_before = run_job(o, e).results_written;
      check(false, "no crash at event " + str(k));
    } catch (const SimulatedCrash&) {
      ++crashes;
    }
    (void)written_before;
    // A torn final record, as a process killed mid-write would leave.
    if (rng() % 3 == 0) {
      std::ofstream(log_path, std::ios::app) << "{\"seq\": 99999, \"ti";
    }
    Recovery rec = Orchestrator::recover(log_path);
    Orchestrator& o = rec.orchestrator;
    check_conservation(o);
    check(!rec.report.reverted.empty(), "trial " + str(trial) + ": nothing was in flight");
    o.set_observer([&](const Orchestrator& x, const Event&) { check_conservation(x); });
    SimExecutor e(spec, catalog, &store, o.last_time());
    const RunReport r = run_job(o, e);
    if (r.counts.at(TaskState::Succeeded) != samples.size()) {
      std::string why;
      for (const auto& [st, n] : r.counts) why += " " + std::string(to_string(st)) + "=" + str(n);
      for (const auto& [s, rec] : o.records()) why += " " + s + "=" + std::string(to_string(rec.state));
      for (const auto& s : r.exhausted) {
        for (const auto& h : o.record(s).history) why += " " + s + ":" + std::string(to_string(h.reason)) + "@" + to_exact_string(h.leased_at);
      }
      check(false, "trial " + str(trial) + ": not all succeeded; k=" + str(k) + " after=" + str(after) + why);
    }
    const auto objects = store.list(StoreUri("results"));
    std::set<std::string> keys;
    for (const auto& obj : objects) keys.insert(obj.uri.key);
    check(objects.size() == samples.size() && keys.size() == samples.size(),
          "trial " + str(trial) + ": " + str(objects.size()) + " result objects");
  }
  return str(crashes) + " crash points recovered; conservation held, one result per sample";
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<std::string()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "machine shapes", 1, c1_shapes},
      {2, "cost reduction 77%", 1, c2_percent},
      {3, "case 1 downscaling", 10, c3_case1},
      {4, "case 2 recommendation and cost", 5, c4_case2},
      {5, "optimizer optimality oracle", 30, c5_oracle},
      {6, "failover and conservation", 10, c6_failover},
      {7, "determinism", 10, c7_determinism},
      {8, "makespan arithmetic", 10, c8_makespan},
      {9, "local end-to-end via CLI", 30, c9_local_cli},
      {10, "crash recovery", 60, c10_recovery},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
      detail = c.run();
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (ok && secs > c.limit_seconds) {
      ok = false;
      detail += " (took longer than " + str(c.limit_seconds) + " s)";
    }
    failures += !ok;
    std::cout << (ok ? "PASS" : "FAIL") << " " << c.id << " " << c.name << ": " << detail << " [" << std::fixed
              << std::setprecision(2) << secs << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
