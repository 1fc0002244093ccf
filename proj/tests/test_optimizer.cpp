#include <gtest/gtest.h>

#include <random>

#include "gflow/error.hpp"
#include "gflow/optimizer.hpp"
#include "sim_fixtures.hpp"
#include "test_util.hpp"

namespace gflow {
namespace {

using testing::machine;
using testing::R;
using testing::sample_ids;
using testing::sim_job;

StepObservation obs(const std::string& rule, const char* hours, const char* cpu, const char* mem, const char* disk,
                    FailureReason failure = FailureReason::None) {
  StepObservation o;
  o.rule = rule;
  o.duration_hours = R(hours);
  o.peak_cpu_cores = R(cpu);
  o.peak_mem_gb = R(mem);
  o.peak_disk_gb = R(disk);
  o.failure = failure;
  o.machine = "n2-highmem-16";
  o.disk_gb = 500;
  return o;
}

Workflow two_rules() {
  return parse_workflow(R"(
rule a:
    output: ["{sampleID}.a"]
    shell: "a"
rule b:
    input: ["{sampleID}.a"]
    output: ["{sampleID}.b"]
    resources: [disk_class="ssd"]
    shell: "b"
)");
}

TEST(Profile, MaxPeaksAndMeanDuration) {
  const ResourceProfile p = build_profile(
      two_rules(), std::vector<StepObservation>{obs("a", "1", "2", "8", "40"), obs("a", "3", "3.5", "6", "50"), obs("b", "2", "1", "1", "1"),
                    obs("b", "9", "90", "900", "900", FailureReason::OutOfMemory), obs("gone", "1", "1", "1", "1")});
  ASSERT_EQ(p.rules.size(), 2u);
  const RuleProfile& a = p.rules.at("a");
  EXPECT_EQ(a.peak_cpu, R("3.5"));
  EXPECT_EQ(a.peak_mem_gb, R("8"));
  EXPECT_EQ(a.peak_disk_gb, R("50"));
  EXPECT_EQ(a.mean_duration_hours, R("2"));
  EXPECT_EQ(a.samples, 2u);
  const RuleProfile& b = p.rules.at("b");
  EXPECT_EQ(b.peak_mem_gb, R("1"));
  EXPECT_EQ(b.requested_disk_class, DiskClass::Ssd);
}

TEST(Profile, AllTestTasksFailed) {
  try {
    build_profile(two_rules(), std::vector<StepObservation>{obs("a", "1", "1", "1", "1"), obs("b", "1", "1", "1", "1", FailureReason::DiskFull)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AllTestTasksFailed);
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
}

TEST(Profile, TestSampleCountClamps) {
  Workflow w = two_rules();
  bool clamped = true;
  EXPECT_EQ(test_sample_count(w, 3, 20, &clamped), 3);
  EXPECT_FALSE(clamped);
  w.testsamplesize = 30;
  EXPECT_EQ(test_sample_count(w, 3, 20, &clamped), 20);
  EXPECT_TRUE(clamped);
  w.testsamplesize = 0;
  EXPECT_THROW(test_sample_count(w, 3, 20), Error);
}

TEST(Profile, ProfileRunsOnlyTheTestSamples) {
  WorkloadSpec spec;
  spec.rules["work"] = testing::fixed_workload(R("2"), R("3"), R("12"), R("180"));
  SimExecutor exec(spec, testing::sample_catalog(), nullptr);
  const TestRun run = profile(sim_job(testing::one_step_workflow("e2-standard-16", 500), sample_ids(20), {{"*", 4}}), 3, exec);
  EXPECT_EQ(run.completed, (std::vector<std::string>{"S1", "S2", "S3"}));
  EXPECT_EQ(run.profile.rules.at("work").samples, 3u);
  EXPECT_EQ(run.profile.rules.at("work").peak_disk_gb, R("180"));
}

TEST(Recommend, CaseOneDownscales) {
  ResourceProfile p;
  p.rules["quantify"] = {R("3.5"), R("14"), R("225"), R("7"), 3, DiskClass::Balanced};
  const Recommendation rec = recommend(p, testing::sample_catalog());
  const RuleRecommendation& r = rec.rules.at("quantify");
  EXPECT_EQ(r.machine, "e2-standard-4");
  EXPECT_EQ(r.disk_gb, 250);
  EXPECT_EQ(r.disk_class, DiskClass::Balanced);
}

TEST(Recommend, CaseTwoExact) {
  ResourceProfile p;
  p.rules["call"] = {R("3.5"), R("12"), R("180"), R("0.64"), 3, std::nullopt};
  const Recommendation rec = recommend(p, testing::sample_catalog());
  EXPECT_EQ(rec.rules.at("call"), (RuleRecommendation{"e2-standard-4", 200, DiskClass::Balanced}));
}

TEST(Recommend, NoFeasibleMachineNamesConstraint) {
  const MachineCatalog cat = testing::small_catalog({machine("e2-standard-4", "1"), machine("e2-highcpu-8", "2")});
  ResourceProfile p;
  p.rules["big"] = {R("2"), R("100"), R("10"), R("1"), 1, std::nullopt};
  try {
    recommend(p, cat);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoFeasibleMachine);
    EXPECT_NE(std::string(e.what()).find("rule 'big'"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("memory"), std::string::npos);
  }
  p.rules["big"] = {R("5"), R("14"), R("10"), R("1"), 1, std::nullopt};
  try {
    recommend(p, cat);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("cpu and memory together"), std::string::npos);
  }
  p.rules["big"] = {R("17"), R("1"), R("10"), R("1"), 1, std::nullopt};
  EXPECT_THROW(recommend(p, cat), Error);
  EXPECT_THROW(recommend(p, cat, R("0.9")), Error);
}

TEST(Recommend, HeadroomIsAppliedBeforeFeasibility) {
  const MachineCatalog cat = testing::small_catalog({machine("e2-standard-4", "1"), machine("e2-standard-8", "2")});
  ResourceProfile p;
  p.rules["r"] = {R("4"), R("15"), R("9"), R("1"), 1, std::nullopt};
  EXPECT_EQ(recommend(p, cat, R("1")).rules.at("r").machine, "e2-standard-4");
  EXPECT_EQ(recommend(p, cat, R("1")).rules.at("r").disk_gb, 10);
  EXPECT_EQ(recommend(p, cat, R("1.1")).rules.at("r").machine, "e2-standard-8");
}

TEST(Recommend, MatchesBruteForce) {
  std::mt19937_64 rng(99);
  const char* series[] = {"e2", "n2", "n1"};
  const char* families[] = {"standard", "highmem", "highcpu"};
  const int sizes[] = {2, 4, 8, 16, 32, 64};
  for (int round = 0; round < 200; ++round) {
    std::vector<MachineType> ms;
    std::set<std::string> seen;
    const int n = 1 + static_cast<int>(rng() % 30);
    while (static_cast<int>(ms.size()) < n) {
      const std::string name = std::string(series[rng() % 3]) + "-" + families[rng() % 3] + "-" +
                               std::to_string(sizes[rng() % 6]);
      if (!seen.insert(name).second) continue;
      // Coarse prices so ties happen.
      ms.push_back(machine(name, std::to_string(1 + rng() % 8).c_str()));
    }
    const MachineCatalog cat = testing::small_catalog(ms);
    ResourceProfile p;
    const Rational cpu(static_cast<long long>(rng() % 400), 10);
    const Rational mem(static_cast<long long>(rng() % 3000), 10);
    p.rules["r"] = {cpu, mem, R("1"), R("1"), 1, std::nullopt};
    const Rational need_cpu = cpu * kDefaultHeadroom, need_mem = mem * kDefaultHeadroom;
    const MachineType* best = nullptr;
    for (const auto& m : ms) {
      if (m.vcpu < need_cpu || m.mem_gb < need_mem) continue;
      if (!best || m.price_per_hour < best->price_per_hour ||
          (m.price_per_hour == best->price_per_hour &&
           (m.vcpu < best->vcpu || (m.vcpu == best->vcpu && m.name < best->name)))) {
        best = &m;
      }
    }
    if (!best) {
      EXPECT_THROW(recommend(p, cat), Error);
    } else {
      EXPECT_EQ(recommend(p, cat).rules.at("r").machine, best->name);
    }
  }
}

TEST(Recommend, DiskRounding) {
  EXPECT_EQ(round_disk_gb(R("0")), 10);
  EXPECT_EQ(round_disk_gb(R("10")), 10);
  EXPECT_EQ(round_disk_gb(R("10.001")), 20);
  EXPECT_EQ(round_disk_gb(R("247.5")), 250);
  EXPECT_EQ(round_disk_gb(R("198")), 200);
}

TEST(Recommend, JsonRoundTripAndValidation) {
  const MachineCatalog cat = testing::sample_catalog();
  Recommendation rec;
  rec.rules["a"] = {"e2-standard-4", 200, DiskClass::Balanced};
  rec.rules["b"] = {"n2-highmem-16", 30, DiskClass::Ssd};
  EXPECT_EQ(recommendation_from_json(recommendation_to_json(rec), cat), rec);
  auto doc = recommendation_to_json(rec);
  doc["rules"]["a"]["machine"] = "z9-standard-4";
  EXPECT_THROW(recommendation_from_json(doc, cat), Error);
  doc = recommendation_to_json(rec);
  doc["rules"]["a"]["disk_gb"] = 5;
  EXPECT_THROW(recommendation_from_json(doc, cat), Error);
  EXPECT_THROW(recommendation_from_json(nlohmann::json::object(), cat), Error);
}

TEST(Recommend, ApplyRecommendation) {
  Recommendation rec;
  rec.rules["b"] = {"e2-standard-4", 40, DiskClass::Standard};
  const Workflow w = apply_recommendation(two_rules(), rec);
  EXPECT_FALSE(w.rules[0].resources.has_value());
  EXPECT_EQ(w.rules[1].resources, (ResourceRequest{"e2-standard-4", 40, DiskClass::Standard}));
  rec.rules["zzz"] = rec.rules["b"];
  EXPECT_THROW(apply_recommendation(two_rules(), rec), Error);
}

TEST(Costs, ComparisonRendersSeventySevenPercent) {
  const Rational pct = compare_costs(R("7.34"), R("1.72"));
  EXPECT_NEAR(to_double(pct), 76.57, 0.01);
  EXPECT_EQ(render_percent(pct), "77%");
  EXPECT_EQ(compare_costs(R("2"), R("2")), 0);
  EXPECT_EQ(render_percent(compare_costs(R("1"), R("1.5"))), "-50%");
  EXPECT_THROW(compare_costs(R("0"), R("1")), Error);
}

TEST(Costs, CalibratedEstimates) {
  const MachineCatalog cat = testing::sample_catalog();
  const CostBreakdown defaults =
      estimate_task_cost(cat.at("n2-highmem-16"), 500, DiskClass::Balanced, R("7"), cat);
  EXPECT_EQ(defaults.total(), R("7.3402"));
  EXPECT_EQ(render_money(defaults.total(), "USD"), "$7.34");
  const CostBreakdown case2 = estimate_task_cost(cat.at("e2-standard-4"), 200, DiskClass::Balanced, R("0.64"), cat);
  EXPECT_EQ(render_money(case2.total(), cat.currency()), "$0.12");
  EXPECT_NEAR(to_double(case2.total()), 0.12, 0.005);
  EXPECT_THROW(estimate_task_cost(cat.at("e2-standard-4"), 10, DiskClass::Balanced, R("-1"), cat), Error);
}

TEST(Costs, BillingIsLinear) {
  const MachineCatalog cat = testing::sample_catalog();
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const MachineType& m = cat.machines()[rng() % cat.machines().size()];
    const Rational h1(static_cast<long long>(rng() % 1000), 100), h2(static_cast<long long>(rng() % 1000), 100);
    const int disk = 10 * (1 + static_cast<int>(rng() % 50));
    const auto a = estimate_task_cost(m, disk, DiskClass::Ssd, h1, cat);
    const auto b = estimate_task_cost(m, disk, DiskClass::Ssd, h2, cat);
    EXPECT_EQ(estimate_task_cost(m, disk, DiskClass::Ssd, h1 + h2, cat).total(), a.total() + b.total());
  }
}

TEST(Costs, MissingDiskClassPrice) {
  const MachineCatalog cat({machine("e2-standard-4", "1")}, {{DiskClass::Balanced, R("0.1")}}, "USD");
  EXPECT_THROW(estimate_task_cost(cat.at("e2-standard-4"), 10, DiskClass::Ssd, R("1"), cat), Error);
}

TEST(Costs, RenderMoneyAndDecimals) {
  EXPECT_EQ(render_money(R("1.345"), "USD"), "$1.35");
  EXPECT_EQ(render_money(R("-0.5"), "USD"), "-$0.50");
  EXPECT_EQ(render_money(R("3"), "EUR"), "EUR 3.00");
  EXPECT_EQ(to_decimal_string(R("7.3402")), "7.3402");
  EXPECT_EQ(to_decimal_string(R("1/3"), 4), "0.3333");
  EXPECT_EQ(to_decimal_string(R("5")), "5");
}

TEST(Costs, JobReportBillsFailedAttempts) {
  const MachineCatalog cat = testing::small_catalog({machine("e2-standard-4", "1")}, "0.01");
  WorkloadSpec spec;
  spec.rules["work"] = testing::fixed_workload(R("2"), R("1"), R("1"), R("1"));
  spec.failures.push_back({"S2", {1}, ""});
  Orchestrator orch =
      Orchestrator::submit(sim_job(testing::one_step_workflow("e2-standard-4", 10), sample_ids(2), {{"*", 1}}), nullptr);
  SimExecutor exec(spec, cat, nullptr);
  run_job(orch, exec);
  CostReport report = job_cost_report(orch, cat);
  ASSERT_EQ(report.samples.size(), 2u);
  // 2 h x ($1 + 10 GB x $0.01) per attempt
  EXPECT_EQ(report.samples[0].total(), R("2.2"));
  EXPECT_EQ(report.samples[1].attempts, 2);
  EXPECT_EQ(report.samples[1].total(), R("4.4"));
  EXPECT_EQ(report.aggregate, R("6.6"));
  EXPECT_EQ(report.mean_per_sample, R("3.3"));
  attach_baseline(report, R("6.6"));
  EXPECT_EQ(render_percent(report.comparison->reduction_percent), "50%");
  const CostReport back = cost_report_from_json(cost_report_to_json(report));
  EXPECT_EQ(back.aggregate, report.aggregate);
  EXPECT_EQ(back.samples.size(), 2u);
  EXPECT_EQ(back.comparison->baseline, R("6.6"));
  const std::string table = render_cost_table(report);
  EXPECT_NE(table.find("aggregate: $6.60"), std::string::npos);
  EXPECT_NE(table.find("reduction: 50%"), std::string::npos);
}

TEST(Costs, UnfinishedTaskHasNoCost) {
  Orchestrator orch =
      Orchestrator::submit(sim_job(testing::one_step_workflow(), sample_ids(2), {{"*", 1}}), nullptr);
  orch.lease_next(Rational(0));
  try {
    job_cost_report(orch, testing::sample_catalog());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingDuration);
  }
}

}  // namespace
}  // namespace gflow
