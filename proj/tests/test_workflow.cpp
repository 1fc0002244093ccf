#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "gflow/error.hpp"
#include "gflow/workflow.hpp"
#include "test_util.hpp"

namespace gflow {
namespace {

using testing::sample_catalog;

const char* kTwoRules = R"(testsamplesize : 3
image : "registry/bwa:1"

rule download:
    output: ["{sampleID}.fastq"]
    shell: "fetch {sampleID} > {output}"

rule align:
    input: ["{sampleID}.fastq"]
    output: ["{sampleID}.bam"]
    params: [ref="{reference}/hg38.fa"]
    resources: [machine="n2-standard-4", disk_gb=200, disk_class="balanced"]
    shell: "bwa mem {params.ref} {input} > {output} # {sampleID}"
)";

const char* kChain = R"(
rule download:
    output: ["{sampleID}.fastq"]
    shell: "fetch {sampleID} > {output}"

rule align:
    input: ["{sampleID}.fastq"]
    output: ["{sampleID}.bam"]
    shell: "align {input} {sampleID} > {output}"

rule refine:
    input: ["{sampleID}.bam"]
    output: ["{sampleID}.refined.bam"]
    shell: "refine {input} {sampleID} > {output}"
)";

ResourceRequest defaults() { return {"e2-standard-16", 100, DiskClass::Balanced}; }

TEST(ParseWorkflow, TwoRulesWithTestSampleSize) {
  const Workflow w = parse_workflow(kTwoRules);
  ASSERT_EQ(w.rules.size(), 2u);
  EXPECT_EQ(w.testsamplesize, 3);
  EXPECT_EQ(w.image, "registry/bwa:1");
  const Rule& align = w.rules[1];
  EXPECT_EQ(align.name, "align");
  EXPECT_EQ(align.line, 8);
  ASSERT_TRUE(align.resources);
  EXPECT_EQ(align.resources->machine, "n2-standard-4");
  EXPECT_EQ(align.resources->disk_gb, 200);
  EXPECT_EQ(align.params.at(0).key, "ref");
  EXPECT_TRUE(align.shell->find("{sampleID}") != std::string::npos);
}

TEST(ParseWorkflow, UnknownKeyword) {
  try {
    parse_workflow("rule a:\n    gpu: 1\n    shell: \"x\"\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownKeyword);
  }
}

TEST(ParseWorkflow, EmptySourceHasNoRules) {
  try {
    parse_workflow("");
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_NE(e.detail().find("no rules defined"), std::string::npos);
  }
}

TEST(ParseWorkflow, CommandPresence) {
  try {
    parse_workflow("rule a:\n    output: [\"x\"]\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingCommand);
  }
  try {
    parse_workflow("rule a:\n    shell: \"x\"\n    script: \"s.sh\"\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BothCommands);
  }
}

TEST(ParseWorkflow, DuplicatesAreErrors) {
  try {
    parse_workflow("rule a:\n    shell: \"x\"\nrule a:\n    shell: \"y\"\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DuplicateRule);
  }
  EXPECT_THROW(parse_workflow("image : \"a\"\nimage : \"b\"\nrule a:\n    shell: \"x\"\n"), Error);
}

TEST(ParseWorkflow, SyntaxErrorCitesLine) {
  try {
    parse_workflow("rule a:\n    shell: \"x\"\n\n    output: [\"unterminated\n");
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.line(), 4);
  }
}

TEST(ParseWorkflow, DiskBelowMinimum) { EXPECT_THROW(parse_workflow("rule a:\n    resources: [disk_gb=5]\n    shell: \"x\"\n"), SyntaxError); }

TEST(ParseWorkflow, ConfigPairsAreExposed) {
  const Workflow w = parse_workflow("config : \"genome=hg38, threads=4\"\nrule a:\n    shell: \"x {config.genome}\"\n");
  EXPECT_EQ(w.config_values.at("genome"), "hg38");
  EXPECT_EQ(w.config_values.at("threads"), "4");
  const TaskPlan p = compile_task(w, "S1", defaults());
  EXPECT_EQ(p.steps[0].resolved_command, "x hg38");
}

TEST(ValidateWorkflow, SelfLoopIsACycle) {
  const Workflow w = parse_workflow(R"(
rule A:
    output: ["x.bam"]
    shell: "a"
rule B:
    input: ["x.bam", "y.bam"]
    output: ["y.bam"]
    shell: "b"
)");
  const auto d = validate_workflow(w, sample_catalog());
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].rule, "B");
  EXPECT_NE(d[0].message.find("cycle involving B"), std::string::npos);
}

TEST(ValidateWorkflow, UnsupportedSeries) {
  const Workflow w = parse_workflow("rule a:\n    resources: [machine=\"c2-standard-4\"]\n    shell: \"x\"\n");
  const auto d = validate_workflow(w, sample_catalog());
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NE(d[0].message.find("unsupported series"), std::string::npos);
  EXPECT_EQ(d[0].line, 1);
}

TEST(ValidateWorkflow, ConsistentWorkflowIsClean) {
  EXPECT_TRUE(validate_workflow(parse_workflow(kTwoRules), sample_catalog()).empty());
  EXPECT_TRUE(validate_workflow(parse_workflow(kChain), sample_catalog()).empty());
}

TEST(ValidateWorkflow, UndeclaredPlaceholder) {
  const Workflow w = parse_workflow("rule a:\n    shell: \"x {params.missing} {nope}\"\n");
  EXPECT_EQ(validate_workflow(w, sample_catalog()).size(), 2u);
}

TEST(CompileTask, LinearChain) {
  const TaskPlan p = compile_task(parse_workflow(kChain), "S1", defaults());
  ASSERT_EQ(p.steps.size(), 3u);
  EXPECT_EQ(p.edges.size(), 2u);
  EXPECT_EQ(p.steps[0].rule_name, "download");
  EXPECT_EQ(p.steps[2].rule_name, "refine");
  for (const auto& s : p.steps) {
    EXPECT_NE(s.resolved_command.find("S1"), std::string::npos);
    EXPECT_EQ(s.resolved_command.find('{'), std::string::npos);
  }
  EXPECT_EQ(p.sink_outputs(), std::vector<std::string>{"S1.refined.bam"});
}

TEST(CompileTask, OneStepTask) {
  const Workflow w = parse_workflow("rule quantify:\n    output: [\"{sampleID}.tsv\"]\n    shell: \"q > {output}\"\n");
  const TaskPlan p = compile_task(w, "S9", defaults());
  EXPECT_EQ(p.steps.size(), 1u);
  EXPECT_TRUE(p.edges.empty());
}

TEST(CompileTask, IndependentRulesKeepSourceOrder) {
  const Workflow w = parse_workflow(R"(
rule second:
    output: ["b"]
    shell: "b"
rule first:
    output: ["a"]
    shell: "a"
)");
  const TaskPlan p = compile_task(w, "S", defaults());
  EXPECT_TRUE(p.edges.empty());
  EXPECT_EQ(p.steps[0].rule_name, "second");
}

TEST(CompileTask, UnresolvedInput) {
  const Workflow w = parse_workflow("rule a:\n    input: [\"missing.txt\"]\n    shell: \"x\"\n");
  try {
    compile_task(w, "S", defaults());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnresolvedInput);
  }
}

TEST(CompileTask, ExternalAndReferenceInputsNeedNoProducer) {
  const Workflow w = parse_workflow(
      "rule a:\n    input: [\"gs://b/{sampleID}.fq\", \"/abs/x\", \"{reference}/g.fa\"]\n    shell: \"x {input}\"\n");
  const TaskPlan p = compile_task(w, "S", defaults(), "ref");
  EXPECT_EQ(p.steps[0].resolved_inputs, (std::vector<std::string>{"gs://b/S.fq", "/abs/x", "ref/g.fa"}));
}

TEST(CompileTask, ResourceDefaulting) {
  const Workflow w = parse_workflow(R"(
rule a:
    output: ["a"]
    resources: [machine="n2-standard-4"]
    shell: "a"
rule b:
    output: ["b"]
    shell: "b"
)");
  const TaskPlan p = compile_task(w, "S", defaults());
  EXPECT_EQ(p.steps[0].resources.machine, "n2-standard-4");
  EXPECT_EQ(p.steps[0].resources.disk_gb, 100);
  EXPECT_EQ(p.steps[1].resources, defaults());
}

TEST(CompileTask, CycleError) {
  const Workflow w = parse_workflow(R"(
rule a:
    input: ["b"]
    output: ["a"]
    shell: "a"
rule b:
    input: ["a"]
    output: ["b"]
    shell: "b"
)");
  try {
    compile_task(w, "S", defaults());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::CycleError);
  }
}

// Random DAG workflows: rule i may consume outputs of rules declared anywhere, as long as the
// producer has a lower generation index.
struct Generated {
  Workflow workflow;
  std::set<std::pair<std::string, std::string>> edges;
};

Generated random_workflow(std::mt19937_64& rng) {
  const int n = std::uniform_int_distribution<int>(1, 8)(rng);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  Generated g;
  std::vector<Rule> rules(n);
  std::bernoulli_distribution coin(0.35);
  const char* machines[] = {"e2-standard-4", "n2-highmem-16", "n1-highcpu-8"};
  for (int i = 0; i < n; ++i) {
    Rule& r = rules[i];
    r.name = "r" + std::to_string(i);
    r.output = {"{sampleID}.o" + std::to_string(i), "{sampleID}/" + std::to_string(i) + ".idx"};
    for (int j = 0; j < i; ++j) {
      if (coin(rng)) {
        r.input.push_back("{sampleID}.o" + std::to_string(j));
        g.edges.insert({"r" + std::to_string(j), r.name});
      }
    }
    if (coin(rng)) r.input.push_back("gs://bucket/{sampleID}.raw");
    if (coin(rng)) r.params.push_back({"tag", "t{sampleID}"});
    if (coin(rng)) {
      ResourceRequest req;
      if (coin(rng)) req.machine = machines[rng() % 3];
      if (coin(rng)) req.disk_gb = 10 + static_cast<int>(rng() % 500);
      if (coin(rng)) req.disk_class = DiskClass::Ssd;
      r.resources = req;
    }
    if (coin(rng)) {
      r.script = "scripts/step" + std::to_string(i) + ".sh";
    } else {
      r.shell = "run \"{sampleID}\" \\ {input} > {output} && awk '{{print}}'\t# " + std::to_string(i);
    }
    if (coin(rng)) r.metawrapper = "0.1/bio/x";
  }
  for (int pos : order) g.workflow.rules.push_back(rules[pos]);
  if (coin(rng)) g.workflow.testsamplesize = 1 + static_cast<int>(rng() % 5);
  if (coin(rng)) g.workflow.referencefile = "refs";
  if (coin(rng)) g.workflow.workdir = "/scratch";
  if (coin(rng)) {
    g.workflow.config = "a=1, b=two";
    g.workflow.config_values = parse_config_pairs(*g.workflow.config);
  }
  return g;
}

TEST(WorkflowProperty, SerializeParseRoundTrip) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    const Workflow w = random_workflow(rng).workflow;
    const std::string text = serialize_workflow(w);
    Workflow back = parse_workflow(text, w.name);
    EXPECT_EQ(back, w) << text;
    EXPECT_EQ(serialize_workflow(back), text);
  }
}

TEST(WorkflowProperty, EdgesMatchBruteForce) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 300; ++i) {
    const Generated g = random_workflow(rng);
    const TaskPlan p = compile_task(g.workflow, "S" + std::to_string(i), defaults());
    ASSERT_EQ(p.steps.size(), g.workflow.rules.size());

    // Oracle: compare every (output, input) pair of resolved paths.
    std::set<std::pair<std::string, std::string>> brute;
    for (const auto& producer : p.steps) {
      for (const auto& consumer : p.steps) {
        for (const auto& out : producer.resolved_outputs) {
          if (std::count(consumer.resolved_inputs.begin(), consumer.resolved_inputs.end(), out)) {
            brute.insert({producer.rule_name, consumer.rule_name});
          }
        }
      }
    }
    const std::set<std::pair<std::string, std::string>> got(p.edges.begin(), p.edges.end());
    EXPECT_EQ(got, brute);
    EXPECT_EQ(got, g.edges);

    std::map<std::string, std::size_t> pos;
    for (std::size_t k = 0; k < p.steps.size(); ++k) pos[p.steps[k].rule_name] = k;
    for (const auto& [a, b] : p.edges) EXPECT_LT(pos[a], pos[b]);
    EXPECT_EQ(compile_task(g.workflow, "S" + std::to_string(i), defaults()), p);
  }
}

TEST(WorkflowProperty, DefaultsOnlyFillUnsetFields) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200; ++i) {
    const Generated g = random_workflow(rng);
    const TaskPlan p = compile_task(g.workflow, "S", defaults());
    for (const auto& step : p.steps) {
      const Rule& rule = *g.workflow.find_rule(step.rule_name);
      const ResourceRequest req = rule.resources.value_or(ResourceRequest{});
      EXPECT_EQ(step.resources.machine, req.machine ? req.machine : defaults().machine);
      EXPECT_EQ(step.resources.disk_gb, req.disk_gb ? req.disk_gb : defaults().disk_gb);
      EXPECT_EQ(step.resources.disk_class, req.disk_class ? req.disk_class : defaults().disk_class);
    }
  }
}

TEST(PlanJson, HasStepsAndEdges) {
  const auto doc = plan_to_json(compile_task(parse_workflow(kChain), "S1", defaults()));
  EXPECT_EQ(doc.at("sample_id"), "S1");
  EXPECT_EQ(doc.at("steps").size(), 3u);
  EXPECT_EQ(doc.at("edges").size(), 2u);
}

}  // namespace
}  // namespace gflow
