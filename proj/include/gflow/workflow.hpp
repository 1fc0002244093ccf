#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gflow/catalog.hpp"
#include "gflow/types.hpp"

namespace gflow {

struct Param {
  std::string key;
  std::string value;

  bool operator==(const Param&) const = default;
};

struct Rule {
  std::string name;
  std::vector<std::string> input;
  std::vector<std::string> output;
  std::vector<Param> params;
  std::optional<ResourceRequest> resources;
  std::optional<std::string> shell;
  std::optional<std::string> script;
  // Stored verbatim; the engine attaches no behavior to it.
  std::optional<std::string> metawrapper;
  // 1-based line of the `rule` header; 0 when built programmatically. Not part of equality.
  int line = 0;

  bool operator==(const Rule& other) const;
};

struct Workflow {
  std::string name = "workflow";
  std::vector<Rule> rules;
  std::optional<std::string> workdir;
  std::optional<std::string> configfile;
  // Raw `config` directive text ("key=value, ..."); its pairs are merged into config_values.
  std::optional<std::string> config;
  std::optional<std::string> image;
  std::optional<std::string> referencefile;
  std::optional<int> testsamplesize;
  // Values visible to templates as {config.<key>}: configfile entries overridden by `config` pairs.
  std::map<std::string, std::string> config_values;

  bool operator==(const Workflow&) const = default;

  const Rule* find_rule(std::string_view rule_name) const;
};

// Parses the rule grammar. Throws SyntaxError, Error(DuplicateRule | UnknownKeyword | MissingCommand | BothCommands).
Workflow parse_workflow(std::string_view text, std::string name = "workflow");

// Canonical source text; parse_workflow(serialize_workflow(w)) == w.
std::string serialize_workflow(const Workflow& workflow);

// Parses "k=v, k2=v2" into pairs. Throws SyntaxError (line 0) on a malformed pair.
std::map<std::string, std::string> parse_config_pairs(std::string_view text);

struct Diagnostic {
  std::string rule;  // empty for workflow-level findings
  int line = 0;
  std::string message;

  bool operator==(const Diagnostic&) const = default;
};

// Empty iff machines resolve in the catalog, placeholders are declared and rule dependencies are acyclic.
std::vector<Diagnostic> validate_workflow(const Workflow& workflow, const MachineCatalog& catalog);

struct StepSpec {
  std::string rule_name;
  std::string resolved_command;
  std::vector<std::string> resolved_inputs;
  std::vector<std::string> resolved_outputs;
  ResourceRequest resources;
  std::string image;
  // Exported to the step's process; scripts read their sample and paths from here.
  std::vector<std::pair<std::string, std::string>> environment;

  bool operator==(const StepSpec&) const = default;
};

struct TaskPlan {
  std::string sample_id;
  std::vector<StepSpec> steps;
  // (producer rule, consumer rule), sorted.
  std::vector<std::pair<std::string, std::string>> edges;

  bool operator==(const TaskPlan&) const = default;

  // Index of the step for `rule_name`; throws InvalidArgument.
  std::size_t step_index(std::string_view rule_name) const;
  // Outputs no other step of this plan consumes.
  std::vector<std::string> sink_outputs() const;
};

// Inputs with a URI scheme ("gs://...", "store://...") or an absolute path need no producer.
bool is_external_path(std::string_view path);

// One step per rule, edges from exact resolved-path matches, topological order with source order
// among independent steps. Throws Error(UnresolvedInput | CycleError).
TaskPlan compile_task(const Workflow& workflow, std::string_view sample_id, const ResourceRequest& defaults,
                      std::string_view reference_root = "reference");

nlohmann::ordered_json plan_to_json(const TaskPlan& plan);

}  // namespace gflow
