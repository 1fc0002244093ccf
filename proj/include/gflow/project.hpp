#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gflow/catalog.hpp"
#include "gflow/optimizer.hpp"
#include "gflow/orchestrator.hpp"
#include "gflow/scheduler.hpp"
#include "gflow/workflow.hpp"

namespace gflow {

enum class Backend { Local, Sim };

std::string_view to_string(Backend backend);
Backend parse_backend(std::string_view text);

inline constexpr std::string_view kDefaultMachine = "e2-standard-16";
inline constexpr int kDefaultDiskGb = 100;

struct EngineConfig {
  Backend backend = Backend::Sim;
  // Concurrent step slots per machine type; "*" applies to machines not listed.
  std::map<std::string, int> capacity{{"*", 4}};
  int max_retries = kDefaultMaxRetries;
  Rational headroom = kDefaultHeadroom;
  Rational lease_hours = kDefaultLeaseHours;
  std::string default_machine = std::string(kDefaultMachine);
  int default_disk_gb = kDefaultDiskGb;
  DiskClass default_disk_class = DiskClass::Balanced;
  int test_samples = kDefaultTestSamples;
  std::filesystem::path catalog;
  std::filesystem::path store_root = "gflow-store";
  std::filesystem::path samples;
  std::filesystem::path workload;
  std::optional<std::uint64_t> seed;
  std::string container_template;
  std::optional<double> step_timeout_seconds;
  bool fsync = false;

  ResourceRequest defaults() const { return {default_machine, default_disk_gb, default_disk_class}; }
};

// Throws Error(InvalidArgument) on a capacity < 1, an unparsable default machine, headroom < 1 and the like.
void validate_config(const EngineConfig& config);

// Reads the fields present in a JSON config file over `base`. Throws ParseError, IoFailure.
EngineConfig load_engine_config(const std::filesystem::path& path, EngineConfig base = {});
// Same fields from a JSON object; relative paths resolve against `base_dir` when it is not empty.
EngineConfig engine_config_from_json(const nlohmann::json& doc, EngineConfig base = {},
                                     const std::filesystem::path& base_dir = {});
nlohmann::ordered_json config_to_json(const EngineConfig& config);

// Catalog from `config.catalog`, else the sample catalog shipped with the sources.
MachineCatalog load_engine_catalog(const EngineConfig& config);
std::filesystem::path default_catalog_path();

// Parses and validates a workflow file: the name is the file stem, `configfile` is read relative to the
// file, relative script paths are made absolute. Syntax errors are rethrown prefixed with the path;
// validation failures become Error(ParseError) listing "path:line: message" diagnostics.
Workflow load_job_file(const std::filesystem::path& path, const MachineCatalog& catalog);

struct ProjectEnv {
  std::string project_id;
  std::filesystem::path store_root;
  std::string reference_bucket;
  std::string results_bucket;
  std::string staging_bucket;
  std::filesystem::path project_dir;
  std::filesystem::path event_log_dir;
  std::filesystem::path work_dir;
  std::filesystem::path catalog_path;
  std::filesystem::path samples_path;
  std::filesystem::path workflow_path;
  std::string created_at;
  std::optional<StoreUri> reference_root;  // where staged references come from, if any
  std::vector<std::string> uploaded_references;

  StoreUri results_root() const { return StoreUri(results_bucket); }
};

nlohmann::ordered_json env_to_json(const ProjectEnv& env);
ProjectEnv env_from_json(const nlohmann::json& doc);

std::filesystem::path projects_dir(const std::filesystem::path& store_root);
std::filesystem::path project_dir(const std::filesystem::path& store_root, const std::string& project_id);

// Lowercase letters, digits and '-'; other characters become '-'.
std::string project_id_from_name(std::string_view name);

// Creates the three buckets and the project tree, uploads a local `referencefile`, and stores the
// workflow and config. Throws AlreadyExists, IoFailure.
ProjectEnv create_architecture(const std::filesystem::path& workflow_path, const EngineConfig& config,
                               std::optional<std::string> project_id = std::nullopt);

// Throws StateError when the project has no architecture (never created or torn down).
ProjectEnv open_project(const std::filesystem::path& store_root, const std::string& project_id);

// The workflow stored with the project.
Workflow project_workflow(const ProjectEnv& env, const MachineCatalog& catalog);

struct OptimizeResult {
  Recommendation recommendation;
  ResourceProfile profile;
  std::vector<std::string> completed_samples;
  std::string job_id;
  int test_samples = 0;
  bool clamped = false;
  CostReport test_cost;
  std::filesystem::path optparams_path;
};

// Test run of the first testsamplesize samples under the defaults, then recommend(). Writes optparams.json.
OptimizeResult find_optimized_param(const ProjectEnv& env, const EngineConfig& config);

struct OptParamsFile {
  Recommendation recommendation;
  std::vector<std::string> completed_samples;
  std::optional<Rational> test_mean_cost;  // per-sample cost of the test run under defaults
};

OptParamsFile load_optparams(const std::filesystem::path& path, const MachineCatalog& catalog);

struct PipelineResult {
  std::string job_id;
  RunReport report;
  CostReport cost;
  std::vector<std::string> reused_samples;  // finished in the test run and not run again
  std::filesystem::path event_log;
};

// Runs the full sample list (minus samples already finished in the test run, unless `rerun_tested`),
// with `optparams` applied when given. Records the cost in the project record.
PipelineResult run_pipeline(const ProjectEnv& env, const EngineConfig& config,
                            const std::optional<std::filesystem::path>& optparams, bool rerun_tested = false);

// Continues a job whose controller stopped: recovers the log and drives the remaining tasks.
PipelineResult resume_pipeline(const ProjectEnv& env, const EngineConfig& config, const std::string& job_id);

struct RemovalReport {
  std::vector<std::string> buckets_removed;
  bool record_kept = true;
};

// all=false keeps record.json (cost check); all=true removes the project entirely. Throws UnknownProject.
RemovalReport remove_project(const std::filesystem::path& store_root, const std::string& project_id, bool all);

// The preserved project record. Throws UnknownProject.
nlohmann::json project_record(const std::filesystem::path& store_root, const std::string& project_id);

// Status of a job by id, read from its event log without writing. Throws UnknownJob.
JobStatus job_status(const std::filesystem::path& store_root, const std::string& job_id);

std::unique_ptr<StepExecutor> make_executor(const ProjectEnv& env, const EngineConfig& config,
                                            const MachineCatalog& catalog, ObjectStore& store,
                                            const std::string& job_id, const Rational& start);

}  // namespace gflow
