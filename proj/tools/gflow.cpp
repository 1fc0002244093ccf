// gflow: workflow lifecycle from the command line.
//
// Exit codes: 0 success, 1 some task exhausted its retries, 2 usage or parse error, 3 environment error.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gflow/error.hpp"
#include "gflow/object_store.hpp"
#include "gflow/project.hpp"

namespace {

using namespace gflow;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitUsage = 2;
constexpr int kExitEnvironment = 3;

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::SyntaxError:
    case Errc::DuplicateRule:
    case Errc::UnknownKeyword:
    case Errc::MissingCommand:
    case Errc::BothCommands:
    case Errc::UnresolvedInput:
    case Errc::CycleError:
    case Errc::UnsupportedSeries:
    case Errc::UnknownFamily:
    case Errc::MalformedName:
    case Errc::ParseError:
    case Errc::InconsistentShape:
    case Errc::DuplicateMachine:
    case Errc::InvalidUri:
    case Errc::EmptySampleList:
    case Errc::DuplicateSampleId:
    case Errc::UnknownDiskClass:
    case Errc::IncompleteSpec:
    case Errc::InvalidArgument:
      return kExitUsage;
    default:
      return kExitEnvironment;
  }
}

struct Flags {
  std::string config_file;
  std::string backend;
  std::string catalog;
  std::string samples;
  std::string store_root;
  std::uint64_t seed = 0;
  std::string workload;
  int max_retries = 0;
  std::string headroom;
  std::vector<std::string> capacity;
  std::string lease_hours;
  std::string default_machine;
  int default_disk_gb = 0;
  int test_samples = 0;
  std::string container;
  double step_timeout = 0;
  bool fsync = false;
};

struct Opts {
  CLI::Option* backend;
  CLI::Option* catalog;
  CLI::Option* samples;
  CLI::Option* store_root;
  CLI::Option* seed;
  CLI::Option* workload;
  CLI::Option* max_retries;
  CLI::Option* headroom;
  CLI::Option* capacity;
  CLI::Option* lease_hours;
  CLI::Option* default_machine;
  CLI::Option* default_disk;
  CLI::Option* test_samples;
  CLI::Option* container;
  CLI::Option* step_timeout;
  CLI::Option* fsync;
  CLI::Option* config;
};

// "machine=n" or a bare "n" for every machine.
std::map<std::string, int> parse_capacity(const std::vector<std::string>& items) {
  std::map<std::string, int> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    const std::string machine = eq == std::string::npos ? "*" : item.substr(0, eq);
    const std::string count = eq == std::string::npos ? item : item.substr(eq + 1);
    try {
      std::size_t used = 0;
      const int n = std::stoi(count, &used);
      if (used != count.size()) throw std::invalid_argument(count);
      out[machine] = n;
    } catch (const std::exception&) {
      throw Error(Errc::InvalidArgument, "capacity '" + item + "' is not <machine>=<n> or <n>");
    }
  }
  return out;
}

// Built-in defaults, then the config file, then flags and GFLOW_* variables.
EngineConfig resolve_config(const Flags& f, const Opts& o) {
  EngineConfig c;
  if (*o.config) c = load_engine_config(f.config_file, c);
  if (*o.backend) c.backend = parse_backend(f.backend);
  if (*o.catalog) c.catalog = f.catalog;
  if (*o.samples) c.samples = f.samples;
  if (*o.store_root) c.store_root = f.store_root;
  if (*o.seed) c.seed = f.seed;
  if (*o.workload) c.workload = f.workload;
  if (*o.max_retries) c.max_retries = f.max_retries;
  if (*o.headroom) c.headroom = parse_rational(f.headroom);
  if (*o.capacity) {
    auto cap = parse_capacity(f.capacity);
    if (!cap.count("*")) cap["*"] = c.capacity.count("*") ? c.capacity.at("*") : 1;
    c.capacity = std::move(cap);
  }
  if (*o.lease_hours) c.lease_hours = parse_rational(f.lease_hours);
  if (*o.default_machine) c.default_machine = f.default_machine;
  if (*o.default_disk) c.default_disk_gb = f.default_disk_gb;
  if (*o.test_samples) c.test_samples = f.test_samples;
  if (*o.container) c.container_template = f.container;
  if (*o.step_timeout) c.step_timeout_seconds = f.step_timeout;
  if (*o.fsync) c.fsync = f.fsync;
  validate_config(c);
  return c;
}

void print_report(const PipelineResult& result) {
  const RunReport& r = result.report;
  std::cout << "job " << result.job_id << "\n";
  if (!result.reused_samples.empty()) {
    std::cout << "reused from test run: " << result.reused_samples.size() << " sample(s)\n";
  }
  std::size_t succeeded = 0;
  if (auto it = r.counts.find(TaskState::Succeeded); it != r.counts.end()) succeeded = it->second;
  std::size_t total = 0;
  for (const auto& [state, n] : r.counts) total += n;
  std::cout << "succeeded " << succeeded << "/" << total << ", makespan " << to_fixed(r.makespan, 2) << " h\n";
  std::cout << "results written " << r.results_written << ", already present " << r.results_present << "\n";
  if (!r.exhausted.empty()) {
    std::cout << "exhausted:";
    for (const auto& s : r.exhausted) std::cout << " " << s;
    std::cout << "\n";
  }
  if (!result.cost.samples.empty()) std::cout << render_cost_table(result.cost);
}

int run(int argc, char** argv) {
  CLI::App app{"gflow: run sample-parallel workflows and size their machines"};
  app.require_subcommand(1);
  app.fallthrough();

  Flags f;
  Opts o{};
  o.config = app.add_option("--config", f.config_file, "Engine config file (JSON)")->envname("GFLOW_CONFIG");
  o.backend = app.add_option("--backend", f.backend, "local or sim")->envname("GFLOW_BACKEND");
  o.catalog = app.add_option("--catalog", f.catalog, "Machine catalog (JSON)")->envname("GFLOW_CATALOG");
  o.samples = app.add_option("--samples", f.samples, "Sample list, one id per line")->envname("GFLOW_SAMPLES");
  o.store_root = app.add_option("--store-root", f.store_root, "Object store root directory")->envname("GFLOW_STORE_ROOT");
  o.seed = app.add_option("--seed", f.seed, "Sim seed")->envname("GFLOW_SEED");
  o.workload = app.add_option("--workload", f.workload, "Sim workload spec (JSON)")->envname("GFLOW_WORKLOAD");
  o.max_retries = app.add_option("--max-retries", f.max_retries, "Retries per task")->envname("GFLOW_MAX_RETRIES");
  o.headroom = app.add_option("--headroom", f.headroom, "Multiplier on profiled peaks")->envname("GFLOW_HEADROOM");
  o.capacity = app.add_option("--capacity", f.capacity, "Pool slots: <machine>=<n> or <n>")
                   ->envname("GFLOW_CAPACITY")
                   ->delimiter(',');
  o.lease_hours = app.add_option("--lease-hours", f.lease_hours, "Task lease duration")->envname("GFLOW_LEASE_HOURS");
  o.default_machine =
      app.add_option("--default-machine", f.default_machine, "Machine for rules without resources")
          ->envname("GFLOW_DEFAULT_MACHINE");
  o.default_disk = app.add_option("--default-disk", f.default_disk_gb, "Disk GB for rules without resources")
                       ->envname("GFLOW_DEFAULT_DISK");
  o.test_samples = app.add_option("--test-samples", f.test_samples, "Test run size when the workflow sets none")
                       ->envname("GFLOW_TEST_SAMPLES");
  o.container = app.add_option("--container", f.container, "Command template with {image} and {command}")
                    ->envname("GFLOW_CONTAINER");
  o.step_timeout = app.add_option("--step-timeout", f.step_timeout, "Local step timeout, seconds")
                       ->envname("GFLOW_STEP_TIMEOUT");
  o.fsync = app.add_flag("--fsync", f.fsync, "fsync every event log append")->envname("GFLOW_FSYNC");

  std::string workflow_path, project, job_id, optparams, resume_job, uri, dst, plan_sample;
  bool rerun_tested = false, all = false, json_out = false;

  auto* plan = app.add_subcommand("plan", "Parse and validate a workflow; print its normalized plan");
  plan->add_option("workflow", workflow_path)->required();
  plan->add_option("--sample", plan_sample, "Sample id to resolve templates with");

  auto* create = app.add_subcommand("create", "Create buckets and the project tree, upload references");
  create->add_option("workflow", workflow_path)->required();
  create->add_option("--project", project, "Project id (default: from the workflow name)")->envname("GFLOW_PROJECT");

  auto* optimize = app.add_subcommand("optimize", "Test run under defaults, then write optparams.json");
  optimize->add_option("project", project)->required();

  auto* runcmd = app.add_subcommand("run", "Run every sample");
  runcmd->add_option("project", project)->required();
  runcmd->add_option("--optparams", optparams, "Recommendation file from optimize");
  runcmd->add_flag("--rerun-tested", rerun_tested, "Also rerun samples finished by the test run");
  runcmd->add_option("--resume", resume_job, "Recover and continue an interrupted job");

  auto* teardown = app.add_subcommand("teardown", "Remove buckets and logs; keep the cost record unless --all");
  teardown->add_option("project", project)->required();
  teardown->add_flag("--all", all, "Remove the project record too");

  auto* status = app.add_subcommand("status", "Progress of a job, read from its event log");
  status->add_option("job", job_id)->required();

  auto* cost = app.add_subcommand("cost", "Cost of the last run of a project");
  cost->add_option("project", project)->required();
  cost->add_flag("--json", json_out, "Print the stored JSON report");

  auto* fetch = app.add_subcommand("fetch", "Copy results to a local directory without overwriting");
  fetch->add_option("uri", uri, "store://bucket[/prefix]")->required();
  fetch->add_option("dst", dst)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    EngineConfig config = resolve_config(f, o);

    if (*plan) {
      const MachineCatalog catalog = load_engine_catalog(config);
      const Workflow w = load_job_file(workflow_path, catalog);
      nlohmann::ordered_json doc;
      doc["workflow"] = w.name;
      doc["rules"] = w.rules.size();
      doc["plan"] = plan_to_json(compile_task(w, plan_sample.empty() ? "SAMPLE" : plan_sample, config.defaults()));
      std::cout << doc.dump(2) << "\n";
      return kExitOk;
    }
    if (*create) {
      const ProjectEnv env = create_architecture(
          workflow_path, config, project.empty() ? std::nullopt : std::optional<std::string>(project));
      std::cout << "project " << env.project_id << "\n";
      std::cout << "buckets " << env.reference_bucket << " " << env.results_bucket << " " << env.staging_bucket
                << "\n";
      std::cout << "references uploaded " << env.uploaded_references.size() << "\n";
      std::cout << "project dir " << env.project_dir.string() << "\n";
      return kExitOk;
    }
    if (*optimize) {
      const ProjectEnv env = open_project(config.store_root, project);
      const OptimizeResult r = find_optimized_param(env, config);
      if (r.clamped) std::cerr << "warning: test sample size clamped to " << r.test_samples << "\n";
      std::cout << "test job " << r.job_id << " on " << r.test_samples << " sample(s)\n";
      for (const auto& [rule, rec] : r.recommendation.rules) {
        std::cout << "  " << rule << ": " << rec.machine << ", " << rec.disk_gb << " GB " << to_string(rec.disk_class)
                  << "\n";
      }
      std::cout << "test cost per sample " << render_money(r.test_cost.mean_per_sample, r.test_cost.currency) << "\n";
      std::cout << "wrote " << r.optparams_path.string() << "\n";
      return kExitOk;
    }
    if (*runcmd) {
      const ProjectEnv env = open_project(config.store_root, project);
      PipelineResult result;
      if (!resume_job.empty()) {
        result = resume_pipeline(env, config, resume_job);
      } else {
        result = run_pipeline(env, config, optparams.empty() ? std::nullopt : std::optional<fs::path>(optparams),
                              rerun_tested);
      }
      print_report(result);
      return result.report.exhausted.empty() ? kExitOk : kExitPartial;
    }
    if (*teardown) {
      const RemovalReport r = remove_project(config.store_root, project, all);
      std::cout << "removed " << r.buckets_removed.size() << " bucket(s)";
      std::cout << (r.record_kept ? "; project record kept\n" : "; project removed\n");
      return kExitOk;
    }
    if (*status) {
      std::cout << render_status(job_status(config.store_root, job_id));
      return kExitOk;
    }
    if (*cost) {
      const nlohmann::json record = project_record(config.store_root, project);
      if (!record.contains("final_cost")) {
        throw Error(Errc::StateError, "project '" + project + "' has no finished run");
      }
      if (json_out) {
        std::cout << record.at("final_cost").dump(2) << "\n";
      } else {
        std::cout << render_cost_table(cost_report_from_json(record.at("final_cost")));
      }
      return kExitOk;
    }
    if (*fetch) {
      ObjectStore store(config.store_root);
      const CopyReport r = store.copy_no_clobber(StoreUri::parse(uri), dst);
      std::cout << "copied " << r.copied << ", skipped " << r.skipped << "\n";
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "gflow: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "gflow: " << e.what() << "\n";
    return kExitEnvironment;
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
