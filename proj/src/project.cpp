#include "gflow/project.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

#include "gflow/error.hpp"
#include "gflow/local_runner.hpp"
#include "gflow/workload.hpp"

#ifndef GFLOW_DATA_DIR
#define GFLOW_DATA_DIR "data"
#endif

namespace gflow {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string read_text(const fs::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, std::string("cannot read ") + what + " " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

json read_json(const fs::path& path, const char* what) {
  const std::string text = read_text(path, what);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());
    out << text;
    if (!out.flush()) throw Error(Errc::IoFailure, "cannot write " + path.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(Errc::IoFailure, "cannot write " + path.string() + ": " + ec.message());
}

void write_json(const fs::path& path, const ordered_json& doc) { write_text(path, doc.dump(2) + "\n"); }

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string random_hex(int digits) {
  std::random_device rd;
  std::uniform_int_distribution<int> nibble(0, 15);
  std::string out;
  for (int i = 0; i < digits; ++i) out += "0123456789abcdef"[nibble(rd)];
  return out;
}

fs::path absolute_or_empty(const fs::path& p) { return p.empty() ? p : fs::absolute(p).lexically_normal(); }

// Flat JSON object, or one `key = value` / `key: value` per line.
std::map<std::string, std::string> read_config_file(const fs::path& path) {
  const std::string text = read_text(path, "configfile");
  std::map<std::string, std::string> values;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::exception& e) {
      throw Error(Errc::ParseError, path.string() + ": " + e.what());
    }
    for (const auto& [k, v] : doc.items()) values[k] = v.is_string() ? v.get<std::string>() : v.dump();
    return values;
  }
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto sep = line.find_first_of("=:");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    if (trim(line).empty()) continue;
    if (sep == std::string::npos) {
      throw Error(Errc::ParseError, path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    values[trim(line.substr(0, sep))] = trim(line.substr(sep + 1));
  }
  return values;
}

json load_record(const fs::path& pdir) {
  const fs::path path = pdir / "record.json";
  if (!fs::exists(path)) return json::object();
  return read_json(path, "project record");
}

void save_record(const fs::path& pdir, const json& record) {
  write_text(pdir / "record.json", record.dump(2) + "\n");
}

MachineCatalog env_catalog(const ProjectEnv& env, const EngineConfig& config) {
  if (!config.catalog.empty()) return load_catalog(config.catalog);
  if (!env.catalog_path.empty()) return load_catalog(env.catalog_path);
  return load_engine_catalog(config);
}

std::vector<std::string> env_samples(const ProjectEnv& env, const EngineConfig& config) {
  const fs::path path = !config.samples.empty() ? config.samples : env.samples_path;
  if (path.empty()) throw Error(Errc::InvalidArgument, "no sample list given (--samples)");
  return load_sample_list(path);
}

Job make_job(const ProjectEnv& env, const EngineConfig& config, const Workflow& workflow,
             std::vector<std::string> samples, std::string job_id) {
  Job job;
  job.job_id = std::move(job_id);
  job.workflow = workflow;
  job.sample_ids = std::move(samples);
  job.defaults = config.defaults();
  job.max_retries = config.max_retries;
  job.result_root = env.results_root();
  job.lease_hours = config.lease_hours;
  job.pool_capacity = config.capacity;
  return job;
}

void record_run(const ProjectEnv& env, const PipelineResult& result) {
  json record = load_record(env.project_dir);
  json entry = {{"job_id", result.job_id},
                {"finished_at", utc_now()},
                {"exhausted", result.report.exhausted},
                {"reused_samples", result.reused_samples},
                {"cost", cost_report_to_json(result.cost)}};
  record["runs"].push_back(entry);
  record["final_cost"] = cost_report_to_json(result.cost);
  save_record(env.project_dir, record);
  write_json(env.event_log_dir / (result.job_id + ".cost.json"), cost_report_to_json(result.cost));
}

}  // namespace

std::string_view to_string(Backend backend) { return backend == Backend::Local ? "local" : "sim"; }

Backend parse_backend(std::string_view text) {
  if (text == "local") return Backend::Local;
  if (text == "sim") return Backend::Sim;
  throw Error(Errc::InvalidArgument, "backend must be 'local' or 'sim', not '" + std::string(text) + "'");
}

void validate_config(const EngineConfig& config) {
  for (const auto& [machine, capacity] : config.capacity) {
    if (capacity < 1) throw Error(Errc::InvalidArgument, "capacity for '" + machine + "' must be >= 1");
    if (machine != "*") {
      try {
        parse_machine_name(machine);
      } catch (const Error& e) {
        throw Error(Errc::InvalidArgument, "capacity names bad machine '" + machine + "': " + e.detail());
      }
    }
  }
  if (config.max_retries < 0) throw Error(Errc::InvalidArgument, "max retries must be >= 0");
  if (config.headroom < 1) throw Error(Errc::InvalidArgument, "headroom must be >= 1");
  if (config.lease_hours <= 0) throw Error(Errc::InvalidArgument, "lease duration must be positive");
  if (config.default_disk_gb < kMinDiskGb) {
    throw Error(Errc::InvalidArgument, "default disk must be >= " + std::to_string(kMinDiskGb) + " GB");
  }
  if (config.test_samples < 1) throw Error(Errc::InvalidArgument, "test sample count must be >= 1");
  if (config.step_timeout_seconds && *config.step_timeout_seconds <= 0) {
    throw Error(Errc::InvalidArgument, "step timeout must be positive");
  }
  try {
    parse_machine_name(config.default_machine);
  } catch (const Error& e) {
    throw Error(Errc::InvalidArgument, "default machine '" + config.default_machine + "': " + e.detail());
  }
}

EngineConfig load_engine_config(const fs::path& path, EngineConfig base) {
  const json doc = read_json(path, "engine config");
  try {
    return engine_config_from_json(doc, std::move(base), path.parent_path());
  } catch (const Error& e) {
    if (e.code() != Errc::ParseError) throw;
    throw Error(Errc::ParseError, path.string() + ": " + e.detail());
  }
}

EngineConfig engine_config_from_json(const json& doc, EngineConfig c, const fs::path& base_dir) {
  if (!doc.is_object()) throw Error(Errc::ParseError, "engine config: expected an object");
  try {
    if (doc.contains("backend")) c.backend = parse_backend(doc.at("backend").get<std::string>());
    if (doc.contains("capacity")) {
      const auto& cap = doc.at("capacity");
      if (cap.is_number_integer()) {
        c.capacity = {{"*", cap.get<int>()}};
      } else {
        c.capacity = cap.get<std::map<std::string, int>>();
      }
    }
    if (doc.contains("max_retries")) c.max_retries = doc.at("max_retries").get<int>();
    if (doc.contains("headroom")) c.headroom = rational_from_json(doc.at("headroom"));
    if (doc.contains("lease_hours")) c.lease_hours = rational_from_json(doc.at("lease_hours"));
    if (doc.contains("default_machine")) c.default_machine = doc.at("default_machine").get<std::string>();
    if (doc.contains("default_disk_gb")) c.default_disk_gb = doc.at("default_disk_gb").get<int>();
    if (doc.contains("default_disk_class")) {
      const auto cls = parse_disk_class(doc.at("default_disk_class").get<std::string>());
      if (!cls) throw Error(Errc::ParseError, "unknown default_disk_class");
      c.default_disk_class = *cls;
    }
    if (doc.contains("test_samples")) c.test_samples = doc.at("test_samples").get<int>();
    if (doc.contains("catalog")) c.catalog = doc.at("catalog").get<std::string>();
    if (doc.contains("store_root")) c.store_root = doc.at("store_root").get<std::string>();
    if (doc.contains("samples")) c.samples = doc.at("samples").get<std::string>();
    if (doc.contains("workload")) c.workload = doc.at("workload").get<std::string>();
    if (doc.contains("seed")) c.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("container_template")) c.container_template = doc.at("container_template").get<std::string>();
    if (doc.contains("step_timeout_seconds")) c.step_timeout_seconds = doc.at("step_timeout_seconds").get<double>();
    if (doc.contains("fsync")) c.fsync = doc.at("fsync").get<bool>();
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
  const std::pair<fs::path*, const char*> paths[] = {
      {&c.catalog, "catalog"}, {&c.samples, "samples"}, {&c.workload, "workload"}};
  for (const auto& [p, key] : paths) {
    if (!base_dir.empty() && !p->empty() && p->is_relative() && doc.contains(key)) *p = base_dir / *p;
  }
  return c;
}

ordered_json config_to_json(const EngineConfig& c) {
  ordered_json doc;
  doc["backend"] = std::string(to_string(c.backend));
  doc["capacity"] = c.capacity;
  doc["max_retries"] = c.max_retries;
  doc["headroom"] = to_double(c.headroom);
  doc["lease_hours"] = to_exact_string(c.lease_hours);
  doc["default_machine"] = c.default_machine;
  doc["default_disk_gb"] = c.default_disk_gb;
  doc["default_disk_class"] = std::string(to_string(c.default_disk_class));
  doc["test_samples"] = c.test_samples;
  if (!c.catalog.empty()) doc["catalog"] = c.catalog.string();
  doc["store_root"] = c.store_root.string();
  if (!c.samples.empty()) doc["samples"] = c.samples.string();
  if (!c.workload.empty()) doc["workload"] = c.workload.string();
  if (c.seed) doc["seed"] = *c.seed;
  if (!c.container_template.empty()) doc["container_template"] = c.container_template;
  if (c.step_timeout_seconds) doc["step_timeout_seconds"] = *c.step_timeout_seconds;
  doc["fsync"] = c.fsync;
  return doc;
}

fs::path default_catalog_path() { return fs::path(GFLOW_DATA_DIR) / "sample_catalog.json"; }

MachineCatalog load_engine_catalog(const EngineConfig& config) {
  return load_catalog(config.catalog.empty() ? default_catalog_path() : config.catalog);
}

Workflow load_job_file(const fs::path& path, const MachineCatalog& catalog) {
  const std::string text = read_text(path, "workflow");
  Workflow w;
  try {
    w = parse_workflow(text, path.stem().string());
  } catch (const SyntaxError& e) {
    throw Error(Errc::SyntaxError, path.string() + ": " + e.detail());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
  const fs::path base = path.parent_path();
  if (w.configfile) {
    fs::path cfg = *w.configfile;
    if (cfg.is_relative()) cfg = base / cfg;
    auto values = read_config_file(cfg);
    for (const auto& [k, v] : w.config_values) values[k] = v;  // `config` pairs win
    w.config_values = std::move(values);
  }
  for (auto& rule : w.rules) {
    if (!rule.script) continue;
    const fs::path script = *rule.script;
    if (script.is_relative() && !is_external_path(rule.script->c_str()) && fs::exists(base / script)) {
      rule.script = fs::absolute(base / script).lexically_normal().string();
    }
  }
  const auto diagnostics = validate_workflow(w, catalog);
  if (!diagnostics.empty()) {
    std::string message = "workflow has " + std::to_string(diagnostics.size()) + " problem(s)";
    for (const auto& d : diagnostics) {
      message += "\n  " + path.string() + ":" + std::to_string(d.line) + ": " +
                 (d.rule.empty() ? "" : "rule '" + d.rule + "': ") + d.message;
    }
    throw Error(Errc::ParseError, message);
  }
  return w;
}

ordered_json env_to_json(const ProjectEnv& env) {
  ordered_json doc;
  doc["project_id"] = env.project_id;
  doc["store_root"] = env.store_root.string();
  doc["buckets"] = {{"reference", env.reference_bucket}, {"results", env.results_bucket}, {"staging", env.staging_bucket}};
  doc["project_dir"] = env.project_dir.string();
  doc["event_log_dir"] = env.event_log_dir.string();
  doc["work_dir"] = env.work_dir.string();
  doc["catalog_path"] = env.catalog_path.string();
  doc["samples_path"] = env.samples_path.string();
  doc["workflow_path"] = env.workflow_path.string();
  doc["created_at"] = env.created_at;
  if (env.reference_root) doc["reference_root"] = env.reference_root->str();
  doc["uploaded_references"] = env.uploaded_references;
  return doc;
}

ProjectEnv env_from_json(const json& doc) {
  ProjectEnv env;
  try {
    env.project_id = doc.at("project_id").get<std::string>();
    env.store_root = doc.at("store_root").get<std::string>();
    env.reference_bucket = doc.at("buckets").at("reference").get<std::string>();
    env.results_bucket = doc.at("buckets").at("results").get<std::string>();
    env.staging_bucket = doc.at("buckets").at("staging").get<std::string>();
    env.project_dir = doc.at("project_dir").get<std::string>();
    env.event_log_dir = doc.at("event_log_dir").get<std::string>();
    env.work_dir = doc.at("work_dir").get<std::string>();
    env.catalog_path = doc.value("catalog_path", std::string());
    env.samples_path = doc.value("samples_path", std::string());
    env.workflow_path = doc.at("workflow_path").get<std::string>();
    env.created_at = doc.value("created_at", std::string());
    if (doc.contains("reference_root")) env.reference_root = StoreUri::parse(doc.at("reference_root").get<std::string>());
    env.uploaded_references = doc.value("uploaded_references", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("project env: ") + e.what());
  }
  return env;
}

fs::path projects_dir(const fs::path& store_root) { return store_root / ".gflow" / "projects"; }

fs::path project_dir(const fs::path& store_root, const std::string& project_id) {
  return projects_dir(store_root) / project_id;
}

std::string project_id_from_name(std::string_view name) {
  std::string id;
  for (char c : name) {
    const char l = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    const bool ok = (l >= 'a' && l <= 'z') || (l >= '0' && l <= '9');
    if (ok) {
      id += l;
    } else if (!id.empty() && id.back() != '-') {
      id += '-';
    }
  }
  while (!id.empty() && id.back() == '-') id.pop_back();
  if (id.size() > 40) id.resize(40);
  while (!id.empty() && id.back() == '-') id.pop_back();
  if (id.size() < 3) id = "gflow-" + id;
  return id;
}

ProjectEnv create_architecture(const fs::path& workflow_path, const EngineConfig& config,
                               std::optional<std::string> project_id) {
  validate_config(config);
  const MachineCatalog catalog = load_engine_catalog(config);
  const Workflow workflow = load_job_file(workflow_path, catalog);
  const std::string id = project_id ? *project_id : project_id_from_name(workflow.name);
  if (id.empty() || id.size() > 40 || id.find_first_not_of("abcdefghijklmnopqrstuvwxyz0123456789-") != std::string::npos ||
      id.front() == '-') {
    throw Error(Errc::InvalidArgument, "project id '" + id + "' must be 1-40 of [a-z0-9-] not starting with '-'");
  }

  ProjectEnv env;
  env.project_id = id;
  env.store_root = absolute_or_empty(config.store_root);
  env.project_dir = project_dir(env.store_root, id);
  if (fs::exists(env.project_dir / "env.json")) {
    throw Error(Errc::AlreadyExists, "project '" + id + "' already exists under " + env.store_root.string());
  }
  env.event_log_dir = env.project_dir / "logs";
  env.work_dir = env.project_dir / "work";
  env.catalog_path = absolute_or_empty(config.catalog.empty() ? default_catalog_path() : config.catalog);
  env.samples_path = absolute_or_empty(config.samples);
  env.workflow_path = absolute_or_empty(workflow_path);
  env.created_at = utc_now();
  env.reference_bucket = id + "-ref-" + random_hex(8);
  env.results_bucket = id + "-results";
  env.staging_bucket = id + "-staging";

  std::error_code ec;
  fs::create_directories(env.event_log_dir, ec);
  fs::create_directories(env.work_dir, ec);
  if (ec) throw Error(Errc::IoFailure, "cannot create " + env.project_dir.string() + ": " + ec.message());

  ObjectStore store(env.store_root);
  for (const auto& bucket : {env.reference_bucket, env.results_bucket, env.staging_bucket}) {
    if (store.has_bucket(bucket)) throw Error(Errc::AlreadyExists, "bucket '" + bucket + "' already exists");
    store.create_bucket(bucket);
  }

  if (workflow.referencefile) {
    const std::string& ref = *workflow.referencefile;
    if (ref.rfind("store://", 0) == 0) {
      env.reference_root = StoreUri::parse(ref);
    } else if (ref.find("://") == std::string::npos) {
      fs::path local = ref;
      if (local.is_relative()) local = workflow_path.parent_path() / local;
      if (!fs::exists(local)) throw Error(Errc::IoFailure, "referencefile " + local.string() + " does not exist");
      const StoreUri root(env.reference_bucket);
      if (fs::is_directory(local)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::recursive_directory_iterator(local)) {
          if (entry.is_regular_file()) files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
          const std::string key = fs::relative(file, local).generic_string();
          store.put_file(root.child(key), file);
          env.uploaded_references.push_back(key);
        }
      } else {
        const std::string key = local.filename().string();
        store.put_file(root.child(key), local);
        env.uploaded_references.push_back(key);
      }
      env.reference_root = root;
    }
    // Other schemes (gs://...) are left to the steps themselves.
  }

  write_json(env.project_dir / "env.json", env_to_json(env));
  write_json(env.project_dir / "config.json", config_to_json(config));
  write_text(env.project_dir / "workflow.snapshot", serialize_workflow(workflow));
  json record = load_record(env.project_dir);
  record["project_id"] = id;
  record["created_at"] = env.created_at;
  record["workflow"] = workflow.name;
  if (!record.contains("runs")) record["runs"] = json::array();
  save_record(env.project_dir, record);
  return env;
}

ProjectEnv open_project(const fs::path& store_root, const std::string& project_id) {
  const fs::path pdir = project_dir(absolute_or_empty(store_root), project_id);
  if (!fs::exists(pdir / "env.json")) {
    throw Error(Errc::StateError, "project '" + project_id + "' has no architecture; run `gflow create` first");
  }
  return env_from_json(read_json(pdir / "env.json", "project env"));
}

Workflow project_workflow(const ProjectEnv& env, const MachineCatalog& catalog) {
  return load_job_file(env.workflow_path, catalog);
}

std::unique_ptr<StepExecutor> make_executor(const ProjectEnv& env, const EngineConfig& config,
                                            const MachineCatalog& catalog, ObjectStore& store,
                                            const std::string& job_id, const Rational& start) {
  if (config.backend == Backend::Sim) {
    if (config.workload.empty()) throw Error(Errc::InvalidArgument, "the sim backend needs a workload (--workload)");
    WorkloadSpec spec = load_workload(config.workload);
    if (config.seed) spec.seed = *config.seed;
    return std::make_unique<SimExecutor>(std::move(spec), catalog, &store, start);
  }
  LocalOptions options;
  options.log_root = env.event_log_dir;
  options.job_id = job_id;
  options.container_template = config.container_template;
  if (config.step_timeout_seconds) {
    options.step_timeout = std::chrono::milliseconds(static_cast<long long>(*config.step_timeout_seconds * 1000));
  }
  return std::make_unique<LocalExecutor>(store, env.reference_root, env.work_dir, options, start);
}

OptParamsFile load_optparams(const fs::path& path, const MachineCatalog& catalog) {
  const json doc = read_json(path, "optparams");
  OptParamsFile file;
  file.recommendation = recommendation_from_json(doc, catalog);
  try {
    file.completed_samples = doc.value("completed_samples", std::vector<std::string>{});
    if (doc.contains("test_mean_cost")) file.test_mean_cost = rational_from_json(doc.at("test_mean_cost"));
  } catch (const std::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
  return file;
}

OptimizeResult find_optimized_param(const ProjectEnv& env, const EngineConfig& config) {
  validate_config(config);
  const MachineCatalog catalog = env_catalog(env, config);
  const Workflow workflow = project_workflow(env, catalog);
  const auto samples = env_samples(env, config);

  OptimizeResult result;
  result.test_samples = test_sample_count(workflow, config.test_samples, samples.size(), &result.clamped);
  result.job_id = env.project_id + "-test";
  const fs::path log_path = env.event_log_dir / (result.job_id + ".log");
  std::error_code ec;
  fs::remove(log_path, ec);

  ObjectStore store(env.store_root);
  auto executor = make_executor(env, config, catalog, store, result.job_id, Rational(0));
  Job job = make_job(env, config, workflow, samples, result.job_id);
  TestRun run = profile(std::move(job), result.test_samples, *executor,
                        std::make_unique<FileEventLog>(log_path, config.fsync));
  result.profile = run.profile;
  result.completed_samples = run.completed;
  result.recommendation = recommend(run.profile, catalog, config.headroom);

  const Orchestrator replayed = Orchestrator::replay(read_event_log(log_path).events);
  result.test_cost = job_cost_report(replayed, catalog);

  ordered_json doc = recommendation_to_json(result.recommendation);
  doc["test_job"] = result.job_id;
  doc["test_samples"] = result.test_samples;
  doc["completed_samples"] = result.completed_samples;
  doc["test_mean_cost"] = to_exact_string(result.test_cost.mean_per_sample);
  ordered_json peaks = ordered_json::object();
  for (const auto& [rule, p] : result.profile.rules) {
    peaks[rule] = {{"peak_cpu", to_exact_string(p.peak_cpu)},
                   {"peak_mem_gb", to_exact_string(p.peak_mem_gb)},
                   {"peak_disk_gb", to_exact_string(p.peak_disk_gb)},
                   {"mean_duration_hours", to_exact_string(p.mean_duration_hours)},
                   {"samples", p.samples}};
  }
  doc["profile"] = peaks;
  result.optparams_path = env.project_dir / "optparams.json";
  write_json(result.optparams_path, doc);
  write_json(env.event_log_dir / (result.job_id + ".cost.json"), cost_report_to_json(result.test_cost));

  json record = load_record(env.project_dir);
  record["optimize"] = {{"job_id", result.job_id},
                        {"test_samples", result.test_samples},
                        {"cost", cost_report_to_json(result.test_cost)}};
  save_record(env.project_dir, record);
  return result;
}

PipelineResult run_pipeline(const ProjectEnv& env, const EngineConfig& config,
                            const std::optional<fs::path>& optparams, bool rerun_tested) {
  validate_config(config);
  const MachineCatalog catalog = env_catalog(env, config);
  Workflow workflow = project_workflow(env, catalog);
  std::vector<std::string> samples = env_samples(env, config);

  PipelineResult result;
  std::optional<OptParamsFile> opt;
  if (optparams) {
    opt = load_optparams(*optparams, catalog);
    workflow = apply_recommendation(workflow, opt->recommendation);
    if (!rerun_tested) {
      std::vector<std::string> remaining;
      for (const auto& s : samples) {
        const bool done =
            std::find(opt->completed_samples.begin(), opt->completed_samples.end(), s) != opt->completed_samples.end();
        (done ? result.reused_samples : remaining).push_back(s);
      }
      samples = std::move(remaining);
    }
  }

  int n = 1;
  while (fs::exists(env.event_log_dir / (env.project_id + "-run-" + std::to_string(n) + ".log"))) ++n;
  result.job_id = env.project_id + "-run-" + std::to_string(n);
  result.event_log = env.event_log_dir / (result.job_id + ".log");

  if (samples.empty()) {
    result.report.job_id = result.job_id;
    result.cost.currency = catalog.currency();
    record_run(env, result);
    return result;
  }

  ObjectStore store(env.store_root);
  auto executor = make_executor(env, config, catalog, store, result.job_id, Rational(0));
  Orchestrator orch = Orchestrator::submit(make_job(env, config, workflow, samples, result.job_id),
                                           std::make_unique<FileEventLog>(result.event_log, config.fsync));
  result.report = run_job(orch, *executor);
  result.cost = job_cost_report(orch, catalog);
  if (opt && opt->test_mean_cost && *opt->test_mean_cost > 0) attach_baseline(result.cost, *opt->test_mean_cost);
  record_run(env, result);
  return result;
}

PipelineResult resume_pipeline(const ProjectEnv& env, const EngineConfig& config, const std::string& job_id) {
  const MachineCatalog catalog = env_catalog(env, config);
  const fs::path log_path = env.event_log_dir / (job_id + ".log");
  if (!fs::exists(log_path)) throw Error(Errc::UnknownJob, "no event log for job '" + job_id + "'");
  Recovery recovery = Orchestrator::recover(log_path, config.fsync);
  Orchestrator& orch = recovery.orchestrator;
  PipelineResult result;
  result.job_id = job_id;
  result.event_log = log_path;
  ObjectStore store(env.store_root);
  auto executor = make_executor(env, config, catalog, store, job_id, orch.last_time());
  result.report = run_job(orch, *executor);
  result.cost = job_cost_report(orch, catalog);
  const fs::path opt_path = env.project_dir / "optparams.json";
  if (fs::exists(opt_path)) {
    const auto opt = load_optparams(opt_path, catalog);
    if (opt.test_mean_cost && *opt.test_mean_cost > 0) attach_baseline(result.cost, *opt.test_mean_cost);
  }
  record_run(env, result);
  return result;
}

RemovalReport remove_project(const fs::path& store_root, const std::string& project_id, bool all) {
  const fs::path root = absolute_or_empty(store_root);
  const fs::path pdir = project_dir(root, project_id);
  RemovalReport report;
  const bool has_env = fs::exists(pdir / "env.json");
  if (!fs::exists(pdir) || (!has_env && !all)) {
    throw Error(Errc::UnknownProject, "no project '" + project_id + "'");
  }
  if (has_env) {
    const ProjectEnv env = env_from_json(read_json(pdir / "env.json", "project env"));
    ObjectStore store(root);
    for (const auto& bucket : {env.reference_bucket, env.results_bucket, env.staging_bucket}) {
      if (store.remove_bucket(bucket)) report.buckets_removed.push_back(bucket);
    }
  }
  std::error_code ec;
  if (all) {
    fs::remove_all(pdir, ec);
    report.record_kept = false;
  } else {
    for (const char* name : {"logs", "work", "env.json", "config.json", "optparams.json", "workflow.snapshot"}) {
      fs::remove_all(pdir / name, ec);
    }
    json record = load_record(pdir);
    record["removed_at"] = utc_now();
    save_record(pdir, record);
  }
  if (ec) throw Error(Errc::IoFailure, "cannot remove " + pdir.string() + ": " + ec.message());
  return report;
}

json project_record(const fs::path& store_root, const std::string& project_id) {
  const fs::path path = project_dir(absolute_or_empty(store_root), project_id) / "record.json";
  if (!fs::exists(path)) throw Error(Errc::UnknownProject, "no project '" + project_id + "'");
  return read_json(path, "project record");
}

JobStatus job_status(const fs::path& store_root, const std::string& job_id) {
  const fs::path dir = projects_dir(absolute_or_empty(store_root));
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    for (const auto& project : fs::directory_iterator(dir)) {
      const fs::path log = project.path() / "logs" / (job_id + ".log");
      if (!fs::exists(log)) continue;
      // A concurrent writer may have a record half-written; the complete prefix is what counts.
      const LogContents contents = read_event_log(log);
      if (contents.events.empty()) throw Error(Errc::UnknownJob, "job '" + job_id + "' has an empty log");
      const Orchestrator orch = Orchestrator::replay(contents.events);
      return orch.status(orch.last_time());
    }
  }
  throw Error(Errc::UnknownJob, "no job '" + job_id + "' under " + store_root.string());
}

}  // namespace gflow
