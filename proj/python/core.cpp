#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gflow/error.hpp"
#include "gflow/project.hpp"

namespace py = pybind11;
using namespace gflow;
using nlohmann::json;

namespace {

// JSON crosses the boundary as text; the Python side decodes it.
EngineConfig config_from(const std::string& config_json) {
  return engine_config_from_json(json::parse(config_json));
}

std::string run_report_json(const PipelineResult& r) {
  nlohmann::ordered_json doc;
  doc["job_id"] = r.job_id;
  doc["makespan_hours"] = to_exact_string(r.report.makespan);
  doc["results_written"] = r.report.results_written;
  doc["results_present"] = r.report.results_present;
  doc["exhausted"] = r.report.exhausted;
  doc["reused_samples"] = r.reused_samples;
  doc["cost"] = cost_report_to_json(r.cost);
  return doc.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Workflow engine and machine-type optimizer";

  // Messages read "Kind: detail", as on the command line.
  py::register_exception<Error>(m, "GflowError");

  m.def("parse_machine_name", [](const std::string& name) {
    const MachineShape s = parse_machine_name(name);
    return py::make_tuple(std::string(to_string(s.series)), std::string(to_string(s.family)), s.vcpu,
                          to_exact_string(s.mem_gb));
  });

  m.def("compare_costs", [](const std::string& baseline, const std::string& optimized) {
    return to_exact_string(compare_costs(parse_rational(baseline), parse_rational(optimized)));
  });
  m.def("render_percent", [](const std::string& percent) { return render_percent(parse_rational(percent)); });
  m.def("render_money", [](const std::string& amount, const std::string& currency) {
    return render_money(parse_rational(amount), currency);
  });

  m.def("load_catalog", [](const std::filesystem::path& path) { return catalog_to_json(load_catalog(path)); });

  m.def("parse_workflow", [](const std::string& text, const std::string& name) {
    return serialize_workflow(parse_workflow(text, name));
  });

  m.def("plan", [](const std::filesystem::path& workflow, const std::string& sample, const std::string& config_json) {
    const EngineConfig c = config_from(config_json);
    const Workflow w = load_job_file(workflow, load_engine_catalog(c));
    nlohmann::ordered_json doc;
    doc["workflow"] = w.name;
    doc["rules"] = w.rules.size();
    doc["plan"] = plan_to_json(compile_task(w, sample, c.defaults()));
    return doc.dump();
  });

  m.def("recommend", [](const std::string& profile_json, const std::filesystem::path& catalog, const std::string& headroom) {
    ResourceProfile profile;
    const json peaks = json::parse(profile_json);
    for (const auto& [rule, p] : peaks.items()) {
      RuleProfile rp;
      rp.peak_cpu = rational_from_json(p.at("peak_cpu"));
      rp.peak_mem_gb = rational_from_json(p.at("peak_mem_gb"));
      rp.peak_disk_gb = rational_from_json(p.at("peak_disk_gb"));
      rp.samples = 1;
      profile.rules[rule] = rp;
    }
    return recommendation_to_json(recommend(profile, load_catalog(catalog), parse_rational(headroom))).dump();
  });

  m.def("create", [](const std::filesystem::path& workflow, const std::string& config_json,
                     std::optional<std::string> project) {
    return env_to_json(create_architecture(workflow, config_from(config_json), std::move(project))).dump();
  });

  m.def("optimize", [](const std::string& project, const std::string& config_json) {
    const EngineConfig c = config_from(config_json);
    const OptimizeResult r = find_optimized_param(open_project(c.store_root, project), c);
    nlohmann::ordered_json doc;
    doc["job_id"] = r.job_id;
    doc["test_samples"] = r.test_samples;
    doc["recommendation"] = recommendation_to_json(r.recommendation);
    doc["test_cost"] = cost_report_to_json(r.test_cost);
    doc["optparams"] = r.optparams_path.string();
    return doc.dump();
  });

  m.def("run", [](const std::string& project, const std::string& config_json,
                  std::optional<std::filesystem::path> optparams, bool rerun_tested) {
    const EngineConfig c = config_from(config_json);
    return run_report_json(run_pipeline(open_project(c.store_root, project), c, optparams, rerun_tested));
  });

  m.def("teardown", [](const std::filesystem::path& store_root, const std::string& project, bool all) {
    const RemovalReport r = remove_project(store_root, project, all);
    return py::make_tuple(r.buckets_removed, r.record_kept);
  });

  m.def("project_record", [](const std::filesystem::path& store_root, const std::string& project) {
    return project_record(store_root, project).dump();
  });

  m.def("status", [](const std::filesystem::path& store_root, const std::string& job_id) {
    return render_status(job_status(store_root, job_id));
  });

  m.def("fetch", [](const std::filesystem::path& store_root, const std::string& uri, const std::filesystem::path& dst) {
    const CopyReport r = ObjectStore(store_root).copy_no_clobber(StoreUri::parse(uri), dst);
    return py::make_tuple(r.copied, r.skipped);
  });
}
