#include "gflow/scheduler.hpp"

#include <algorithm>

#include "gflow/error.hpp"

namespace gflow {

namespace fs = std::filesystem;

TaskPlan plan_for(const Job& job, const std::string& sample, std::string_view reference_root) {
  return compile_task(job.workflow, sample, job.defaults, reference_root);
}

// ---------------------------------------------------------------------------
// SimExecutor

SimExecutor::SimExecutor(WorkloadSpec spec, MachineCatalog catalog, ObjectStore* store, Rational start)
    : spec_(std::move(spec)), catalog_(std::move(catalog)), store_(store), now_(std::move(start)) {}

std::optional<StepObservation> SimExecutor::begin_task(const TaskPlan& plan, int attempt) {
  cancelled_.erase(plan.sample_id);
  // Surface a spec gap as a configuration error rather than a task failure.
  for (const auto& step : plan.steps) draw_step(spec_, plan.sample_id, step.rule_name, attempt);
  return std::nullopt;
}

void SimExecutor::start_step(const TaskPlan& plan, std::size_t index, int attempt) {
  const StepSpec& step = plan.steps.at(index);
  if (!step.resources.machine) throw Error(Errc::InvalidArgument, "step '" + step.rule_name + "' has no machine");
  StepObservation obs =
      simulate_step(spec_, plan.sample_id, step, catalog_.at(*step.resources.machine), attempt, index == 0);
  Rational done = now_ + obs.duration_hours;
  events_.push(Pending{std::move(done), next_seq_++, StepCompletion{plan.sample_id, attempt, std::move(obs)}});
}

std::optional<StepCompletion> SimExecutor::wait_next(const std::optional<Rational>& deadline) {
  while (!events_.empty()) {
    const Pending& top = events_.top();
    auto it = cancelled_.find(top.completion.sample_id);
    if (it != cancelled_.end() && it->second == top.completion.attempt) {
      events_.pop();
      continue;
    }
    if (deadline && top.time > *deadline) break;
    Pending next = top;
    events_.pop();
    now_ = next.time;
    return std::move(next.completion);
  }
  if (deadline && !events_.empty() && *deadline > now_) now_ = *deadline;
  return std::nullopt;
}

void SimExecutor::cancel(const std::string& sample, int attempt) { cancelled_[sample] = attempt; }

std::pair<std::size_t, std::size_t> SimExecutor::publish(const TaskPlan& plan, int attempt,
                                                         const StoreUri& result_root) {
  if (!store_ || result_root.bucket.empty()) return {0, 0};
  nlohmann::ordered_json doc;
  doc["sample"] = plan.sample_id;
  doc["attempt"] = attempt;
  auto& steps = doc["steps"] = nlohmann::ordered_json::array();
  for (const auto& step : plan.steps) {
    steps.push_back({{"rule", step.rule_name}, {"outputs", step.resolved_outputs}});
  }
  const auto written = store_->put_if_absent(result_root.child(plan.sample_id + "/result.json"), doc.dump(2) + "\n");
  return written ? std::make_pair(std::size_t{1}, std::size_t{0}) : std::make_pair(std::size_t{0}, std::size_t{1});
}

// ---------------------------------------------------------------------------
// LocalExecutor

LocalExecutor::LocalExecutor(ObjectStore& store, std::optional<StoreUri> ref_root, fs::path work_root,
                             LocalOptions options, Rational start)
    : store_(store),
      ref_root_(std::move(ref_root)),
      work_root_(std::move(work_root)),
      pool_(std::move(options)),
      start_(std::move(start)),
      epoch_(std::chrono::steady_clock::now()) {}

Rational LocalExecutor::now() const {
  const auto us =
      std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - epoch_).count();
  return start_ + Rational(us, 3600LL * 1000000LL);
}

fs::path LocalExecutor::task_disk(const std::string& sample, int attempt) const {
  return work_root_ / pool_.options().job_id / sample / ("attempt-" + std::to_string(attempt));
}

std::optional<StepObservation> LocalExecutor::begin_task(const TaskPlan& plan, int attempt) {
  const fs::path disk = task_disk(plan.sample_id, attempt);
  std::error_code ec;
  fs::remove_all(disk, ec);
  fs::create_directories(disk, ec);
  const StepSpec& first = plan.steps.front();
  auto failed = [&](FailureReason reason, const std::string& detail) {
    StepObservation obs;
    obs.rule = first.rule_name;
    obs.machine = first.resources.machine.value_or("");
    obs.disk_gb = first.resources.disk_gb.value_or(0);
    obs.disk_class = first.resources.disk_class.value_or(DiskClass::Balanced);
    obs.failure = reason;
    obs.exit_status = 1;
    obs.detail = detail;
    return obs;
  };
  if (ec) return failed(FailureReason::SpawnFailure, "cannot create task disk: " + ec.message());
  if (!ref_root_) return std::nullopt;
  int disk_gb = 0;
  for (const auto& step : plan.steps) disk_gb = std::max(disk_gb, step.resources.disk_gb.value_or(0));
  try {
    store_.stage_references(*ref_root_, disk, disk_gb);
  } catch (const Error& e) {
    if (e.code() == Errc::NoSuchPrefix) return std::nullopt;  // nothing to stage
    return failed(e.code() == Errc::DiskFull ? FailureReason::DiskFull : FailureReason::SpawnFailure,
                  "staging references: " + e.detail());
  }
  return std::nullopt;
}

void LocalExecutor::start_step(const TaskPlan& plan, std::size_t index, int attempt) {
  const StepSpec& step = plan.steps.at(index);
  pool_.start(plan.sample_id + "#" + std::to_string(attempt), plan.sample_id, step, task_disk(plan.sample_id, attempt),
              step.resources.machine.value_or(""));
}

std::optional<StepCompletion> LocalExecutor::wait_next(const std::optional<Rational>&) {
  auto done = pool_.wait_any();
  if (!done) return std::nullopt;
  const auto hash = done->first.rfind('#');
  return StepCompletion{done->first.substr(0, hash), std::stoi(done->first.substr(hash + 1)), std::move(done->second)};
}

void LocalExecutor::cancel(const std::string& sample, int attempt) {
  pool_.cancel(sample + "#" + std::to_string(attempt));
}

std::pair<std::size_t, std::size_t> LocalExecutor::publish(const TaskPlan& plan, int attempt,
                                                           const StoreUri& result_root) {
  std::pair<std::size_t, std::size_t> counts{0, 0};
  if (result_root.bucket.empty()) return counts;
  const fs::path disk = task_disk(plan.sample_id, attempt);
  for (const auto& output : plan.sink_outputs()) {
    if (is_external_path(output)) continue;
    const auto meta = store_.put_file_if_absent(result_root.child(plan.sample_id + "/" + output), disk / output);
    ++(meta ? counts.first : counts.second);
  }
  return counts;
}

void LocalExecutor::end_task(const TaskPlan& plan, int attempt, bool succeeded) {
  if (succeeded && !keep_disks) {
    std::error_code ec;
    fs::remove_all(task_disk(plan.sample_id, attempt), ec);
  }
}

// ---------------------------------------------------------------------------
// run_job

namespace {

struct ActiveTask {
  const TaskPlan* plan = nullptr;
  int attempt = 0;
  std::size_t next = 0;  // index of the step to run or running
  bool waiting = true;   // next step not yet started
};

}  // namespace

RunReport run_job(Orchestrator& orch, StepExecutor& executor, std::string_view reference_root) {
  const Job& job = orch.job();
  RunReport report;
  report.job_id = job.job_id;
  report.started = orch.submitted_at();

  std::map<std::string, TaskPlan> plans;
  auto plan = [&](const std::string& sample) -> const TaskPlan& {
    auto it = plans.find(sample);
    if (it == plans.end()) it = plans.emplace(sample, plan_for(job, sample, reference_root)).first;
    return it->second;
  };
  auto pool_free = [&](const StepSpec& step) {
    return orch.pools().at(*step.resources.machine).free() > 0;
  };

  std::vector<std::string> order;  // admission order of active tasks
  std::map<std::string, ActiveTask> active;
  auto retire = [&](const std::string& sample) {
    active.erase(sample);
    order.erase(std::remove(order.begin(), order.end(), sample), order.end());
  };
  Rational last_completion = report.started;

  while (true) {
    Rational now = executor.now();

    // Drop attempts whose lease ran out; the orchestrator has already failed them.
    orch.expire_leases(now);
    for (const auto& sample : std::vector<std::string>(order)) {
      const TaskRecord& rec = orch.record(sample);
      const ActiveTask& a = active.at(sample);
      if (rec.state != TaskState::Running || rec.attempts != a.attempt) {
        executor.cancel(sample, a.attempt);
        executor.end_task(*a.plan, a.attempt, false);
        retire(sample);
      }
    }

    bool progress = true;
    while (progress) {
      progress = false;
      for (const auto& sample : order) {
        ActiveTask& a = active.at(sample);
        if (!a.waiting) continue;
        const StepSpec& step = a.plan->steps[a.next];
        if (!pool_free(step)) continue;
        orch.step_started(sample, step.rule_name, *step.resources.machine, now);
        executor.start_step(*a.plan, a.next, a.attempt);
        a.waiting = false;
        progress = true;
      }
      if (orch.queue().pending().empty()) break;
      const std::string head = orch.queue().pending().front();
      const TaskPlan& p = plan(head);
      if (!pool_free(p.steps.front())) break;
      const auto lease = orch.lease_next(now);
      if (!lease || lease->sample_id != head) throw Error(Errc::StateError, "queue head changed while leasing");
      if (auto failure = executor.begin_task(p, lease->attempt)) {
        orch.report_outcome(head, TaskOutcome::failure(failure->rule, failure->failure, failure->detail), now,
                            lease->attempt);
        executor.end_task(p, lease->attempt, false);
      } else {
        active[head] = ActiveTask{&p, lease->attempt, 0, true};
        order.push_back(head);
      }
      progress = true;
    }

    if (active.empty()) {
      if (orch.queue().pending().empty()) break;
      throw Error(Errc::StateError, "queued tasks cannot be placed on any pool");
    }

    std::optional<Rational> deadline;
    for (const auto& [_, expiry] : orch.queue().in_flight()) {
      if (!deadline || expiry < *deadline) deadline = expiry;
    }
    auto done = executor.wait_next(deadline);
    if (!done) {
      if (deadline && executor.now() >= *deadline) continue;  // a lease ran out first
      throw Error(Errc::StateError, "executor went idle with tasks in flight");
    }
    auto it = active.find(done->sample_id);
    if (it == active.end() || it->second.attempt != done->attempt) continue;  // stale attempt
    ActiveTask& a = it->second;
    now = executor.now();
    last_completion = now;
    const std::string sample = done->sample_id;
    const bool ok = done->observation.succeeded();
    const StepObservation obs = done->observation;
    orch.step_finished(sample, obs, now);
    if (!ok) {
      orch.report_outcome(sample, TaskOutcome::failure(obs.rule, obs.failure, obs.detail), now, a.attempt);
      executor.end_task(*a.plan, a.attempt, false);
      retire(sample);
    } else if (a.next + 1 == a.plan->steps.size()) {
      // Results land before success is recorded; a redelivered task finds them and writes nothing.
      const auto [written, present] = executor.publish(*a.plan, a.attempt, job.result_root);
      report.results_written += written;
      report.results_present += present;
      orch.report_outcome(sample, TaskOutcome::success(), now, a.attempt);
      executor.end_task(*a.plan, a.attempt, true);
      retire(sample);
    } else {
      ++a.next;
      a.waiting = true;
    }
  }

  report.finished = last_completion;
  report.makespan = last_completion - report.started;
  report.counts = orch.counts();
  for (const auto& [sample, rec] : orch.records()) {
    if (rec.state == TaskState::Exhausted) report.exhausted.push_back(sample);
  }
  return report;
}

}  // namespace gflow
