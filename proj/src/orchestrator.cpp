#include "gflow/orchestrator.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "gflow/error.hpp"

namespace gflow {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

json resources_to_json(const ResourceRequest& r) {
  json doc = json::object();
  if (r.machine) doc["machine"] = *r.machine;
  if (r.disk_gb) doc["disk_gb"] = *r.disk_gb;
  if (r.disk_class) doc["disk_class"] = std::string(to_string(*r.disk_class));
  return doc;
}

ResourceRequest resources_from_json(const json& doc) {
  ResourceRequest r;
  if (doc.contains("machine")) r.machine = doc.at("machine").get<std::string>();
  if (doc.contains("disk_gb")) r.disk_gb = doc.at("disk_gb").get<int>();
  if (doc.contains("disk_class")) {
    auto cls = parse_disk_class(doc.at("disk_class").get<std::string>());
    if (!cls) throw Error(Errc::ParseError, "bad disk_class");
    r.disk_class = cls;
  }
  return r;
}

[[noreturn]] void corrupt(const Event& e, const std::string& message) {
  throw Error(Errc::CorruptLog, "seq " + std::to_string(e.seq) + " (" + e.type + "): " + message);
}

}  // namespace

std::string_view to_string(TaskState state) {
  switch (state) {
    case TaskState::Queued: return "Queued";
    case TaskState::Running: return "Running";
    case TaskState::Succeeded: return "Succeeded";
    case TaskState::Failed: return "Failed";
    case TaskState::Exhausted: return "Exhausted";
  }
  return "Queued";
}

std::string_view to_string(StepState state) {
  switch (state) {
    case StepState::Pending: return "Pending";
    case StepState::Running: return "Running";
    case StepState::Succeeded: return "Succeeded";
    case StepState::Failed: return "Failed";
  }
  return "Pending";
}

// ---------------------------------------------------------------------------
// QueueState

QueueState::QueueState(const std::vector<std::string>& samples) : pending_(samples.begin(), samples.end()) {}

std::optional<std::string> QueueState::lease_next(const Rational& now, const Rational& lease_duration) {
  for (const auto& sample : expired(now)) {
    in_flight_.erase(sample);
    pending_.push_back(sample);
  }
  if (pending_.empty()) return std::nullopt;
  std::string sample = pending_.front();
  take(sample, now + lease_duration);
  return sample;
}

void QueueState::push(const std::string& sample) { pending_.push_back(sample); }

void QueueState::take(const std::string& sample, const Rational& expiry) {
  if (pending_.empty() || pending_.front() != sample) {
    throw Error(Errc::StateError, "'" + sample + "' is not at the head of the queue");
  }
  pending_.pop_front();
  in_flight_[sample] = expiry;
}

void QueueState::renew(const std::string& sample, const Rational& expiry) {
  auto it = in_flight_.find(sample);
  if (it == in_flight_.end()) throw Error(Errc::NotInFlight, "'" + sample + "' is not leased");
  it->second = expiry;
}

void QueueState::release(const std::string& sample) { in_flight_.erase(sample); }

std::vector<std::string> QueueState::expired(const Rational& now) const {
  std::vector<std::pair<Rational, std::string>> due;
  for (const auto& [sample, expiry] : in_flight_) {
    if (expiry <= now) due.emplace_back(expiry, sample);
  }
  std::sort(due.begin(), due.end());
  std::vector<std::string> out;
  for (auto& d : due) out.push_back(std::move(d.second));
  return out;
}

bool QueueState::contains(const std::string& sample) const {
  return in_flight_.count(sample) || std::find(pending_.begin(), pending_.end(), sample) != pending_.end();
}

// ---------------------------------------------------------------------------
// Job serialization

json job_to_json(const Job& job) {
  json doc;
  doc["job_id"] = job.job_id;
  doc["workflow_name"] = job.workflow.name;
  doc["workflow"] = serialize_workflow(job.workflow);
  doc["config_values"] = job.workflow.config_values;
  doc["samples"] = job.sample_ids;
  doc["defaults"] = resources_to_json(job.defaults);
  doc["max_retries"] = job.max_retries;
  doc["result_root"] = job.result_root.bucket.empty() ? "" : job.result_root.str();
  doc["lease_hours"] = to_exact_string(job.lease_hours);
  doc["pools"] = job.pool_capacity;
  return doc;
}

Job job_from_json(const json& doc) {
  Job job;
  job.job_id = doc.at("job_id").get<std::string>();
  job.workflow = parse_workflow(doc.at("workflow").get<std::string>(), doc.value("workflow_name", std::string("workflow")));
  if (doc.contains("config_values")) {
    job.workflow.config_values = doc.at("config_values").get<std::map<std::string, std::string>>();
  }
  job.sample_ids = doc.at("samples").get<std::vector<std::string>>();
  job.defaults = resources_from_json(doc.at("defaults"));
  job.max_retries = doc.at("max_retries").get<int>();
  const std::string root = doc.value("result_root", std::string());
  if (!root.empty()) job.result_root = StoreUri::parse(root);
  job.lease_hours = parse_rational(doc.at("lease_hours").get<std::string>());
  job.pool_capacity = doc.at("pools").get<std::map<std::string, int>>();
  return job;
}

// ---------------------------------------------------------------------------
// Orchestrator

Orchestrator::Orchestrator() = default;
Orchestrator::Orchestrator(Orchestrator&&) noexcept = default;
Orchestrator& Orchestrator::operator=(Orchestrator&&) noexcept = default;
Orchestrator::~Orchestrator() = default;

Orchestrator Orchestrator::submit(Job job, std::unique_ptr<EventLog> log, const Rational& now) {
  if (job.sample_ids.empty()) throw Error(Errc::EmptySampleList, "job '" + job.job_id + "' has no samples");
  std::set<std::string> seen;
  for (const auto& s : job.sample_ids) {
    if (s.empty()) throw Error(Errc::InvalidArgument, "empty sample id");
    if (!seen.insert(s).second) throw Error(Errc::DuplicateSampleId, "sample '" + s + "' listed twice");
  }
  if (job.max_retries < 0) throw Error(Errc::InvalidArgument, "max_retries must be >= 0");
  if (job.lease_hours <= 0) throw Error(Errc::InvalidArgument, "lease duration must be positive");
  if (job.workflow.rules.empty()) throw Error(Errc::InvalidArgument, "workflow has no rules");

  // One pool per distinct effective machine; "*" supplies the capacity for unlisted machines.
  std::map<std::string, int> pools;
  const int fallback = job.pool_capacity.count("*") ? job.pool_capacity.at("*") : 1;
  for (const auto& rule : job.workflow.rules) {
    const auto effective = merge_resources(rule.resources, job.defaults);
    if (!effective.machine) {
      throw Error(Errc::InvalidArgument, "rule '" + rule.name + "' has no machine and no default is set");
    }
    const auto it = job.pool_capacity.find(*effective.machine);
    pools[*effective.machine] = it != job.pool_capacity.end() ? it->second : fallback;
  }
  for (const auto& [machine, capacity] : pools) {
    if (capacity < 1) throw Error(Errc::InvalidArgument, "pool '" + machine + "' needs capacity >= 1");
  }
  job.pool_capacity = pools;

  Orchestrator orch;
  orch.log_ = log ? std::move(log) : std::make_unique<MemoryEventLog>();
  orch.emit(std::nullopt, "job_submitted", job_to_json(job), now);
  return orch;
}

Orchestrator Orchestrator::replay(const std::vector<Event>& events, std::unique_ptr<EventLog> sink) {
  Orchestrator orch;
  orch.log_ = sink ? std::move(sink) : std::make_unique<MemoryEventLog>();
  for (const auto& e : events) orch.apply(e);
  return orch;
}

Recovery Orchestrator::recover(const std::filesystem::path& log_path, bool fsync_each) {
  LogContents contents = read_event_log(log_path);
  if (contents.corruption) {
    std::error_code ec;
    std::filesystem::resize_file(log_path, contents.valid_bytes, ec);
    if (ec) throw Error(Errc::IoFailure, "cannot truncate " + log_path.string() + ": " + ec.message());
  }

  // A record can be well-formed JSON yet an illegal transition; keep the prefix before it.
  Orchestrator orch;
  std::size_t applied = 0;
  std::optional<CorruptRecord> corruption = contents.corruption;
  for (const auto& e : contents.events) {
    try {
      orch.apply(e);
    } catch (const Error& err) {
      corruption = CorruptRecord{applied + 1, err.detail()};
      break;
    }
    ++applied;
  }
  if (!orch.submitted_) {
    // Nothing usable: an empty (or wholly corrupt) log has no job to resume.
    RecoveryReport report{applied, {}, corruption};
    orch.log_ = std::make_unique<MemoryEventLog>();
    return Recovery{std::move(orch), std::move(report)};
  }
  if (applied < contents.events.size()) {
    // Rewrite the file to the applied prefix.
    std::ofstream out(log_path, std::ios::binary | std::ios::trunc);
    for (std::size_t i = 0; i < applied; ++i) out << encode_event(contents.events[i]) << '\n';
  }
  orch.log_ = std::make_unique<FileEventLog>(log_path, fsync_each);

  RecoveryReport report;
  report.events_replayed = applied;
  report.corruption = corruption;
  const Rational now = orch.last_time_;
  std::vector<std::string> running, failed;
  for (const auto& [sample, rec] : orch.records_) {
    if (rec.state == TaskState::Running) running.push_back(sample);
    if (rec.state == TaskState::Failed) failed.push_back(sample);
  }
  // The log ended between `failed` and its requeue or exhaustion.
  for (const auto& sample : failed) orch.settle_failed(sample, now);
  for (const auto& sample : running) {
    orch.fail_running(sample, FailureReason::WorkerLost, "controller restarted", now);
    report.reverted.push_back(sample);
  }
  json payload{{"events_replayed", applied}, {"reverted", report.reverted}};
  if (corruption) payload["corrupt_line"] = corruption->line;
  orch.note("recovered", payload, now);
  return Recovery{std::move(orch), std::move(report)};
}

void Orchestrator::emit(std::optional<std::string> sample, std::string type, json payload, const Rational& now) {
  Event e;
  e.seq = last_seq_ + 1;
  e.time = now < last_time_ ? last_time_ : now;
  e.job_id = submitted_ ? job_.job_id : payload.value("job_id", std::string());
  e.sample_id = std::move(sample);
  e.type = std::move(type);
  e.payload = std::move(payload);
  log_->append(e);
  apply(e);
  if (observer_) observer_(*this, e);
}

void Orchestrator::note(const std::string& type, json payload, const Rational& now) {
  emit(std::nullopt, type, std::move(payload), now);
}

TaskRecord& Orchestrator::mutable_record(const std::string& sample) {
  auto it = records_.find(sample);
  if (it == records_.end()) throw Error(Errc::UnknownSample, "no sample '" + sample + "' in job " + job_.job_id);
  return it->second;
}

const TaskRecord& Orchestrator::record(const std::string& sample) const {
  auto it = records_.find(sample);
  if (it == records_.end()) throw Error(Errc::UnknownSample, "no sample '" + sample + "' in job " + job_.job_id);
  return it->second;
}

void Orchestrator::apply(const Event& e) {
  if (e.seq != last_seq_ + 1) corrupt(e, "expected seq " + std::to_string(last_seq_ + 1));
  if (e.time < last_time_) corrupt(e, "time went backwards");

  auto need_sample = [&]() -> TaskRecord& {
    if (!submitted_) corrupt(e, "event before job_submitted");
    if (!e.sample_id) corrupt(e, "missing sample_id");
    auto it = records_.find(*e.sample_id);
    if (it == records_.end()) corrupt(e, "unknown sample '" + *e.sample_id + "'");
    return it->second;
  };
  auto transition = [&](TaskRecord& rec, TaskState from, TaskState to) {
    if (rec.state != from) {
      corrupt(e, "illegal transition " + std::string(to_string(rec.state)) + " -> " + std::string(to_string(to)));
    }
    rec.state = to;
    rec.timestamps.emplace_back(to, e.time);
  };

  try {
    if (e.type == "job_submitted") {
      if (submitted_) corrupt(e, "job submitted twice");
      job_ = job_from_json(e.payload);
      submitted_ = true;
      submitted_at_ = e.time;
      for (const auto& sample : job_.sample_ids) {
        TaskRecord rec;
        rec.sample_id = sample;
        for (const auto& rule : job_.workflow.rules) rec.step_states.emplace_back(rule.name, StepState::Pending);
        rec.timestamps.emplace_back(TaskState::Queued, e.time);
        records_.emplace(sample, std::move(rec));
      }
      queue_ = QueueState(job_.sample_ids);
      for (const auto& [machine, capacity] : job_.pool_capacity) pools_[machine] = NodePool{machine, capacity, 0};
    } else if (e.type == "leased") {
      TaskRecord& rec = need_sample();
      const int attempt = e.payload.at("attempt").get<int>();
      if (attempt != rec.attempts + 1) corrupt(e, "attempt out of order");
      if (attempt > job_.max_retries + 1) corrupt(e, "attempt exceeds retry budget");
      transition(rec, TaskState::Queued, TaskState::Running);
      queue_.take(rec.sample_id, parse_rational(e.payload.at("expiry").get<std::string>()));
      rec.attempts = attempt;
      AttemptRecord a;
      a.attempt = attempt;
      a.leased_at = e.time;
      rec.history.push_back(std::move(a));
    } else if (e.type == "step_started") {
      TaskRecord& rec = need_sample();
      if (rec.state != TaskState::Running) corrupt(e, "step started on a task that is not running");
      if (rec.running_step) corrupt(e, "step started while another step is running");
      const std::string rule = e.payload.at("step").get<std::string>();
      const std::string pool = e.payload.at("pool").get<std::string>();
      auto pit = pools_.find(pool);
      if (pit == pools_.end()) corrupt(e, "unknown pool '" + pool + "'");
      if (pit->second.in_use >= pit->second.capacity) corrupt(e, "pool '" + pool + "' over capacity");
      ++pit->second.in_use;
      auto sit = std::find_if(rec.step_states.begin(), rec.step_states.end(),
                              [&](const auto& s) { return s.first == rule; });
      if (sit == rec.step_states.end()) corrupt(e, "unknown step '" + rule + "'");
      sit->second = StepState::Running;
      rec.running_step = rule;
      rec.running_pool = pool;
      rec.running_step_since = e.time;
      queue_.renew(rec.sample_id, parse_rational(e.payload.at("expiry").get<std::string>()));
    } else if (e.type == "step_finished") {
      TaskRecord& rec = need_sample();
      StepObservation obs = observation_from_json(e.payload.at("observation"));
      if (!rec.running_step || *rec.running_step != obs.rule) corrupt(e, "step was not running");
      --pools_.at(*rec.running_pool).in_use;
      auto sit = std::find_if(rec.step_states.begin(), rec.step_states.end(),
                              [&](const auto& s) { return s.first == obs.rule; });
      sit->second = obs.succeeded() ? StepState::Succeeded : StepState::Failed;
      rec.running_step.reset();
      rec.running_pool.reset();
      rec.history.back().steps.push_back(std::move(obs));
    } else if (e.type == "succeeded") {
      TaskRecord& rec = need_sample();
      if (rec.running_step) corrupt(e, "task finished with a step still running");
      transition(rec, TaskState::Running, TaskState::Succeeded);
      queue_.release(rec.sample_id);
      rec.history.back().finished_at = e.time;
      rec.history.back().result = TaskState::Succeeded;
    } else if (e.type == "failed") {
      TaskRecord& rec = need_sample();
      if (rec.running_step) corrupt(e, "task failed with a step still running");
      transition(rec, TaskState::Running, TaskState::Failed);
      queue_.release(rec.sample_id);
      auto& a = rec.history.back();
      a.finished_at = e.time;
      a.result = TaskState::Failed;
      a.failed_step = e.payload.value("step", std::string());
      a.reason = parse_failure_reason(e.payload.value("reason", std::string("None")));
    } else if (e.type == "requeued") {
      TaskRecord& rec = need_sample();
      if (rec.attempts > job_.max_retries) corrupt(e, "retry budget already spent");
      transition(rec, TaskState::Failed, TaskState::Queued);
      for (auto& s : rec.step_states) s.second = StepState::Pending;
      queue_.push(rec.sample_id);
    } else if (e.type == "exhausted") {
      TaskRecord& rec = need_sample();
      if (rec.attempts != job_.max_retries + 1) corrupt(e, "exhausted before the retry budget was spent");
      transition(rec, TaskState::Failed, TaskState::Exhausted);
    } else if (e.type == "recovered" || e.type == "note") {
      // markers only
    } else {
      corrupt(e, "unknown event type");
    }
  } catch (const nlohmann::json::exception& ex) {
    corrupt(e, std::string("bad payload: ") + ex.what());
  } catch (const Error& ex) {
    if (ex.code() == Errc::CorruptLog) throw;
    corrupt(e, ex.detail());
  }
  last_seq_ = e.seq;
  last_time_ = e.time;
}

std::optional<Lease> Orchestrator::lease_next(const Rational& now) {
  expire_leases(now);
  if (queue_.pending().empty()) return std::nullopt;
  const std::string sample = queue_.pending().front();
  const TaskRecord& rec = record(sample);
  const Rational expiry = now + job_.lease_hours;
  emit(sample, "leased", json{{"attempt", rec.attempts + 1}, {"expiry", to_exact_string(expiry)}}, now);
  return Lease{sample, rec.attempts, expiry};
}

void Orchestrator::expire_leases(const Rational& now) {
  for (const auto& sample : queue_.expired(now)) {
    fail_running(sample, FailureReason::LeaseExpired, "lease expired", now);
  }
}

void Orchestrator::step_started(const std::string& sample, const std::string& rule, const std::string& pool,
                                const Rational& now) {
  const TaskRecord& rec = record(sample);
  if (rec.state != TaskState::Running) throw Error(Errc::NotInFlight, "'" + sample + "' is not running");
  if (rec.running_step) throw Error(Errc::StateError, "'" + sample + "' already runs step " + *rec.running_step);
  auto pit = pools_.find(pool);
  if (pit == pools_.end()) throw Error(Errc::InvalidArgument, "no pool for machine '" + pool + "'");
  if (pit->second.free() <= 0) throw Error(Errc::StateError, "pool '" + pool + "' is full");
  const Rational expiry = now + job_.lease_hours;
  emit(sample, "step_started", json{{"step", rule}, {"pool", pool}, {"expiry", to_exact_string(expiry)}}, now);
}

void Orchestrator::step_finished(const std::string& sample, const StepObservation& observation, const Rational& now) {
  const TaskRecord& rec = record(sample);
  if (!rec.running_step || *rec.running_step != observation.rule) {
    throw Error(Errc::StateError, "step '" + observation.rule + "' of '" + sample + "' is not running");
  }
  emit(sample, "step_finished", json{{"observation", observation_to_json(observation)}}, now);
}

void Orchestrator::close_running_step(const std::string& sample, FailureReason reason, const Rational& now) {
  const TaskRecord& rec = record(sample);
  if (!rec.running_step) return;
  StepObservation obs;
  obs.rule = *rec.running_step;
  const Rational start = rec.running_step_since;
  obs.duration_hours = now > start ? Rational(now - start) : Rational(0);
  obs.failure = reason;
  obs.machine = *rec.running_pool;
  const auto effective = merge_resources(job_.workflow.find_rule(obs.rule)->resources, job_.defaults);
  obs.disk_gb = effective.disk_gb.value_or(0);
  obs.disk_class = effective.disk_class.value_or(DiskClass::Balanced);
  emit(sample, "step_finished", json{{"observation", observation_to_json(obs)}}, now);
}

void Orchestrator::settle_failed(const std::string& sample, const Rational& now) {
  const TaskRecord& rec = record(sample);
  if (rec.attempts <= job_.max_retries) {
    emit(sample, "requeued", json::object(), now);
  } else {
    emit(sample, "exhausted", json{{"attempts", rec.attempts}}, now);
  }
}

void Orchestrator::fail_running(const std::string& sample, FailureReason reason, const std::string& detail,
                                const Rational& now) {
  const TaskRecord& rec = record(sample);
  std::string step = rec.running_step.value_or("");
  close_running_step(sample, reason, now);
  emit(sample, "failed", json{{"attempt", rec.attempts}, {"step", step}, {"reason", to_string(reason)}, {"detail", detail}},
       now);
  settle_failed(sample, now);
}

const TaskRecord& Orchestrator::report_outcome(const std::string& sample, const TaskOutcome& outcome,
                                               const Rational& now, std::optional<int> attempt) {
  const TaskRecord& rec = record(sample);
  if (!queue_.in_flight().count(sample) || rec.state != TaskState::Running) {
    throw Error(Errc::NotInFlight, "'" + sample + "' has no outstanding lease");
  }
  if (attempt && *attempt != rec.attempts) {
    throw Error(Errc::NotInFlight, "'" + sample + "' attempt " + std::to_string(*attempt) +
                                       " is stale (current attempt " + std::to_string(rec.attempts) + ")");
  }
  if (outcome.succeeded) {
    close_running_step(sample, FailureReason::None, now);
    emit(sample, "succeeded", json{{"attempt", rec.attempts}}, now);
  } else {
    close_running_step(sample, outcome.reason, now);
    emit(sample, "failed",
         json{{"attempt", rec.attempts}, {"step", outcome.step}, {"reason", to_string(outcome.reason)},
              {"detail", outcome.detail}},
         now);
    settle_failed(sample, now);
  }
  return rec;
}

std::map<TaskState, std::size_t> Orchestrator::counts() const {
  std::map<TaskState, std::size_t> out{{TaskState::Queued, 0},
                                       {TaskState::Running, 0},
                                       {TaskState::Succeeded, 0},
                                       {TaskState::Failed, 0},
                                       {TaskState::Exhausted, 0}};
  for (const auto& [_, rec] : records_) ++out[rec.state];
  return out;
}

bool Orchestrator::finished() const {
  return std::all_of(records_.begin(), records_.end(), [](const auto& kv) {
    return kv.second.state == TaskState::Succeeded || kv.second.state == TaskState::Exhausted;
  });
}

JobStatus Orchestrator::status(const Rational& now) const {
  JobStatus st;
  st.job_id = job_.job_id;
  st.counts = counts();
  st.total = records_.size();
  st.elapsed_hours = now > submitted_at_ ? Rational(now - submitted_at_) : Rational(0);
  for (const auto& rule : job_.workflow.rules) st.steps[rule.name];
  for (const auto& [_, rec] : records_) {
    for (const auto& [rule, state] : rec.step_states) {
      auto& p = st.steps[rule];
      switch (state) {
        case StepState::Pending: ++p.pending; break;
        case StepState::Running: ++p.running; break;
        case StepState::Succeeded: ++p.succeeded; break;
        case StepState::Failed: ++p.failed; break;
      }
    }
  }

  // Trailing mean over the most recent completions.
  constexpr std::size_t kWindow = 100;
  std::vector<std::pair<Rational, Rational>> done;  // (finished_at, duration)
  for (const auto& [_, rec] : records_) {
    if (rec.state != TaskState::Succeeded) continue;
    const auto& last = rec.history.back();
    if (last.finished_at) done.emplace_back(*last.finished_at, *last.finished_at - last.leased_at);
  }
  const std::size_t remaining = st.total - st.counts[TaskState::Succeeded] - st.counts[TaskState::Exhausted];
  if (remaining == 0) {
    st.eta_hours = Rational(0);
  } else if (!done.empty()) {
    std::sort(done.begin(), done.end());
    const std::size_t n = std::min(kWindow, done.size());
    Rational sum = 0;
    for (std::size_t i = done.size() - n; i < done.size(); ++i) sum += done[i].second;
    const Rational mean = sum / n;
    int concurrency = 0;
    for (const auto& [_, pool] : pools_) concurrency += pool.capacity;
    concurrency = std::max(concurrency, 1);
    const BigInt waves = (BigInt(remaining) + concurrency - 1) / concurrency;
    st.eta_hours = Rational(waves) * mean;
  }
  return st;
}

std::string render_status(const JobStatus& st) {
  std::ostringstream out;
  out << "job " << st.job_id << ": " << st.total << " samples\n";
  for (auto state : {TaskState::Queued, TaskState::Running, TaskState::Succeeded, TaskState::Failed, TaskState::Exhausted}) {
    auto it = st.counts.find(state);
    out << "  " << to_string(state) << ": " << (it == st.counts.end() ? 0 : it->second) << "\n";
  }
  out << "steps:\n";
  for (const auto& [rule, p] : st.steps) {
    out << "  " << rule << ": " << p.succeeded << " done, " << p.running << " running, " << p.failed << " failed, "
        << p.pending << " pending\n";
  }
  out << "elapsed: " << to_fixed(st.elapsed_hours, 2) << " h\n";
  out << "eta: " << (st.eta_hours ? to_fixed(*st.eta_hours, 2) + " h" : std::string("unknown")) << "\n";
  return out.str();
}

std::vector<std::string> parse_sample_list(std::string_view text) {
  std::vector<std::string> samples;
  std::set<std::string> seen;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    std::string id = trim(line);
    if (!id.empty()) {
      if (!seen.insert(id).second) throw Error(Errc::DuplicateSampleId, "sample '" + id + "' listed twice");
      samples.push_back(std::move(id));
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  if (samples.empty()) throw Error(Errc::EmptySampleList, "sample list is empty");
  return samples;
}

std::vector<std::string> load_sample_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot read sample list " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_sample_list(buffer.str());
}

Orchestrator submit_job(const Workflow& workflow, const std::filesystem::path& samples_file,
                        const ResourceRequest& defaults, const StoreUri& result_root, std::string job_id,
                        std::unique_ptr<EventLog> log, int max_retries) {
  Job job;
  job.job_id = std::move(job_id);
  job.workflow = workflow;
  job.sample_ids = load_sample_list(samples_file);
  job.defaults = defaults;
  job.max_retries = max_retries;
  job.result_root = result_root;
  return Orchestrator::submit(std::move(job), std::move(log));
}

}  // namespace gflow
