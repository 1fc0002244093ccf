#include "gflow/local_runner.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "gflow/error.hpp"
#include "gflow/template.hpp"

extern char** environ;

namespace gflow {

namespace fs = std::filesystem;

namespace {

// Rounds up to 1/1000 so a measured peak is never understated.
Rational thousandths_ceil(const Rational& value) {
  return Rational(gflow::ceil(value * 1000), 1000);
}

Rational bytes_to_gb(std::uintmax_t bytes) { return thousandths_ceil(Rational(BigInt(bytes), BigInt(kGiB))); }

// Sum of resident memory for every process in group `pgid`.
std::uint64_t group_rss_bytes(pid_t pgid) {
  static const long page = sysconf(_SC_PAGESIZE);
  std::uint64_t total = 0;
  std::error_code ec;
  for (fs::directory_iterator it("/proc", ec), end; !ec && it != end; it.increment(ec)) {
    const std::string name = it->path().filename().string();
    if (name.empty() || name.find_first_not_of("0123456789") != std::string::npos) continue;
    std::ifstream in(it->path() / "stat");
    std::string line;
    if (!std::getline(in, line)) continue;
    const auto close = line.rfind(')');
    if (close == std::string::npos) continue;
    // After "pid (comm)": state ppid pgrp ... rss is field 24 overall, 22nd after the comm.
    std::istringstream rest(line.substr(close + 2));
    std::string field;
    long long pgrp = -1, rss = 0;
    for (int i = 1; i <= 22 && rest >> field; ++i) {
      if (i == 3) pgrp = std::stoll(field);
      if (i == 22) rss = std::stoll(field);
    }
    if (pgrp == pgid && rss > 0) total += static_cast<std::uint64_t>(rss) * page;
  }
  return total;
}

std::string wrap_command(const StepSpec& step, const LocalOptions& options) {
  if (options.container_template.empty() || step.image.empty()) return step.resolved_command;
  std::string missing;
  std::optional<std::string> out;
  try {
    out = render_template(
        options.container_template,
        [&](const std::string& name) -> std::optional<std::string> {
          if (name == "image") return shell_quote(step.image);
          if (name == "command") return shell_quote(step.resolved_command);
          return std::nullopt;
        },
        &missing);
  } catch (const TemplateSyntaxError& e) {
    throw Error(Errc::InvalidArgument, "container template: " + e.message);
  }
  if (!out) throw Error(Errc::InvalidArgument, "container template: unknown placeholder {" + missing + "}");
  return *out;
}

std::vector<std::string> build_environment(const StepSpec& step) {
  std::map<std::string, std::string> env;
  for (char** e = environ; e && *e; ++e) {
    std::string_view kv(*e);
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos) continue;
    env[std::string(kv.substr(0, eq))] = std::string(kv.substr(eq + 1));
  }
  for (const auto& [k, v] : step.environment) env[k] = v;
  std::vector<std::string> out;
  for (const auto& [k, v] : env) out.push_back(k + "=" + v);
  return out;
}

StepObservation base_observation(const StepSpec& step, const std::string& machine) {
  StepObservation obs;
  obs.rule = step.rule_name;
  obs.machine = machine;
  obs.disk_gb = step.resources.disk_gb.value_or(0);
  obs.disk_class = step.resources.disk_class.value_or(DiskClass::Balanced);
  return obs;
}

Rational elapsed_hours(std::chrono::steady_clock::duration d) {
  long long us = std::chrono::duration_cast<std::chrono::microseconds>(d).count();
  if (us < 1) us = 1;
  return Rational(us, 3600LL * 1000000LL);
}

}  // namespace

std::uintmax_t directory_bytes(const fs::path& dir) {
  std::uintmax_t total = 0;
  std::error_code ec;
  if (!fs::exists(dir, ec)) return 0;
  for (fs::recursive_directory_iterator it(dir, fs::directory_options::skip_permission_denied, ec), end;
       !ec && it != end; it.increment(ec)) {
    std::error_code sec;
    const auto st = it->symlink_status(sec);
    if (!sec && fs::is_regular_file(st)) {
      const auto size = it->file_size(sec);
      if (!sec) total += size;
    }
  }
  return total;
}

ProcessPool::ProcessPool(LocalOptions options) : options_(std::move(options)) {}

ProcessPool::~ProcessPool() {
  for (auto& [id, child] : children_) {
    if (child.pid > 0) {
      ::kill(-child.pid, SIGKILL);
      ::waitpid(child.pid, nullptr, 0);
    }
    if (child.exec_errno_fd >= 0) ::close(child.exec_errno_fd);
  }
}

void ProcessPool::start(const std::string& id, const std::string& sample, const StepSpec& step, const fs::path& cwd,
                        const std::string& machine) {
  if (children_.count(id)) throw Error(Errc::StateError, "step '" + id + "' is already running");
  Child child;
  child.sample = sample;
  child.step = step;
  child.cwd = cwd;
  child.machine = machine;
  child.started = std::chrono::steady_clock::now();

  auto spawn_failure = [&](const std::string& why) {
    StepObservation obs = base_observation(step, machine);
    obs.duration_hours = elapsed_hours(std::chrono::steady_clock::now() - child.started);
    obs.failure = FailureReason::SpawnFailure;
    obs.exit_status = 127;
    obs.detail = why;
    child.early = std::move(obs);
    children_.emplace(id, std::move(child));
  };

  std::string command;
  try {
    command = wrap_command(step, options_);
  } catch (const Error& e) {
    return spawn_failure(e.detail());
  }

  const fs::path log_dir = options_.log_root / options_.job_id / sample;
  std::error_code ec;
  fs::create_directories(log_dir, ec);
  fs::create_directories(cwd, ec);
  if (ec) return spawn_failure("cannot create " + cwd.string() + ": " + ec.message());
  const std::string out_path = (log_dir / (step.rule_name + ".out")).string();
  const std::string err_path = (log_dir / (step.rule_name + ".err")).string();
  const std::string cwd_str = cwd.string();
  const std::vector<std::string> env = build_environment(step);
  std::vector<char*> envp;
  for (const auto& e : env) envp.push_back(const_cast<char*>(e.c_str()));
  envp.push_back(nullptr);
  const char* argv[] = {"sh", "-c", command.c_str(), nullptr};

  int pipefd[2];
  if (::pipe2(pipefd, O_CLOEXEC) != 0) return spawn_failure(std::string("pipe: ") + std::strerror(errno));
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(pipefd[0]);
    ::close(pipefd[1]);
    return spawn_failure(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    auto fail = [&](int err) {
      (void)!::write(pipefd[1], &err, sizeof err);
      ::_exit(127);
    };
    if (::chdir(cwd_str.c_str()) != 0) fail(errno);
    const int out = ::open(out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    const int err = ::open(err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    const int in = ::open("/dev/null", O_RDONLY);
    if (out < 0 || err < 0 || in < 0) fail(errno);
    ::dup2(in, 0);
    ::dup2(out, 1);
    ::dup2(err, 2);
    ::execve("/bin/sh", const_cast<char* const*>(argv), envp.data());
    fail(errno);
  }
  ::setpgid(pid, pid);  // also set here so killpg works before the child runs
  ::close(pipefd[1]);
  child.pid = pid;
  child.exec_errno_fd = pipefd[0];
  children_.emplace(id, std::move(child));
}

void ProcessPool::sample_memory() {
  for (auto& [id, child] : children_) {
    if (child.pid > 0) child.peak_rss = std::max(child.peak_rss, group_rss_bytes(child.pid));
  }
  last_sample_ = std::chrono::steady_clock::now();
}

StepObservation ProcessPool::complete(Child& child, int status, const struct rusage& usage) {
  const auto wall = std::chrono::steady_clock::now() - child.started;
  // Stragglers left in the group (background jobs) do not outlive the step.
  ::kill(-child.pid, SIGKILL);

  int exec_err = 0;
  const bool spawn_failed = ::read(child.exec_errno_fd, &exec_err, sizeof exec_err) == sizeof exec_err;
  ::close(child.exec_errno_fd);
  child.exec_errno_fd = -1;

  StepObservation obs = base_observation(child.step, child.machine);
  obs.duration_hours = elapsed_hours(wall);
  const double wall_s = std::max(std::chrono::duration<double>(wall).count(), 1e-6);
  const double cpu_s = usage.ru_utime.tv_sec + usage.ru_utime.tv_usec / 1e6 + usage.ru_stime.tv_sec +
                       usage.ru_stime.tv_usec / 1e6;
  obs.peak_cpu_cores = thousandths_ceil(from_double(cpu_s / wall_s));
  const std::uint64_t maxrss = static_cast<std::uint64_t>(usage.ru_maxrss) * 1024;
  obs.peak_mem_gb = bytes_to_gb(std::max(child.peak_rss, maxrss));
  const std::uintmax_t disk_bytes = directory_bytes(child.cwd);
  obs.peak_disk_gb = bytes_to_gb(disk_bytes);

  if (spawn_failed) {
    obs.failure = FailureReason::SpawnFailure;
    obs.exit_status = 127;
    obs.detail = std::string("cannot start step: ") + std::strerror(exec_err);
  } else if (child.timed_out) {
    obs.failure = FailureReason::Timeout;
    obs.exit_status = 128 + SIGKILL;
    obs.detail = "killed after the step time limit";
  } else if (WIFSIGNALED(status)) {
    obs.failure = FailureReason::NonzeroExit;
    obs.exit_status = 128 + WTERMSIG(status);
    obs.detail = "killed by signal " + std::to_string(WTERMSIG(status));
  } else if (WEXITSTATUS(status) != 0) {
    obs.failure = FailureReason::NonzeroExit;
    obs.exit_status = WEXITSTATUS(status);
    obs.detail = "exit status " + std::to_string(obs.exit_status);
  } else if (obs.disk_gb > 0 && disk_bytes > static_cast<std::uintmax_t>(obs.disk_gb) * kGiB) {
    obs.failure = FailureReason::DiskQuotaExceeded;
    obs.detail = std::to_string(disk_bytes) + " bytes on a " + std::to_string(obs.disk_gb) + " GB disk";
  } else {
    for (const auto& output : child.step.resolved_outputs) {
      if (is_external_path(output)) continue;
      std::error_code ec;
      if (!fs::exists(child.cwd / output, ec)) {
        obs.failure = FailureReason::MissingOutput;
        obs.detail = "declared output '" + output + "' was not produced";
        break;
      }
    }
  }
  return obs;
}

std::optional<std::pair<std::string, StepObservation>> ProcessPool::wait_any() {
  if (children_.empty()) return std::nullopt;
  const auto sample_every = std::chrono::milliseconds(100);
  sample_memory();
  while (true) {
    for (auto it = children_.begin(); it != children_.end(); ++it) {
      Child& child = it->second;
      if (child.early) {
        auto result = std::make_pair(it->first, std::move(*child.early));
        children_.erase(it);
        return result;
      }
      int status = 0;
      struct rusage usage {};
      const pid_t r = ::wait4(child.pid, &status, WNOHANG, &usage);
      if (r == child.pid) {
        auto result = std::make_pair(it->first, complete(child, status, usage));
        children_.erase(it);
        return result;
      }
      if (options_.step_timeout && !child.timed_out &&
          std::chrono::steady_clock::now() - child.started > *options_.step_timeout) {
        child.timed_out = true;
        ::kill(-child.pid, SIGKILL);
      }
    }
    if (std::chrono::steady_clock::now() - last_sample_ >= sample_every) sample_memory();
    std::this_thread::sleep_for(options_.poll_interval);
  }
}

void ProcessPool::cancel(const std::string& id) {
  auto it = children_.find(id);
  if (it == children_.end()) return;
  Child& child = it->second;
  if (child.pid > 0) {
    ::kill(-child.pid, SIGKILL);
    ::waitpid(child.pid, nullptr, 0);
  }
  if (child.exec_errno_fd >= 0) ::close(child.exec_errno_fd);
  children_.erase(it);
}

StepObservation run_step_local(const StepSpec& step, const std::string& sample, const fs::path& cwd,
                               const LocalOptions& options) {
  ProcessPool pool(options);
  pool.start(step.rule_name, sample, step, cwd, step.resources.machine.value_or(""));
  return pool.wait_any()->second;
}

ExecutionOutcome run_task_local(const TaskPlan& plan, const fs::path& disk_root, const ObjectStore* store,
                                const std::optional<StoreUri>& ref_root, const LocalOptions& options) {
  ExecutionOutcome outcome;
  outcome.sample_id = plan.sample_id;
  outcome.succeeded = true;
  std::error_code ec;
  fs::create_directories(disk_root, ec);

  if (store && ref_root && !plan.steps.empty()) {
    int disk_gb = 0;
    for (const auto& step : plan.steps) disk_gb = std::max(disk_gb, step.resources.disk_gb.value_or(0));
    try {
      store->stage_references(*ref_root, disk_root, disk_gb);
    } catch (const Error& e) {
      StepObservation obs = base_observation(plan.steps.front(), plan.steps.front().resources.machine.value_or(""));
      obs.duration_hours = Rational(1, 3600LL * 1000000LL);
      obs.failure = e.code() == Errc::DiskFull ? FailureReason::DiskFull : FailureReason::SpawnFailure;
      obs.exit_status = 1;
      obs.detail = "staging references: " + e.detail();
      outcome.steps.push_back(obs);
      outcome.succeeded = false;
      outcome.failed_step = obs.rule;
      outcome.reason = obs.failure;
      outcome.detail = obs.detail;
      return outcome;
    }
  }

  for (const auto& step : plan.steps) {
    StepObservation obs = run_step_local(step, plan.sample_id, disk_root, options);
    const bool ok = obs.succeeded();
    outcome.steps.push_back(std::move(obs));
    if (!ok) {
      outcome.succeeded = false;
      outcome.failed_step = step.rule_name;
      outcome.reason = outcome.steps.back().failure;
      outcome.detail = outcome.steps.back().detail;
      break;
    }
  }
  return outcome;
}

}  // namespace gflow
