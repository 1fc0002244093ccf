#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gflow {

enum class Errc {
  // workflow-lang
  SyntaxError,
  DuplicateRule,
  UnknownKeyword,
  MissingCommand,
  BothCommands,
  UnresolvedInput,
  CycleError,
  // machine-catalog
  UnsupportedSeries,
  UnknownFamily,
  MalformedName,
  ParseError,
  InconsistentShape,
  DuplicateMachine,
  // object-store
  InvalidUri,
  NoSuchBucket,
  NoSuchObject,
  NoSuchPrefix,
  DiskFull,
  IoFailure,
  // orchestrator
  EmptySampleList,
  DuplicateSampleId,
  UnknownSample,
  NotInFlight,
  UnknownJob,
  CorruptLog,
  // backends
  IncompleteSpec,
  // cost-optimizer
  AllTestTasksFailed,
  NoFeasibleMachine,
  UnknownDiskClass,
  NonpositiveBaseline,
  MissingDuration,
  // cli-facade
  AlreadyExists,
  UnknownProject,
  StateError,
  InvalidArgument,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  Errc code() const noexcept { return code_; }
  // Message without the error-kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

// Parse failure with a 1-based source position.
class SyntaxError : public Error {
 public:
  SyntaxError(int line, int column, const std::string& message)
      : Error(Errc::SyntaxError,
              "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message),
        line_(line),
        column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

}  // namespace gflow
