#include "gflow/types.hpp"

#include "gflow/error.hpp"

namespace gflow {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::SyntaxError: return "SyntaxError";
    case Errc::DuplicateRule: return "DuplicateRule";
    case Errc::UnknownKeyword: return "UnknownKeyword";
    case Errc::MissingCommand: return "MissingCommand";
    case Errc::BothCommands: return "BothCommands";
    case Errc::UnresolvedInput: return "UnresolvedInput";
    case Errc::CycleError: return "CycleError";
    case Errc::UnsupportedSeries: return "UnsupportedSeries";
    case Errc::UnknownFamily: return "UnknownFamily";
    case Errc::MalformedName: return "MalformedName";
    case Errc::ParseError: return "ParseError";
    case Errc::InconsistentShape: return "InconsistentShape";
    case Errc::DuplicateMachine: return "DuplicateMachine";
    case Errc::InvalidUri: return "InvalidUri";
    case Errc::NoSuchBucket: return "NoSuchBucket";
    case Errc::NoSuchObject: return "NoSuchObject";
    case Errc::NoSuchPrefix: return "NoSuchPrefix";
    case Errc::DiskFull: return "DiskFull";
    case Errc::IoFailure: return "IoFailure";
    case Errc::EmptySampleList: return "EmptySampleList";
    case Errc::DuplicateSampleId: return "DuplicateSampleId";
    case Errc::UnknownSample: return "UnknownSample";
    case Errc::NotInFlight: return "NotInFlight";
    case Errc::UnknownJob: return "UnknownJob";
    case Errc::CorruptLog: return "CorruptLog";
    case Errc::IncompleteSpec: return "IncompleteSpec";
    case Errc::AllTestTasksFailed: return "AllTestTasksFailed";
    case Errc::NoFeasibleMachine: return "NoFeasibleMachine";
    case Errc::UnknownDiskClass: return "UnknownDiskClass";
    case Errc::NonpositiveBaseline: return "NonpositiveBaseline";
    case Errc::MissingDuration: return "MissingDuration";
    case Errc::AlreadyExists: return "AlreadyExists";
    case Errc::UnknownProject: return "UnknownProject";
    case Errc::StateError: return "StateError";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Error";
}

std::string_view to_string(DiskClass disk_class) {
  switch (disk_class) {
    case DiskClass::Standard: return "standard";
    case DiskClass::Balanced: return "balanced";
    case DiskClass::Ssd: return "ssd";
  }
  return "balanced";
}

std::optional<DiskClass> parse_disk_class(std::string_view text) {
  if (text == "standard") return DiskClass::Standard;
  if (text == "balanced") return DiskClass::Balanced;
  if (text == "ssd") return DiskClass::Ssd;
  return std::nullopt;
}

ResourceRequest merge_resources(const std::optional<ResourceRequest>& request, const ResourceRequest& defaults) {
  if (!request) return defaults;
  ResourceRequest merged = *request;
  if (!merged.machine) merged.machine = defaults.machine;
  if (!merged.disk_gb) merged.disk_gb = defaults.disk_gb;
  if (!merged.disk_class) merged.disk_class = defaults.disk_class;
  return merged;
}

}  // namespace gflow
