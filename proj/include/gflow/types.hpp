#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace gflow {

enum class DiskClass { Standard, Balanced, Ssd };

std::string_view to_string(DiskClass disk_class);
std::optional<DiskClass> parse_disk_class(std::string_view text);

// A step's requested resources. Unset fields are filled from engine defaults.
struct ResourceRequest {
  std::optional<std::string> machine;
  std::optional<int> disk_gb;
  std::optional<DiskClass> disk_class;

  bool operator==(const ResourceRequest&) const = default;

  bool empty() const { return !machine && !disk_gb && !disk_class; }
  bool complete() const { return machine && disk_gb && disk_class; }
};

// Fields set in `request` win; everything else comes from `defaults`.
ResourceRequest merge_resources(const std::optional<ResourceRequest>& request, const ResourceRequest& defaults);

inline constexpr int kMinDiskGb = 10;

}  // namespace gflow
