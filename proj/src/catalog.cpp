#include "gflow/catalog.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "gflow/error.hpp"

namespace gflow {

using nlohmann::json;

std::string_view to_string(Series series) {
  switch (series) {
    case Series::E2: return "e2";
    case Series::N2: return "n2";
    case Series::N1: return "n1";
  }
  return "e2";
}

std::string_view to_string(Family family) {
  switch (family) {
    case Family::Standard: return "standard";
    case Family::Highmem: return "highmem";
    case Family::Highcpu: return "highcpu";
  }
  return "standard";
}

int memory_ratio(Family family) {
  switch (family) {
    case Family::Standard: return 4;
    case Family::Highmem: return 8;
    case Family::Highcpu: return 1;
  }
  return 4;
}

MachineShape parse_machine_name(std::string_view name) {
  const auto first = name.find('-');
  const auto second = first == std::string_view::npos ? first : name.find('-', first + 1);
  if (second == std::string_view::npos || name.find('-', second + 1) != std::string_view::npos) {
    throw Error(Errc::MalformedName, "expected <series>-<family>-<vcpu>, got '" + std::string(name) + "'");
  }
  const std::string_view series_text = name.substr(0, first);
  const std::string_view family_text = name.substr(first + 1, second - first - 1);
  const std::string_view count_text = name.substr(second + 1);

  MachineShape shape{};
  if (series_text == "e2") {
    shape.series = Series::E2;
  } else if (series_text == "n2") {
    shape.series = Series::N2;
  } else if (series_text == "n1") {
    shape.series = Series::N1;
  } else {
    throw Error(Errc::UnsupportedSeries,
                "'" + std::string(name) + "': unsupported series '" + std::string(series_text) +
                    "' (supported: e2, n2, n1)");
  }

  if (family_text == "standard") {
    shape.family = Family::Standard;
  } else if (family_text == "highmem") {
    shape.family = Family::Highmem;
  } else if (family_text == "highcpu") {
    shape.family = Family::Highcpu;
  } else {
    throw Error(Errc::UnknownFamily, "'" + std::string(name) + "': unknown family '" + std::string(family_text) + "'");
  }

  int vcpu = 0;
  const bool digits_only = !count_text.empty() && count_text.front() != '0' &&
                           std::all_of(count_text.begin(), count_text.end(),
                                       [](char c) { return c >= '0' && c <= '9'; });
  auto [ptr, ec] = std::from_chars(count_text.data(), count_text.data() + count_text.size(), vcpu);
  if (!digits_only || ec != std::errc() || ptr != count_text.data() + count_text.size()) {
    throw Error(Errc::MalformedName, "'" + std::string(name) + "': vCPU count must be a positive integer");
  }
  shape.vcpu = vcpu;
  shape.mem_gb = Rational(vcpu) * memory_ratio(shape.family);
  return shape;
}

MachineCatalog::MachineCatalog(std::vector<MachineType> machines, std::vector<DiskPrice> disks, std::string currency)
    : machines_(std::move(machines)), disks_(std::move(disks)), currency_(std::move(currency)) {}

const MachineType* MachineCatalog::find(std::string_view name) const {
  for (const auto& m : machines_) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

const MachineType& MachineCatalog::at(std::string_view name) const {
  if (const auto* m = find(name)) return *m;
  throw Error(Errc::InvalidArgument, "machine '" + std::string(name) + "' is not in the catalog");
}

const Rational& MachineCatalog::disk_price(DiskClass disk_class) const {
  for (const auto& d : disks_) {
    if (d.disk_class == disk_class) return d.price_per_gb_hour;
  }
  throw Error(Errc::UnknownDiskClass, "no price for disk class '" + std::string(to_string(disk_class)) + "'");
}

MachineCatalog MachineCatalog::scaled(const Rational& factor) const {
  MachineCatalog copy = *this;
  for (auto& m : copy.machines_) m.price_per_hour *= factor;
  for (auto& d : copy.disks_) d.price_per_gb_hour *= factor;
  return copy;
}

MachineCatalog parse_catalog(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, std::string("catalog is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(Errc::ParseError, "catalog must be a JSON object");

  try {
    std::string currency = doc.value("currency", std::string("USD"));

    std::vector<MachineType> machines;
    std::set<std::string> seen;
    for (const auto& entry : doc.at("machines")) {
      const std::string name = entry.at("name").get<std::string>();
      if (!seen.insert(name).second) throw Error(Errc::DuplicateMachine, "machine '" + name + "' listed twice");
      const MachineShape shape = parse_machine_name(name);
      Rational mem = shape.mem_gb;
      if (entry.contains("mem_gb")) {
        const Rational declared = rational_from_json(entry.at("mem_gb"));
        const bool override_shape = entry.value("override", false);
        if (declared <= 0) throw Error(Errc::ParseError, "machine '" + name + "': mem_gb must be positive");
        if (declared != shape.mem_gb && !override_shape) {
          throw Error(Errc::InconsistentShape, "machine '" + name + "' declares " + to_exact_string(declared) +
                                                   " GB but its family implies " + to_exact_string(shape.mem_gb) +
                                                   " GB (set \"override\": true to keep it)");
        }
        mem = declared;
      }
      const Rational price = rational_from_json(entry.at("price_per_hour"));
      if (price < 0) throw Error(Errc::ParseError, "machine '" + name + "': negative price");
      machines.push_back({name, shape.series, shape.family, shape.vcpu, mem, price});
    }

    std::vector<DiskPrice> disks;
    for (const auto& entry : doc.at("disks")) {
      const std::string cls = entry.at("class").get<std::string>();
      auto disk_class = parse_disk_class(cls);
      if (!disk_class) throw Error(Errc::ParseError, "unknown disk class '" + cls + "'");
      for (const auto& d : disks) {
        if (d.disk_class == *disk_class) throw Error(Errc::ParseError, "disk class '" + cls + "' listed twice");
      }
      const Rational price = rational_from_json(entry.at("price_per_gb_hour"));
      if (price < 0) throw Error(Errc::ParseError, "disk class '" + cls + "': negative price");
      disks.push_back({*disk_class, price});
    }
    for (auto cls : {DiskClass::Standard, DiskClass::Balanced, DiskClass::Ssd}) {
      if (std::none_of(disks.begin(), disks.end(), [&](const DiskPrice& d) { return d.disk_class == cls; })) {
        throw Error(Errc::ParseError, "catalog has no price for disk class '" + std::string(to_string(cls)) + "'");
      }
    }
    return MachineCatalog(std::move(machines), std::move(disks), std::move(currency));
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("malformed catalog: ") + e.what());
  } catch (const Error& e) {
    // Name-parsing failures surface as a catalog parse error but keep their detail.
    if (e.code() == Errc::UnsupportedSeries || e.code() == Errc::UnknownFamily || e.code() == Errc::MalformedName) {
      throw Error(Errc::ParseError, std::string(e.what()));
    }
    throw;
  }
}

MachineCatalog load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot read catalog " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_catalog(buffer.str());
}

std::string catalog_to_json(const MachineCatalog& catalog) {
  json doc;
  doc["currency"] = catalog.currency();
  doc["machines"] = json::array();
  for (const auto& m : catalog.machines()) {
    json entry{{"name", m.name}, {"price_per_hour", to_exact_string(m.price_per_hour)}};
    if (m.mem_gb != Rational(m.vcpu) * memory_ratio(m.family)) {
      entry["mem_gb"] = to_exact_string(m.mem_gb);
      entry["override"] = true;
    }
    doc["machines"].push_back(entry);
  }
  doc["disks"] = json::array();
  for (const auto& d : catalog.disks()) {
    doc["disks"].push_back({{"class", to_string(d.disk_class)}, {"price_per_gb_hour", to_exact_string(d.price_per_gb_hour)}});
  }
  return doc.dump(2);
}

bool cheaper_machine(const MachineType& a, const MachineType& b) {
  if (a.price_per_hour != b.price_per_hour) return a.price_per_hour < b.price_per_hour;
  if (a.vcpu != b.vcpu) return a.vcpu < b.vcpu;
  return a.name < b.name;
}

std::vector<MachineType> feasible_machines(const MachineCatalog& catalog, const Rational& need_vcpu,
                                           const Rational& need_mem_gb) {
  std::vector<MachineType> result;
  for (const auto& m : catalog.machines()) {
    if (Rational(m.vcpu) >= need_vcpu && m.mem_gb >= need_mem_gb) result.push_back(m);
  }
  std::sort(result.begin(), result.end(), cheaper_machine);
  return result;
}

}  // namespace gflow
