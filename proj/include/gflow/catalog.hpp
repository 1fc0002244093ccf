#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gflow/rational.hpp"
#include "gflow/types.hpp"

namespace gflow {

enum class Series { E2, N2, N1 };
enum class Family { Standard, Highmem, Highcpu };

std::string_view to_string(Series series);
std::string_view to_string(Family family);

// GB of memory per vCPU for a family: standard 4, highmem 8, highcpu 1.
int memory_ratio(Family family);

struct MachineShape {
  Series series;
  Family family;
  int vcpu;
  Rational mem_gb;

  bool operator==(const MachineShape&) const = default;
};

// Splits `<series>-<family>-<vcpu>`, e.g. "e2-standard-16" -> (e2, standard, 16, 64 GB).
// Throws UnsupportedSeries, UnknownFamily or MalformedName.
MachineShape parse_machine_name(std::string_view name);

struct MachineType {
  std::string name;
  Series series;
  Family family;
  int vcpu;
  Rational mem_gb;
  Rational price_per_hour;

  bool operator==(const MachineType&) const = default;
};

struct DiskPrice {
  DiskClass disk_class;
  Rational price_per_gb_hour;
};

class MachineCatalog {
 public:
  MachineCatalog() = default;
  MachineCatalog(std::vector<MachineType> machines, std::vector<DiskPrice> disks, std::string currency);

  const std::vector<MachineType>& machines() const { return machines_; }
  const std::vector<DiskPrice>& disks() const { return disks_; }
  const std::string& currency() const { return currency_; }

  // nullptr when absent.
  const MachineType* find(std::string_view name) const;
  const MachineType& at(std::string_view name) const;

  // Throws UnknownDiskClass.
  const Rational& disk_price(DiskClass disk_class) const;

  // Copy with every machine and disk price multiplied by `factor`.
  MachineCatalog scaled(const Rational& factor) const;

 private:
  std::vector<MachineType> machines_;
  std::vector<DiskPrice> disks_;
  std::string currency_ = "USD";
};

// JSON document: {currency, machines: [{name, price_per_hour, mem_gb?, override?}], disks: [{class, price_per_gb_hour}]}.
MachineCatalog parse_catalog(std::string_view json_text);
MachineCatalog load_catalog(const std::filesystem::path& path);
std::string catalog_to_json(const MachineCatalog& catalog);

// Machines with vcpu >= need_vcpu and mem_gb >= need_mem_gb, cheapest first; ties by vcpu then name.
std::vector<MachineType> feasible_machines(const MachineCatalog& catalog, const Rational& need_vcpu,
                                           const Rational& need_mem_gb);

// The feasible_machines ordering.
bool cheaper_machine(const MachineType& a, const MachineType& b);

}  // namespace gflow
