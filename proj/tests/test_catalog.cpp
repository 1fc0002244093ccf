#include <gtest/gtest.h>

#include <random>

#include "gflow/catalog.hpp"
#include "gflow/error.hpp"
#include "test_util.hpp"

namespace gflow {
namespace {

using testing::R;

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return Errc::InvalidArgument;
}

TEST(MachineName, PaperShapes) {
  EXPECT_EQ(parse_machine_name("e2-standard-16"), (MachineShape{Series::E2, Family::Standard, 16, Rational(64)}));
  EXPECT_EQ(parse_machine_name("n2-highmem-16").mem_gb, Rational(128));
  EXPECT_EQ(parse_machine_name("e2-standard-4").mem_gb, Rational(16));
  EXPECT_EQ(parse_machine_name("n2-standard-4").vcpu, 4);
  EXPECT_EQ(parse_machine_name("n1-highcpu-8").mem_gb, Rational(8));
}

TEST(MachineName, Errors) {
  EXPECT_EQ(code_of([] { parse_machine_name("c2-standard-4"); }), Errc::UnsupportedSeries);
  EXPECT_EQ(code_of([] { parse_machine_name("e2-ultramem-4"); }), Errc::UnknownFamily);
  EXPECT_EQ(code_of([] { parse_machine_name("e2-standard"); }), Errc::MalformedName);
  EXPECT_EQ(code_of([] { parse_machine_name("e2-standard-0"); }), Errc::MalformedName);
  EXPECT_EQ(code_of([] { parse_machine_name("e2-standard-4x"); }), Errc::MalformedName);
}

TEST(Catalog, SampleCatalogLoads) {
  const MachineCatalog c = testing::sample_catalog();
  EXPECT_EQ(c.currency(), "USD");
  EXPECT_EQ(c.at("e2-standard-4").price_per_hour, R("0.1675"));
  EXPECT_EQ(c.at("n2-highmem-16").price_per_hour, R("0.9986"));
  EXPECT_EQ(c.disk_price(DiskClass::Balanced), R("0.0001"));
  EXPECT_EQ(c.find("c2-standard-4"), nullptr);
}

TEST(Catalog, InconsistentShapeNeedsOverride) {
  const std::string disks =
      R"("disks": [{"class": "standard", "price_per_gb_hour": 0}, {"class": "balanced", "price_per_gb_hour": 0},
                   {"class": "ssd", "price_per_gb_hour": 0}])";
  const std::string bad = R"({"machines": [{"name": "e2-standard-4", "price_per_hour": 1, "mem_gb": 20}], )" + disks + "}";
  EXPECT_EQ(code_of([&] { parse_catalog(bad); }), Errc::InconsistentShape);
  const std::string ok =
      R"({"machines": [{"name": "e2-standard-4", "price_per_hour": 1, "mem_gb": 20, "override": true}], )" + disks + "}";
  EXPECT_EQ(parse_catalog(ok).at("e2-standard-4").mem_gb, Rational(20));
  const std::string dup = R"({"machines": [{"name": "e2-standard-4", "price_per_hour": 1},
                                            {"name": "e2-standard-4", "price_per_hour": 2}], )" + disks + "}";
  EXPECT_EQ(code_of([&] { parse_catalog(dup); }), Errc::DuplicateMachine);
  EXPECT_EQ(code_of([] { parse_catalog("{not json"); }), Errc::ParseError);
}

TEST(Catalog, JsonRoundTrip) {
  const MachineCatalog c = testing::sample_catalog();
  const MachineCatalog back = parse_catalog(catalog_to_json(c));
  EXPECT_EQ(back.machines(), c.machines());
  EXPECT_EQ(back.disk_price(DiskClass::Ssd), c.disk_price(DiskClass::Ssd));
}

TEST(Catalog, ScaledMultipliesEveryPrice) {
  const MachineCatalog c = testing::sample_catalog();
  const MachineCatalog s = c.scaled(Rational(3));
  for (std::size_t i = 0; i < c.machines().size(); ++i) {
    EXPECT_EQ(s.machines()[i].price_per_hour, c.machines()[i].price_per_hour * 3);
  }
}

TEST(Feasible, CheapestFirstWithTieBreak) {
  const MachineCatalog c = testing::small_catalog({testing::machine("n2-standard-8", "0.5"),
                                                   testing::machine("e2-standard-8", "0.5"),
                                                   testing::machine("e2-standard-4", "0.5"),
                                                   testing::machine("e2-highmem-2", "0.1")});
  const auto f = feasible_machines(c, Rational(3), Rational(12));
  ASSERT_EQ(f.size(), 3u);
  EXPECT_EQ(f[0].name, "e2-standard-4");
  EXPECT_EQ(f[1].name, "e2-standard-8");
  EXPECT_EQ(f[2].name, "n2-standard-8");
}

TEST(Feasible, MatchesBruteForce) {
  std::mt19937_64 rng(21);
  const char* series[] = {"e2", "n2", "n1"};
  const char* families[] = {"standard", "highmem", "highcpu"};
  const int sizes[] = {2, 4, 8, 16, 32, 64};
  for (int round = 0; round < 300; ++round) {
    std::vector<MachineType> ms;
    std::set<std::string> names;
    const int n = 1 + static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i) {
      const std::string name =
          std::string(series[rng() % 3]) + "-" + families[rng() % 3] + "-" + std::to_string(sizes[rng() % 6]);
      if (!names.insert(name).second) continue;
      ms.push_back(testing::machine(name, std::to_string(1 + rng() % 5).c_str()));
    }
    const MachineCatalog c = testing::small_catalog(ms);
    const Rational cpu(static_cast<long long>(rng() % 400), 10);
    const Rational mem(static_cast<long long>(rng() % 3000), 10);
    const auto got = feasible_machines(c, cpu, mem);

    std::vector<MachineType> brute;
    for (const auto& m : ms) {
      if (Rational(m.vcpu) >= cpu && m.mem_gb >= mem) brute.push_back(m);
    }
    ASSERT_EQ(got.size(), brute.size());
    for (const auto& m : brute) EXPECT_NE(std::find(got.begin(), got.end(), m), got.end());
    for (std::size_t i = 1; i < got.size(); ++i) {
      const auto& a = got[i - 1];
      const auto& b = got[i];
      EXPECT_TRUE(a.price_per_hour < b.price_per_hour ||
                  (a.price_per_hour == b.price_per_hour &&
                   (a.vcpu < b.vcpu || (a.vcpu == b.vcpu && a.name < b.name))));
    }
  }
}

}  // namespace
}  // namespace gflow
