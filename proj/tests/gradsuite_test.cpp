#include <gtest/gtest.h>

#include "eegcrnn/gradsuite.hpp"

using namespace eegcrnn;

TEST(GradientSuite, EveryCasePasses) {
  const auto cases = gradient_suite();
  EXPECT_GE(cases.size(), 30u);
  for (const auto& c : cases) {
    for (std::uint64_t seed : {1u, 2u}) {
      const auto r = c.run(seed);
      EXPECT_LE(r.max_rel_err, 1e-4) << c.name << " seed " << seed;
      EXPECT_GT(r.coordinates, 0u) << c.name;
    }
  }
}

TEST(GradientSuite, InjectedFaultsAreCaught) {
  const auto cases = gradient_suite();
  auto find = [&](const std::string& name) {
    for (const auto& c : cases) {
      if (c.name == name) return c;
    }
    throw std::runtime_error("missing case " + name);
  };
  const std::pair<FaultSite, const char*> sites[] = {
      {FaultSite::EluBackward, "elu"}, {FaultSite::Conv2dBackward, "conv2d"}, {FaultSite::MatmulBackward, "matmul"}};
  for (const auto& [site, op] : sites) {
    FaultInjection fault(site);
    EXPECT_GT(find(op).run(1).max_rel_err, 1e-2) << op;
    EXPECT_GT(find("cascade").run(1).max_rel_err, 1e-2) << op;
  }
  EXPECT_THROW(parse_fault_site("relu"), std::invalid_argument);
}
