#include <doctest.h>

#include "oracles/checks.hpp"

TEST_CASE("library agrees with the independent oracles") {
  for (const auto& c : thzloc::oracle::derived_checks()) {
    if (c.monte_carlo) continue;
    SUBCASE(c.name.c_str()) {
      const thzloc::oracle::Outcome o = c.run();
      INFO(c.module << ": " << o.detail);
      CHECK(o.pass);
    }
  }
}
