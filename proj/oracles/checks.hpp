#pragma once

#include <functional>
#include <string>
#include <vector>

namespace thzloc::oracle {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct NamedCheck {
  std::string name;
  std::string module;
  bool monte_carlo = false;  // slow statistical check
  std::function<Outcome()> run;
};

// Library results compared against the independent references in oracles.hpp.
const std::vector<NamedCheck>& derived_checks();

}  // namespace thzloc::oracle
