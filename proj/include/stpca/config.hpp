#pragma once

// INI configuration: sections [model] [dynamics] [population] [recovery]
// [conditions] [sweep] [output] [check]. Unknown sections or keys are
// errors. Overrides "section.key=value" are applied after the file, in
// order, last one wins.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stpca/harness.hpp"

namespace stpca {

struct OutputSpec {
  std::string dir = "out";
  bool trajectories = false;
};

struct CheckSpec {
  std::size_t samples = 100;
};

struct RunConfig {
  TrialConfig trial;
  SweepSpec sweep;
  OutputSpec output;
  CheckSpec check;
  std::string hash;        // of the canonical key=value listing
  std::string canonical;   // sorted "section.key=value" lines
  std::vector<std::string> notices;  // overrides that replaced a value
};

/// Every key the loader understands, with its default as text.
const std::map<std::string, std::string>& config_defaults();

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});

/// FNV-1a 64, hex.
std::string fnv1a_hex(const std::string& text);

}  // namespace stpca
