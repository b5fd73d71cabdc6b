#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace embkit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line (without the program name). Data goes to `out`,
/// logs and errors to `err`. Returns the process exit code.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct PlanDefaults {
  std::uint64_t seed = 42;
  std::uint32_t buckets = 65536;
  std::uint32_t hidden = 256;
  std::uint32_t dim = 64;
};

/// Three-stage plan over the files written by `synth`: NLI-style triplets
/// with MNRL, STS pairs with CoSENT, then retrieval triplets with the
/// gradient-cached MNRL and Matryoshka prefixes. Paths are relative to the
/// plan file.
nlohmann::ordered_json synth_plan(const PlanDefaults& defaults);

}  // namespace embkit::cli
