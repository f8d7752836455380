#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace ernn {

// Flags shared by every subcommand. An empty config path means built-in
// defaults (gradcheck substitutes a small shape that satisfies its dim cap).
struct CliOptions {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;  // overrides the config seed
  bool corrupt_backward = false;      // gradcheck negative control
};

// Dispatches one subcommand (train, phase-space, grad-flow, fixed-point,
// stability, gradcheck) and maps exceptions to the exit-code contract:
// 0 success, 1 check failure, 2 invalid config/input, 3 numeric or
// convergence failure. Partial outputs are left in place and the manifest
// still records them when a run dies with code 3.
int run_command(const std::string& command, const CliOptions& options, std::ostream& out,
                std::ostream& err);

// Git-style blob hash (sha1 over "blob <len>\0" + bytes) used to fingerprint
// the config in the run manifest.
std::string config_blob_hash(const std::string& bytes);

}  // namespace ernn
