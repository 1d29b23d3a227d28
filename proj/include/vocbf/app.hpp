#pragma once

// The `vocbf` command line, callable in-process.
//
// Exit codes: 0 ok, 1 a property check failed, 2 configuration error,
// 3 training error, 4 missing artifact, 5 I/O error.

#include <iosfwd>
#include <string>
#include <vector>

namespace vocbf {

enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitConfig = 2,
  kExitTraining = 3,
  kExitMissingArtifact = 4,
  kExitIo = 5,
};

/// Environment variable that overrides the default output root ("runs").
inline constexpr const char* kOutputRootEnv = "VOCBF_OUTPUT_ROOT";

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vocbf
