#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>

namespace maskface {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

std::string cli_usage();

/// `args` excludes the program name: `<command> [--config PATH] [--key value ...]`.
/// `env_seed` is the value of MASKFACE_SEED, if set.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err,
            const std::optional<std::string>& env_seed = std::nullopt);

}  // namespace maskface
