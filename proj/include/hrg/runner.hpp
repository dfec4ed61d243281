#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace hrg {

inline constexpr const char* kVersion = "0.1.0";

/// Runs one experiment described by a JSON config, writing CSV/JSON outputs
/// plus a manifest into out_dir. Throws Error on invalid configuration or
/// numerical failure. threads <= 0 means "use the config value or 1".
void run_experiment(const std::string& config_json, const std::string& out_dir,
                    int threads = 0,
                    std::optional<std::uint64_t> seed_override = {});

}  // namespace hrg
