#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

namespace dpmqte::cli {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

/// Everything one invocation needs. `params` is the full configuration after
/// command-line overrides; it is echoed into the result envelope.
struct RunConfig {
  std::string command;
  nlohmann::json params = nlohmann::json::object();
  std::uint64_t seed = 1;
  int threads = 1;
  std::filesystem::path out = "out";
  bool json = true;
  bool csv = true;
};

/// Builds the run config from a parsed config file. Problems with the
/// envelope keys (command, seed, threads, out, formats) go to `issues`.
RunConfig make_config(std::string command, nlohmann::json params, std::vector<std::string>& issues);

/// Every violated precondition, without sampling. Reads the input file.
std::vector<std::string> validate(const RunConfig& config);

/// Validates, then executes. Returns the process exit code.
int run(const RunConfig& config);

}  // namespace dpmqte::cli
