#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "neoseize/model.hpp"
#include "neoseize/synth.hpp"

namespace neoseize {

inline constexpr const char* kToolVersion = "0.1.0";

struct RunConfig {
  std::uint64_t seed = 0;
  std::string montage = "F3-P3,F4-P4,P3-P4";
  double hop_s = kDefaultHopSeconds;
  std::size_t bootstrap_iters = 1000;
  TrainOptions train;  // includes the calibration grid
  SynthSpec synth;

  // Copies seed, montage and hop into the nested options and validates all.
  void finalize();
};

// JSON config; unknown keys and wrong types are ConfigErrors naming the key.
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
// Canonical JSON of the effective configuration (recorded in manifests).
std::string config_to_json(const RunConfig& config);

// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

// Entry point for the `neoseize` tool. Returns the process exit code: 0 on
// success, 2 on validation errors, 1 on runtime errors.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace neoseize
