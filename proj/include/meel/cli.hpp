#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "meel/datakit.hpp"
#include "meel/trainer.hpp"

namespace meel::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

// Resolved contents of a config file. Every omitted field keeps the default
// of SynthConfig / TrainConfig.
struct CliConfig {
  SynthConfig synth;
  std::optional<std::filesystem::path> manifest;  // data.manifest, resolved against the config dir
  TrainConfig train;
  std::string eval_split = "test";
  bool data_seed_given = false;
  bool train_seed_given = false;
};

// Throws Error(kConfig) naming the offending field; unknown keys are rejected.
CliConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
CliConfig load_config(const std::filesystem::path& path);

// Resolved config as JSON, as echoed into the training log.
std::string config_json(const CliConfig& config);

struct TrainOptions {
  std::filesystem::path config;  // empty: all defaults
  std::optional<std::filesystem::path> data;
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> log;  // default: <checkpoint>.log.jsonl
  bool no_infonce = false;
  bool no_center = false;
  bool no_momentum = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
};

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::optional<std::filesystem::path> config;
  std::optional<std::string> encoder;  // "momentum" (default) or "query"
  std::optional<std::string> split;    // "train", "val" or "test" (default)
};

// Commands write machine-readable JSON to `out` and human-readable text to
// `err`, and return an exit code instead of throwing.
int cmd_generate(const std::filesystem::path& config, const std::filesystem::path& out_dir,
                 std::ostream& out, std::ostream& err);
int cmd_train(const TrainOptions& options, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err);

}  // namespace meel::cli
