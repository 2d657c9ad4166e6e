#pragma once

// Command-line front end: pretrain, embed, eval-link, eval-node, selfcheck.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rgfm/eval.hpp"
#include "rgfm/pretrain.hpp"

namespace rgfm::cli {

enum class Command { pretrain, embed, eval_link, eval_node, selfcheck };

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int missing_file = 2;
inline constexpr int bad_config = 3;
inline constexpr int dimension_mismatch = 4;
inline constexpr int numeric = 5;
}  // namespace exit_code

struct RunConfig {
  Command command = Command::selfcheck;
  std::filesystem::path graph;
  std::filesystem::path labels;
  std::filesystem::path checkpoint;
  std::filesystem::path out;

  TrainConfig train;
  // Set only when given on the command line or in the config file; embed
  // and eval commands then require the checkpoint to agree.
  std::optional<int> dim;
  std::optional<int> layers;

  double holdout = 0.2;
  int k_shots = 5;
  LinkScorer scorer = LinkScorer::dot;
  double selfcheck_scale = 1.0;

  /// Throws ArgumentError for a missing required path or an out-of-range field.
  void validate() const;
  /// Every field as key/value strings, in a fixed order.
  std::vector<std::pair<std::string, std::string>> resolved() const;
};

std::string command_name(Command command);

/// Executes one command. Diagnostics go to log, artifacts to the configured
/// paths. Library errors propagate; see exit_code_for.
int run(const RunConfig& config, std::ostream& log);

/// Maps an exception to its exit code.
int exit_code_for(const std::exception& e);

/// Parses flags (and an optional --config file of "key = value" lines, which
/// flags override), runs, and returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& log);

}  // namespace rgfm::cli
