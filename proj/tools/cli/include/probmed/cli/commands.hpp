#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "probmed/cli/run_config.hpp"
#include "probmed/oracles.hpp"

namespace probmed::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumerical = 2;

/// Name of the environment variable giving the default report directory.
inline constexpr const char* kReportDirEnv = "PROBMED_REPORT_DIR";

/// Flags shared by the commands that produce outputs.
struct CommonOptions {
  std::string config_path;
  std::string run_dir;  // exact output directory; empty = timestamped
  std::optional<std::uint64_t> seed;
};

/// `run_dir` if set; otherwise <base>/<command>-<UTC timestamp>[-n], where
/// base is paths.report_dir, then $PROBMED_REPORT_DIR, then "runs".
std::filesystem::path make_run_dir(const std::string& command, const CommonOptions& common,
                                   const RunConfig& cfg);

struct GenOptions {
  CommonOptions common;
  std::string out;  // corpus path override
};

struct TrainOptions {
  CommonOptions common;
  std::string corpus;
  std::optional<std::string> similarity;
  std::optional<std::size_t> steps;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  std::optional<bool> sis;
  std::optional<bool> bn;
};

struct EvalOptions {
  CommonOptions common;
  std::string checkpoint;
  std::string corpus;
  std::optional<std::string> protocol;
  std::optional<std::string> similarity;
  std::optional<std::string> filter_prompts;  // "all" or a number
  std::optional<std::string> fewshot_mode;
  std::optional<std::size_t> n;
  std::optional<std::vector<std::size_t>> shots;
  std::optional<std::string> fusion;
};

struct VerifyOptions {
  std::string run_dir;
  /// Replaces the library Hellinger with a sign-corrupted one; used to show
  /// that the oracles catch a wrong implementation.
  bool corrupt_hellinger = false;
};

struct AblateOptions {
  CommonOptions common;
  std::string corpus;
  std::string grid = "similarity";  // similarity | sis-bn
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::optional<std::size_t> steps;
};

int cmd_gen(const GenOptions& opt, std::ostream& out, std::ostream& err);
int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err);
int cmd_verify(const VerifyOptions& opt, std::ostream& out, std::ostream& err);
int cmd_ablate(const AblateOptions& opt, std::ostream& out, std::ostream& err);

/// Sign-flipped mean term inside the Bhattacharyya coefficient.
double corrupted_hellinger_sq(const ProbEmbedding& a, const ProbEmbedding& b);

/// Parses "1,2,4" style lists.
std::vector<std::size_t> parse_size_list(const std::string& text);

}  // namespace probmed::cli
