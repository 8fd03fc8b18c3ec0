#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "forkbench/mining_mdp.hpp"
#include "forkbench/rl_agent.hpp"
#include "forkbench/simulator.hpp"

namespace forkbench {

//! Bad command line or config: the run never starts. Maps to exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Mode : std::uint8_t { Solve, Train, Simulate, Compare, Oracle };
std::string_view to_string(Mode m);
Mode parse_mode(std::string_view text);

/// Everything a command needs. Keys of the config file and CLI flags share one spelling
/// (kebab-case, e.g. `l-max`, `t-eps`); see config_keys().
struct ExperimentConfig {
    Mode mode = Mode::Train;
    ModelParams model{0.35, 1.0, 20};
    AgentHyperparams hyper{};
    std::string schedule;  // empty: one segment (alpha, gamma, steps)
    Backend backend = Backend::Mdp;
    std::uint64_t steps = 20'000'000;
    std::uint64_t t_w = 100'000;
    std::optional<std::uint64_t> seed;
    std::filesystem::path out_dir = "forkbench-out";

    std::string strategy = "honest";  // simulate
    std::vector<std::string> strategies;  // compare
    std::vector<std::uint64_t> seeds;     // compare; defaults to {seed}
    std::filesystem::path policy_file;
    std::filesystem::path qtable_file;
    std::uint64_t checkpoint_every = 1'000'000;
    bool resume = false;
    int n_miners = 1000;
    double p_hash = 1e-3;
    double search_tol = 1e-5;
    unsigned jobs = 0;  // 0: hardware concurrency

    // keys set explicitly (file or flag), for precedence and validation
    std::map<std::string, std::string> explicit_keys;
};

//! Recognised keys, in the order they are echoed.
const std::vector<std::string>& config_keys();

//! Sets one key; throws UsageError on unknown keys or malformed values.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

//! `key = value` lines, '#' comments, blank lines ignored. Unknown or repeated keys are errors.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path);
std::vector<std::pair<std::string, std::string>> parse_config_text(std::istream& in, const std::string& origin);

/// Defaults, then the config file (if any), then flags. FORKBENCH_SEED fills the seed when
/// neither sets it. Validates before returning.
ExperimentConfig resolve_config(Mode mode, const std::optional<std::filesystem::path>& config_file,
                                const std::vector<std::pair<std::string, std::string>>& flags);

//! Range and consistency checks for the config's mode; throws UsageError.
void validate_config(const ExperimentConfig& cfg);

//! The effective config as a loadable file (every key, resolved values).
void write_config(const ExperimentConfig& cfg, std::ostream& out);

std::vector<ScheduleSegment> effective_schedule(const ExperimentConfig& cfg);

//! Integer from text such as "2e7"; rejects fractions and negatives.
std::uint64_t parse_count(std::string_view text);

/// Heuristic only: first window end after which the windowed RMG changes by less than
/// rel_tol (relative) over `windows` consecutive windows. Not a convergence proof.
std::optional<std::uint64_t> plateau_step(const std::vector<SeriesPoint>& series, double rel_tol = 1e-3,
                                          std::size_t windows = 5);

// Training checkpoint: agent tables + rng + chain state + series so far, closed by a checksum
// line over every preceding byte.
struct Checkpoint {
    std::uint64_t step = 0;
    std::string config_text;
    ChainState env_state;
    std::string rng_state;
    std::string qtables;
    std::vector<SeriesPoint> series;
};

void write_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
//! Throws std::runtime_error("checkpoint ... corrupted: ...") on any mismatch.
Checkpoint read_checkpoint(const std::filesystem::path& path);
std::uint64_t fnv1a64(std::string_view bytes);

struct CompareRow {
    std::string strategy;
    std::size_t seeds = 0;
    double final_rmg = 0.0;  // mean over seeds of the last window
    double bound = 0.0;      // alpha / (1 - alpha) at the final segment
    double gap = 0.0;        // bound - final_rmg
    std::optional<std::uint64_t> plateau;  // earliest plateau over seeds (heuristic)
};

// Commands. Each writes into cfg.out_dir and a short report to `out`; they return the
// process exit code. Errors surface as exceptions handled by run_command.
int cmd_solve(const ExperimentConfig& cfg, std::ostream& out);
int cmd_train(const ExperimentConfig& cfg, std::ostream& out);
int cmd_simulate(const ExperimentConfig& cfg, std::ostream& out);
int cmd_compare(const ExperimentConfig& cfg, std::ostream& out);
int cmd_oracle(const ExperimentConfig& cfg, std::ostream& out);

//! Dispatches on cfg.mode and converts exceptions into a stderr message + exit code.
int run_command(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace forkbench
