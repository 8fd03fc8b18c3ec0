#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "forkbench/environment.hpp"
#include "forkbench/mining_mdp.hpp"
#include "forkbench/strategies.hpp"

namespace forkbench {

//! Single exact-MDP step; identical to sample_transition.
std::pair<ChainState, RewardPair> env_step_mdp(const ChainState& s, Action a, const ModelParams& p, Rng& rng);

/// Environment that samples Table I transitions directly.
class MdpEnvironment : public Environment {
public:
    explicit MdpEnvironment(ModelParams p);

    ChainState reset(Rng& rng) override;
    StepResult step(Action a, Rng& rng) override;
    ChainState state() const override { return state_; }
    void restore(const ChainState& s) override;
    const ModelParams& params() const override { return params_; }
    void set_rates(double alpha, double gamma) override;
    std::string backend_name() const override { return "mdp"; }

private:
    ModelParams params_;
    ChainState state_{0, 1, ForkLabel::Irrelevant};
};

/// Miner-level description of the network: identical miners, the first n_adversary of
/// which form the adversary pool.
struct MinerPopulation {
    int n_total = 1000;
    int n_adversary = 350;
    double p_hash = 1e-3;

    //! n_adversary = round(n_total * alpha). Throws unless 0 < n_adversary < n_total.
    static MinerPopulation from_alpha(double alpha, int n_total = 1000, double p_hash = 1e-3);
    int n_honest() const noexcept { return n_total - n_adversary; }
    double effective_alpha() const noexcept { return static_cast<double>(n_adversary) / n_total; }
    void validate() const;
};

/// Which honest miners follow the adversary's published branch during an open race.
/// Miners [n_adversary, n_adversary + on_adversary_branch) do; the split is fixed when the
/// race opens and dropped once it resolves.
struct ForkBookkeeping {
    bool race_open = false;
    int on_adversary_branch = 0;
    std::uint64_t ticks = 0;  // Monte Carlo time elapsed
};

/// One Monte Carlo block discovery. Every tick each miner succeeds independently with
/// probability p_hash; simultaneous successes are resolved by a uniform draw among them.
/// The winner's identity and branch select the Table I outcome.
std::pair<ChainState, RewardPair> env_step_mc(const MinerPopulation& pop, ForkBookkeeping& book, double gamma,
                                              const ChainState& s, Action a, const ModelParams& p, Rng& rng);

class MonteCarloEnvironment : public Environment {
public:
    explicit MonteCarloEnvironment(ModelParams p, int n_total = 1000, double p_hash = 1e-3);

    ChainState reset(Rng& rng) override;
    StepResult step(Action a, Rng& rng) override;
    ChainState state() const override { return state_; }
    void restore(const ChainState& s) override;
    const ModelParams& params() const override { return params_; }
    void set_rates(double alpha, double gamma) override;
    std::string backend_name() const override { return "mc"; }

    const MinerPopulation& population() const noexcept { return pop_; }
    const ForkBookkeeping& bookkeeping() const noexcept { return book_; }
    double effective_gamma() const noexcept;

private:
    ModelParams params_;
    MinerPopulation pop_;
    ForkBookkeeping book_;
    ChainState state_{0, 1, ForkLabel::Irrelevant};
};

enum class Backend : std::uint8_t { Mdp, MonteCarlo };
std::string_view to_string(Backend b);
Backend parse_backend(std::string_view text);
std::unique_ptr<Environment> make_environment(Backend b, const ModelParams& p, int n_miners = 1000,
                                              double p_hash = 1e-3);

/// Append-only reward record with prefix sums kept every `granularity` steps.
class RewardLedger {
public:
    explicit RewardLedger(std::uint64_t granularity = 1);

    void append(const RewardPair& r);
    std::uint64_t size() const noexcept { return steps_; }
    std::uint64_t granularity() const noexcept { return granularity_; }
    std::uint64_t total_adversary() const noexcept { return sum_a_; }
    std::uint64_t total_honest() const noexcept { return sum_h_; }

    //! Cumulative (sum r_a, sum r_h) over the first t steps; t must be a multiple of the
    //! granularity or equal to size().
    std::pair<std::uint64_t, std::uint64_t> prefix(std::uint64_t t) const;

private:
    std::uint64_t granularity_;
    std::uint64_t steps_ = 0;
    std::uint64_t sum_a_ = 0;
    std::uint64_t sum_h_ = 0;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> marks_;  // prefix at k * granularity
};

struct WindowRmg {
    double rmg = 0.0;
    bool empty = false;  // no block accepted inside the window; rmg reported as 0
};

//! RMG over steps [start, start + t_w). Throws ContractViolation if outside the ledger.
WindowRmg windowed_rmg(const RewardLedger& ledger, std::uint64_t start, std::uint64_t t_w);

struct ScheduleSegment {
    double alpha = 0.35;
    double gamma = 1.0;
    std::uint64_t duration = 1;
};

//! Parses "alpha:gamma:duration[,alpha:gamma:duration...]"; durations accept 2e7 style.
std::vector<ScheduleSegment> parse_schedule(std::string_view text);
std::string format_schedule(const std::vector<ScheduleSegment>& schedule);
std::uint64_t schedule_length(const std::vector<ScheduleSegment>& schedule);

struct SeriesPoint {
    std::uint64_t step = 0;  // end of the window
    double rmg = 0.0;
    double alpha = 0.0;
    double gamma = 0.0;
    bool empty = false;
};

struct RunResult {
    std::vector<SeriesPoint> series;
    std::uint64_t steps = 0;
    std::uint64_t blocks_adversary = 0;
    std::uint64_t blocks_honest = 0;
};

struct RunOptions {
    std::uint64_t t_w = 100'000;
    //! Global step to resume from; must be a multiple of t_w.
    std::uint64_t start_step = 0;
    //! Called after every completed window with the global step count.
    std::function<void(std::uint64_t step, const SeriesPoint& point)> on_window;
};

/// Plays `controller` against `env` through the schedule. The environment is not reset and
/// controller state is never reset between segments. One series point per t_w steps; a
/// trailing partial window is dropped.
RunResult run_schedule(Controller& controller, Environment& env, const std::vector<ScheduleSegment>& schedule,
                       const RunOptions& opts, Rng& rng);

/// Plays a fixed policy; never mutates it.
class PolicyController : public Controller {
public:
    explicit PolicyController(const Policy& pol) : pol_(pol) {}
    Action act(const ChainState& s, const ModelParams&, Rng&) override { return pol_.at(s); }
    void observe(const ChainState&, Action, const StepResult&, const ModelParams&) override {}
    std::string name() const override { return pol_.name(); }

private:
    const Policy& pol_;
};

//! Header: step,rmg,alpha,gamma,strategy,seed,backend,empty
void write_series_csv_header(std::ostream& out);
void write_series_csv(std::ostream& out, const std::vector<SeriesPoint>& series, std::string_view strategy,
                      std::uint64_t seed, std::string_view backend);

//! Mean RMG over the last `count` non-empty points (all points if fewer).
double tail_mean_rmg(const std::vector<SeriesPoint>& series, std::size_t count);

}  // namespace forkbench
