#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

#include "forkbench/mining_mdp.hpp"
#include "forkbench/strategies.hpp"

namespace forkbench {

//! Solver failures: non-convergence, bracket failure, degenerate chains, oversize oracle runs.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mining MDP with scalar rewards w = (1 - rho) * r_a - rho * r_h, stored in CSR-like form.
///
/// Only states reachable from the initial distribution are kept; `slot` maps a StateSpace
/// index to its position in `states` (or -1).
struct WeightedMdp {
    struct Branch {
        std::int32_t next = 0;
        double prob = 0.0;
        RewardPair reward;
        double weight = 0.0;
    };
    struct Choice {
        Action action = Action::Adopt;
        std::uint32_t first = 0;  // into branches
        std::uint32_t count = 0;
    };

    ModelParams params;
    double rho = 0.0;
    std::vector<ChainState> states;
    std::vector<std::int32_t> slot;
    std::vector<std::uint32_t> choice_begin;  // size states.size() + 1
    std::vector<Choice> choices;
    std::vector<Branch> branches;

    std::size_t num_states() const noexcept { return states.size(); }
    //! Recomputes every branch weight for a new rho.
    void reweight(double new_rho);
};

WeightedMdp build_weighted_mdp(const ModelParams& p, double rho);

struct AverageRewardSolution {
    Policy policy;
    double gain = 0.0;
    std::size_t iterations = 0;
    double residual = 0.0;  // span of (T h - h) at exit
    std::vector<double> bias;
};

struct RviOptions {
    double tol = 1e-7;
    std::size_t max_iterations = 1'000'000;
    //! Self-loop mixing weight of the aperiodicity transform; 1 disables it.
    double tau = 0.5;
};

/// Relative value iteration for the average-reward criterion. Greedy ties go to the lowest
/// action index. `warm_start`, when given, must have one entry per state.
AverageRewardSolution solve_average_reward(const WeightedMdp& m, const RviOptions& opts = {},
                                           const std::vector<double>* warm_start = nullptr);

struct SolveReport {
    Policy policy;
    double rho_star = 0.0;
    double gain = 0.0;             // g(rho_star) from the final solve
    double gain_bound = 0.0;       // certified bound on |g(rho_star)|
    double policy_rmg = 0.0;       // exact_policy_rmg of `policy`
    std::size_t iterations = 0;    // RVI sweeps summed over the search
    std::size_t solves = 0;
    double residual = 0.0;
};

/// Bisection on rho in [0, 1] for the root of the optimal gain g(rho). The returned rho_star
/// is the lower end of the final bracket, where g >= 0, so rho_star never exceeds the optimum.
SolveReport find_optimal_policy(const ModelParams& p, double search_tol = 1e-5, const RviOptions& opts = {});

void write_solve_report(const SolveReport& r, std::ostream& out);

struct ChainStatistics {
    double rmg = 0.0;
    double adversary_rate = 0.0;  // E_pi[r_a] per transition
    double honest_rate = 0.0;     // E_pi[r_h] per transition
    std::vector<std::pair<ChainState, double>> stationary;  // recurrent states only
};

/// Stationary analysis of the chain a policy induces from the initial distribution.
/// Throws SolverError if the chain has more than one closed class or accepts no blocks.
ChainStatistics policy_chain_statistics(const Policy& pol, const ModelParams& p);
double exact_policy_rmg(const Policy& pol, const ModelParams& p);

struct OracleReport {
    Policy best;
    double best_rmg = 0.0;
    std::uint64_t enumerated = 0;
};

//! Upper bound on the number of deterministic policies the oracle would visit.
double oracle_policy_count(const ModelParams& p);

/// Exhaustive search over deterministic stationary policies on the reachable states.
/// Refuses l_max > 3 or more than `max_policies` candidates.
OracleReport enumerate_policies_oracle(const ModelParams& p, double max_policies = 5e7);

}  // namespace forkbench
