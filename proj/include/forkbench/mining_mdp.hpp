#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace forkbench {

//! Random stream used by every sampler in the library. One stream per worker.
using Rng = std::mt19937_64;

//! Raised when a caller breaks an operation's precondition (bad state, illegal action).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class ForkLabel : std::uint8_t { Irrelevant = 0, Relevant = 1, Active = 2 };
inline constexpr std::array<ForkLabel, 3> kForkLabels{ForkLabel::Irrelevant, ForkLabel::Relevant,
                                                      ForkLabel::Active};

enum class Action : std::uint8_t { Adopt = 0, Override = 1, Match = 2, Wait = 3 };
inline constexpr std::array<Action, 4> kActions{Action::Adopt, Action::Override, Action::Match,
                                                Action::Wait};
inline constexpr std::size_t kNumActions = kActions.size();

std::string_view to_string(ForkLabel f);
std::string_view to_string(Action a);
ForkLabel parse_fork_label(std::string_view text);
Action parse_action(std::string_view text);

//! MDP state: chain lengths since the last fork point plus the fork label.
struct ChainState {
    int l_a = 0;
    int l_h = 0;
    ForkLabel fork = ForkLabel::Irrelevant;

    auto operator<=>(const ChainState&) const = default;
};

std::string to_string(const ChainState& s);

//! Blocks accepted by the whole network during one transition.
struct RewardPair {
    int r_a = 0;
    int r_h = 0;

    auto operator<=>(const RewardPair&) const = default;
};

struct ModelParams {
    double alpha = 0.35;
    double gamma = 1.0;
    int l_max = 20;

    //! Strict check used before any experiment: alpha in (0,0.5], gamma in [0,1], l_max >= 2.
    //! Simulation and learning need l_max >= 2; the solver and oracle also take l_max = 1.
    void validate(int min_l_max = 2) const;
};

struct TransitionEntry {
    ChainState next;
    double prob = 0.0;
    RewardPair reward;
};

//! Which party mined the block that triggers a transition.
enum class MiningEvent : std::uint8_t {
    AdversaryBlock,
    HonestOnAdversaryBranch,  // only distinguishable while a match competition is open
    HonestOnHonestBranch,
};

/// Ordered action set available at `s`.
///
/// Adopt is always legal. Override needs l_a > l_h. Match needs l_a >= l_h and a Relevant
/// fork. Wait is always nominally legal. Truncation at l_max removes every action that could
/// push a chain past the bound: at l_h = l_max only Adopt (and Override if ahead) remain; at
/// l_a = l_max both Wait and Match are removed.
std::vector<Action> allowed_actions(const ChainState& s, const ModelParams& p);
bool is_allowed(const ChainState& s, Action a, const ModelParams& p);

//! Throws ContractViolation unless 0 <= l_a, l_h <= l_max.
void check_state(const ChainState& s, const ModelParams& p);

/// True when (s, a) opens or continues a public two-branch race, i.e. the honest network
/// splits gamma : (1 - gamma) between the branches.
bool is_contested(const ChainState& s, Action a);

/// Deterministic successor and reward for one mining event. `event` must be possible for
/// (s, a); HonestOnAdversaryBranch is only possible when is_contested(s, a).
std::pair<ChainState, RewardPair> apply_event(const ChainState& s, Action a, MiningEvent event);

/// Full successor distribution for a legal (s, a). Zero-probability branches are omitted,
/// so e.g. a Match at gamma = 1 yields two entries.
std::vector<TransitionEntry> transition_distribution(const ChainState& s, Action a,
                                                     const ModelParams& p);

std::pair<ChainState, RewardPair> sample_transition(const ChainState& s, Action a,
                                                    const ModelParams& p, Rng& rng);

//! (1,0,Irrelevant) with probability alpha, otherwise (0,1,Irrelevant); reward (0,0).
std::pair<ChainState, RewardPair> initial_state(const ModelParams& p, Rng& rng);

/// Dense indexing of all (l_max+1)^2 * 3 states, ordered by l_a, then l_h, then fork.
class StateSpace {
public:
    explicit StateSpace(int l_max);

    int l_max() const noexcept { return l_max_; }
    std::size_t size() const noexcept { return size_; }
    std::size_t index(const ChainState& s) const;
    ChainState at(std::size_t index) const;

    bool operator==(const StateSpace&) const = default;

private:
    int l_max_;
    std::size_t size_;
};

std::vector<ChainState> enumerate_states(const ModelParams& p);

/// States reachable from the initial distribution when any legal action may be played.
/// Returned in enumeration order.
std::vector<ChainState> reachable_states(const ModelParams& p);

//! Uniform draw in [0, 1).
double uniform01(Rng& rng);

}  // namespace forkbench
