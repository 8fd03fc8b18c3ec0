#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "forkbench/mining_mdp.hpp"

namespace forkbench {

//! A lookup hit a state the policy never assigned.
class PolicyIncomplete : public std::runtime_error {
public:
    explicit PolicyIncomplete(const ChainState& s);
    const ChainState& state() const noexcept { return state_; }

private:
    ChainState state_;
};

//! Malformed policy / Q-table / config file. Carries the 1-based line number.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Deterministic stationary policy: a partial map from states (under one l_max) to actions.
/// Every stored action is legal for its state.
class Policy {
public:
    Policy(std::string name, int l_max);

    const std::string& name() const noexcept { return name_; }
    int l_max() const noexcept { return space_.l_max(); }
    const StateSpace& space() const noexcept { return space_; }

    //! Parameters the policy was derived for; closed-form policies may leave these unset.
    std::optional<double> alpha;
    std::optional<double> gamma;

    /// Fallbacks applied while building a closed-form policy, one line per state.
    /// Not part of the mapping and not persisted.
    std::vector<std::string> notes;

    //! Throws ContractViolation if `a` is not legal in `s` under l_max.
    void set(const ChainState& s, Action a);
    std::optional<Action> find(const ChainState& s) const;
    //! Throws PolicyIncomplete when `s` has no entry.
    Action at(const ChainState& s) const;

    std::size_t populated() const noexcept { return populated_; }
    //! Populated entries in enumeration order.
    std::vector<std::pair<ChainState, Action>> entries() const;

    //! Mapping equality (name, metadata and notes ignored).
    bool same_mapping(const Policy& other) const;

private:
    std::string name_;
    StateSpace space_;
    std::vector<std::int8_t> actions_;
    std::size_t populated_ = 0;
};

// Closed-form strategies. These return the raw prescription; it may be illegal (e.g. Match
// outside a Relevant fork) until passed through legalize().

//! Honest mining. Only defined for l_a, l_h in {0, 1}.
Action honest_action(const ChainState& s);
Action selfish_action(const ChainState& s);
Action lead_stubborn_action(const ChainState& s);

/// Turns a prescription into a legal action: Match outside a legal match becomes Wait, and a
/// Wait removed by truncation becomes Override if the adversary is ahead, else Adopt.
/// Returns the action and whether a fallback fired.
std::pair<Action, bool> legalize(Action prescribed, const ChainState& s, const ModelParams& p);

enum class Strategy : std::uint8_t { Honest, Selfish, LeadStubborn };
std::string_view to_string(Strategy s);

/// Builds a policy over the states reachable from the initial distribution when `rule` is
/// followed (after legalize). Fallbacks are recorded in Policy::notes.
Policy make_policy(std::string name, const ModelParams& p, const std::function<Action(const ChainState&)>& rule);
Policy closed_form_policy(Strategy which, const ModelParams& p);

Action lookup_policy_action(const Policy& pol, const ChainState& s);

// Text format:
//   forkbench-policy v1; alpha=0.35; gamma=1; l_max=80
//   <l_a> <l_h> <fork> <action>     (one line per populated state)
// Recognised header keys are name, alpha, gamma and l_max (required).
void save_policy(const Policy& pol, std::ostream& out);
void save_policy(const Policy& pol, const std::filesystem::path& path);
Policy load_policy(std::istream& in);
Policy load_policy(const std::filesystem::path& path);

/// Parses the compact cell table used to publish optimal policies: one row per l_a, the row
/// label first, then one 3-character cell per l_h starting at `first_l_h`. Cell characters map
/// position-wise to fork = (irrelevant, relevant, active); a/o/m/w are actions and '*' means
/// no entry.
Policy policy_from_cell_table(std::string_view table, int l_max, int first_l_h = 1);

}  // namespace forkbench
