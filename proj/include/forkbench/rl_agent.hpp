#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "forkbench/environment.hpp"
#include "forkbench/mining_mdp.hpp"
#include "forkbench/strategies.hpp"

namespace forkbench {

struct AgentHyperparams {
    double beta = 0.05;     // learning rate, (0, 1]
    double lambda = 0.999;  // discount, (0, 1]
    double t_eps = 1e4;     // exploration temperature; 0 means pure exploitation
    //! Step count after which exploration is switched off entirely.
    std::optional<std::uint64_t> exploit_after;

    void validate() const;
};

/// Paired action-value tables, one per reward stream, zero-initialised.
class QTablePair {
public:
    explicit QTablePair(int l_max);

    const StateSpace& space() const noexcept { return space_; }
    int l_max() const noexcept { return space_.l_max(); }

    double q_a(const ChainState& s, Action a) const { return q_a_[cell(s, a)]; }
    double q_h(const ChainState& s, Action a) const { return q_h_[cell(s, a)]; }
    void set(const ChainState& s, Action a, double qa, double qh);
    //! Multiplies both tables by c (used by invariance tests).
    void scale(double c);

    double max_entry() const;
    bool operator==(const QTablePair& other) const = default;

private:
    std::size_t cell(const ChainState& s, Action a) const {
        return space_.index(s) * kNumActions + static_cast<std::size_t>(a);
    }

    StateSpace space_;
    std::vector<double> q_a_;
    std::vector<double> q_h_;
};

class VisitCounts {
public:
    explicit VisitCounts(int l_max);

    std::uint64_t operator[](const ChainState& s) const { return v_[space_.index(s)]; }
    void increment(const ChainState& s) { ++v_[space_.index(s)]; }
    void set(const ChainState& s, std::uint64_t n) { v_[space_.index(s)] = n; }
    bool operator==(const VisitCounts& other) const = default;

private:
    StateSpace space_;
    std::vector<std::uint64_t> v_;
};

struct Experience {
    ChainState s;
    Action a = Action::Adopt;
    ChainState s_next;
    int r_a = 0;
    int r_h = 0;
};

//! q_a / (q_a + q_h); 0 when both are 0.
double fraction_objective(const QTablePair& q, const ChainState& s, Action a);

//! Argmax of fraction_objective over allowed_actions; ties go to the lowest action index.
Action greedy_action(const QTablePair& q, const ChainState& s, const ModelParams& p);

//! exp(-V(s) / t_eps), or exactly 0 when t_eps == 0.
double epsilon_for_state(const VisitCounts& v, const ChainState& s, double t_eps);

/// Epsilon-greedy selection with the state-visit decay. `force_greedy` pins epsilon to 0.
/// Increments V(s).
Action select_action(const QTablePair& q, VisitCounts& v, const ChainState& s, const ModelParams& p,
                     const AgentHyperparams& hyper, Rng& rng, bool force_greedy = false);

/// Paired TD update. The bootstrap action is the greedy action at s_next and both tables
/// bootstrap from it using their pre-update values.
void td_update(QTablePair& q, const Experience& e, const ModelParams& p, const AgentHyperparams& hyper);

/// The multi-dimensional Q-learning agent: tables, visit counts and a step counter.
class QAgent : public Controller {
public:
    QAgent(int l_max, AgentHyperparams hyper);

    Action act(const ChainState& s, const ModelParams& p, Rng& rng) override;
    void observe(const ChainState& s, Action a, const StepResult& out, const ModelParams& p) override;
    std::string name() const override { return "rl"; }

    bool exploiting() const noexcept;
    //! Greedy policy over every state with at least one legal action (all states).
    Policy greedy_policy(const ModelParams& p) const;

    const QTablePair& tables() const noexcept { return q_; }
    QTablePair& tables() noexcept { return q_; }
    const VisitCounts& visits() const noexcept { return v_; }
    VisitCounts& visits() noexcept { return v_; }
    const AgentHyperparams& hyper() const noexcept { return hyper_; }
    std::uint64_t steps() const noexcept { return steps_; }
    void set_steps(std::uint64_t n) noexcept { steps_ = n; }

private:
    QTablePair q_;
    VisitCounts v_;
    AgentHyperparams hyper_;
    std::uint64_t steps_ = 0;
};

/// Frozen greedy play from a Q table (epsilon = 0, no learning).
class GreedyQController : public Controller {
public:
    explicit GreedyQController(QTablePair q) : q_(std::move(q)) {}
    Action act(const ChainState& s, const ModelParams& p, Rng&) override { return greedy_action(q_, s, p); }
    void observe(const ChainState&, Action, const StepResult&, const ModelParams&) override {}
    std::string name() const override { return "qtable"; }

private:
    QTablePair q_;
};

struct TrainStats {
    std::uint64_t steps = 0;
    std::uint64_t blocks_adversary = 0;
    std::uint64_t blocks_honest = 0;
};

using StepHook = std::function<void(std::uint64_t step, const ChainState& s, Action a, const StepResult& out)>;

/// Runs the learning loop for `steps` transitions from the environment's current state
/// (call env.reset first for a fresh run).
TrainStats train(Environment& env, QAgent& agent, std::uint64_t steps, Rng& rng, const StepHook& hook = {});

// Q-table file:
//   forkbench-qtables v1; alpha=..; gamma=..; l_max=..; beta=..; lambda=..; t_eps=..; steps=..
//   <l_a> <l_h> <fork> <action> <q_a> <q_h> <visits>
// One row per legal (state, action); visits repeats V(state) on each of its rows.
struct QTableFile {
    ModelParams params;
    AgentHyperparams hyper;
    std::uint64_t steps = 0;
    QTablePair q;
    VisitCounts v;
};

void save_qtables(const QAgent& agent, const ModelParams& p, std::ostream& out);
void save_qtables(const QAgent& agent, const ModelParams& p, const std::filesystem::path& path);
QTableFile load_qtables(std::istream& in);
QTableFile load_qtables(const std::filesystem::path& path);
QAgent agent_from_file(const QTableFile& f);

}  // namespace forkbench
