#pragma once

#include <string>

#include "forkbench/mining_mdp.hpp"

namespace forkbench {

struct StepResult {
    ChainState next;
    RewardPair reward;
};

/// A blockchain environment the adversary interacts with, one mined block per step.
/// Implementations own their current state; callers own the random stream.
class Environment {
public:
    virtual ~Environment() = default;

    //! Draws an initial state and makes it current.
    virtual ChainState reset(Rng& rng) = 0;
    //! Plays a legal action in the current state. Throws ContractViolation otherwise.
    virtual StepResult step(Action a, Rng& rng) = 0;

    virtual ChainState state() const = 0;
    //! Restores a previously observed state (checkpoint resume). Clears fork bookkeeping
    //! only if the state is not an open race.
    virtual void restore(const ChainState& s) = 0;

    //! Parameters the environment currently runs with. Controllers only rely on l_max.
    virtual const ModelParams& params() const = 0;
    //! Switches (alpha, gamma) mid-run; the chain state carries over.
    virtual void set_rates(double alpha, double gamma) = 0;

    virtual std::string backend_name() const = 0;
};

/// Something that picks actions and optionally learns from the outcome.
class Controller {
public:
    virtual ~Controller() = default;
    virtual Action act(const ChainState& s, const ModelParams& p, Rng& rng) = 0;
    virtual void observe(const ChainState& s, Action a, const StepResult& out, const ModelParams& p) = 0;
    virtual std::string name() const = 0;
};

}  // namespace forkbench
