#include "forkbench/mining_mdp.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace forkbench {

std::string_view to_string(ForkLabel f) {
    switch (f) {
        case ForkLabel::Irrelevant: return "irrelevant";
        case ForkLabel::Relevant: return "relevant";
        case ForkLabel::Active: return "active";
    }
    return "?";
}

std::string_view to_string(Action a) {
    switch (a) {
        case Action::Adopt: return "adopt";
        case Action::Override: return "override";
        case Action::Match: return "match";
        case Action::Wait: return "wait";
    }
    return "?";
}

ForkLabel parse_fork_label(std::string_view text) {
    for (auto f : kForkLabels) {
        if (to_string(f) == text) return f;
    }
    throw std::invalid_argument("unknown fork label '" + std::string(text) + "'");
}

Action parse_action(std::string_view text) {
    for (auto a : kActions) {
        if (to_string(a) == text) return a;
    }
    throw std::invalid_argument("unknown action '" + std::string(text) + "'");
}

std::string to_string(const ChainState& s) {
    std::ostringstream os;
    os << '(' << s.l_a << ',' << s.l_h << ',' << to_string(s.fork) << ')';
    return os.str();
}

void ModelParams::validate(int min_l_max) const {
    if (!(alpha > 0.0 && alpha <= 0.5)) {
        throw std::invalid_argument("alpha must lie in (0, 0.5], got " + std::to_string(alpha));
    }
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        throw std::invalid_argument("gamma must lie in [0, 1], got " + std::to_string(gamma));
    }
    if (l_max < min_l_max) {
        throw std::invalid_argument("l_max must be at least " + std::to_string(min_l_max) + ", got " +
                                    std::to_string(l_max));
    }
}

void check_state(const ChainState& s, const ModelParams& p) {
    if (s.l_a < 0 || s.l_h < 0 || s.l_a > p.l_max || s.l_h > p.l_max) {
        throw ContractViolation("state " + to_string(s) + " outside bounds for l_max=" +
                                std::to_string(p.l_max));
    }
}

bool is_allowed(const ChainState& s, Action a, const ModelParams& p) {
    const bool room = s.l_a < p.l_max && s.l_h < p.l_max;
    switch (a) {
        case Action::Adopt: return true;
        case Action::Override: return s.l_a > s.l_h;
        case Action::Match: return room && s.l_a >= s.l_h && s.fork == ForkLabel::Relevant;
        case Action::Wait: return room;
    }
    return false;
}

std::vector<Action> allowed_actions(const ChainState& s, const ModelParams& p) {
    check_state(s, p);
    std::vector<Action> out;
    out.reserve(kNumActions);
    for (auto a : kActions) {
        if (is_allowed(s, a, p)) out.push_back(a);
    }
    return out;
}

bool is_contested(const ChainState& s, Action a) {
    // An Active label with the adversary behind cannot occur on any reachable path; such
    // states fall back to the plain wait row.
    return a == Action::Match || (a == Action::Wait && s.fork == ForkLabel::Active && s.l_a >= s.l_h);
}

std::pair<ChainState, RewardPair> apply_event(const ChainState& s, Action a, MiningEvent event) {
    const bool adv = event == MiningEvent::AdversaryBlock;
    switch (a) {
        case Action::Adopt:
            return {adv ? ChainState{1, 0, ForkLabel::Irrelevant} : ChainState{0, 1, ForkLabel::Irrelevant},
                    RewardPair{0, s.l_h}};
        case Action::Override:
            return {adv ? ChainState{s.l_a - s.l_h, 0, ForkLabel::Irrelevant}
                        : ChainState{s.l_a - s.l_h - 1, 1, ForkLabel::Relevant},
                    RewardPair{s.l_h + 1, 0}};
        case Action::Match:
        case Action::Wait:
            break;
    }
    if (is_contested(s, a)) {
        switch (event) {
            case MiningEvent::AdversaryBlock:
                return {{s.l_a + 1, s.l_h, ForkLabel::Active}, {0, 0}};
            case MiningEvent::HonestOnAdversaryBranch:
                return {{s.l_a - s.l_h, 1, ForkLabel::Relevant}, {s.l_h, 0}};
            case MiningEvent::HonestOnHonestBranch:
                return {{s.l_a, s.l_h + 1, ForkLabel::Relevant}, {0, 0}};
        }
    }
    if (event == MiningEvent::HonestOnAdversaryBranch) {
        throw ContractViolation("no adversary branch is public in " + to_string(s) + " under " +
                                std::string(to_string(a)));
    }
    if (adv) return {{s.l_a + 1, s.l_h, ForkLabel::Irrelevant}, {0, 0}};
    return {{s.l_a, s.l_h + 1, ForkLabel::Relevant}, {0, 0}};
}

namespace {

void check_legal(const ChainState& s, Action a, const ModelParams& p) {
    check_state(s, p);
    if (!is_allowed(s, a, p)) {
        throw ContractViolation("action " + std::string(to_string(a)) + " is not legal in " + to_string(s));
    }
}

void push_branch(std::vector<TransitionEntry>& out, const ChainState& s, Action a, MiningEvent e,
                 double prob) {
    if (prob <= 0.0) return;
    auto [next, reward] = apply_event(s, a, e);
    out.push_back({next, prob, reward});
}

}  // namespace

std::vector<TransitionEntry> transition_distribution(const ChainState& s, Action a,
                                                     const ModelParams& p) {
    check_legal(s, a, p);
    std::vector<TransitionEntry> out;
    out.reserve(3);
    push_branch(out, s, a, MiningEvent::AdversaryBlock, p.alpha);
    if (is_contested(s, a)) {
        push_branch(out, s, a, MiningEvent::HonestOnAdversaryBranch, p.gamma * (1.0 - p.alpha));
        push_branch(out, s, a, MiningEvent::HonestOnHonestBranch, (1.0 - p.gamma) * (1.0 - p.alpha));
    } else {
        push_branch(out, s, a, MiningEvent::HonestOnHonestBranch, 1.0 - p.alpha);
    }
    return out;
}

double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

std::pair<ChainState, RewardPair> sample_transition(const ChainState& s, Action a,
                                                    const ModelParams& p, Rng& rng) {
    const auto dist = transition_distribution(s, a, p);
    const double u = uniform01(rng);
    double cum = 0.0;
    for (const auto& e : dist) {
        cum += e.prob;
        if (u < cum) return {e.next, e.reward};
    }
    return {dist.back().next, dist.back().reward};
}

std::pair<ChainState, RewardPair> initial_state(const ModelParams& p, Rng& rng) {
    if (uniform01(rng) < p.alpha) return {{1, 0, ForkLabel::Irrelevant}, {0, 0}};
    return {{0, 1, ForkLabel::Irrelevant}, {0, 0}};
}

StateSpace::StateSpace(int l_max) : l_max_(l_max) {
    if (l_max < 1) throw std::invalid_argument("l_max must be positive");
    const auto side = static_cast<std::size_t>(l_max + 1);
    size_ = side * side * kForkLabels.size();
}

std::size_t StateSpace::index(const ChainState& s) const {
    if (s.l_a < 0 || s.l_h < 0 || s.l_a > l_max_ || s.l_h > l_max_) {
        throw ContractViolation("state " + to_string(s) + " outside state space");
    }
    const auto side = static_cast<std::size_t>(l_max_ + 1);
    return (static_cast<std::size_t>(s.l_a) * side + static_cast<std::size_t>(s.l_h)) * 3 +
           static_cast<std::size_t>(s.fork);
}

ChainState StateSpace::at(std::size_t index) const {
    if (index >= size_) throw ContractViolation("state index out of range");
    const auto side = static_cast<std::size_t>(l_max_ + 1);
    const auto fork = static_cast<ForkLabel>(index % 3);
    const auto cell = index / 3;
    return {static_cast<int>(cell / side), static_cast<int>(cell % side), fork};
}

std::vector<ChainState> enumerate_states(const ModelParams& p) {
    StateSpace space(p.l_max);
    std::vector<ChainState> out;
    out.reserve(space.size());
    for (std::size_t i = 0; i < space.size(); ++i) out.push_back(space.at(i));
    return out;
}

std::vector<ChainState> reachable_states(const ModelParams& p) {
    StateSpace space(p.l_max);
    std::vector<char> seen(space.size(), 0);
    std::deque<ChainState> frontier;
    for (ChainState s : {ChainState{1, 0, ForkLabel::Irrelevant}, ChainState{0, 1, ForkLabel::Irrelevant}}) {
        seen[space.index(s)] = 1;
        frontier.push_back(s);
    }
    // Structural reachability: branches with zero probability still count, so the set does
    // not depend on alpha or gamma.
    ModelParams structural = p;
    structural.alpha = 0.5;
    structural.gamma = 0.5;
    while (!frontier.empty()) {
        const ChainState s = frontier.front();
        frontier.pop_front();
        for (auto a : allowed_actions(s, structural)) {
            for (const auto& e : transition_distribution(s, a, structural)) {
                auto& flag = seen[space.index(e.next)];
                if (!flag) {
                    flag = 1;
                    frontier.push_back(e.next);
                }
            }
        }
    }
    std::vector<ChainState> out;
    for (std::size_t i = 0; i < space.size(); ++i) {
        if (seen[i]) out.push_back(space.at(i));
    }
    return out;
}

}  // namespace forkbench
