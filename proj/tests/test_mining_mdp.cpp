#include <doctest.h>

#include <map>
#include <set>

#include "forkbench/mining_mdp.hpp"
#include "support.hpp"

using namespace forkbench;
using FL = ForkLabel;

namespace {
std::vector<Action> acts(std::initializer_list<Action> xs) { return xs; }
}  // namespace

TEST_CASE("allowed actions follow the legality rules") {
    const ModelParams p{0.35, 1.0, 20};
    CHECK(allowed_actions({2, 1, FL::Irrelevant}, p) == acts({Action::Adopt, Action::Override, Action::Wait}));
    CHECK(allowed_actions({1, 1, FL::Relevant}, p) == acts({Action::Adopt, Action::Match, Action::Wait}));
    CHECK(allowed_actions({0, 0, FL::Irrelevant}, p) == acts({Action::Adopt, Action::Wait}));
    // match needs relevant, override needs a lead
    CHECK(allowed_actions({1, 1, FL::Active}, p) == acts({Action::Adopt, Action::Wait}));
    CHECK(allowed_actions({0, 2, FL::Relevant}, p) == acts({Action::Adopt, Action::Wait}));
}

TEST_CASE("truncation removes chain-growing actions at the bound") {
    const ModelParams p{0.35, 1.0, 5};
    CHECK(allowed_actions({3, 5, FL::Relevant}, p) == acts({Action::Adopt}));
    CHECK(allowed_actions({5, 5, FL::Relevant}, p) == acts({Action::Adopt}));
    CHECK(allowed_actions({5, 2, FL::Irrelevant}, p) == acts({Action::Adopt, Action::Override}));
    CHECK(allowed_actions({5, 4, FL::Relevant}, p) == acts({Action::Adopt, Action::Override}));
    CHECK(allowed_actions({4, 4, FL::Relevant}, p) == acts({Action::Adopt, Action::Match, Action::Wait}));
}

TEST_CASE("invalid states are contract violations") {
    const ModelParams p{0.35, 1.0, 5};
    CHECK_THROWS_AS(allowed_actions({6, 0, FL::Irrelevant}, p), ContractViolation);
    CHECK_THROWS_AS(allowed_actions({-1, 0, FL::Irrelevant}, p), ContractViolation);
    CHECK_THROWS_AS(transition_distribution({1, 1, FL::Irrelevant}, Action::Match, p), ContractViolation);
    CHECK_THROWS_AS(transition_distribution({1, 1, FL::Relevant}, Action::Override, p), ContractViolation);
}

TEST_CASE("override row") {
    const auto d = transition_distribution({2, 1, FL::Irrelevant}, Action::Override, {0.35, 1.0, 20});
    REQUIRE(d.size() == 2);
    CHECK(d[0].next == ChainState{1, 0, FL::Irrelevant});
    CHECK(d[0].prob == doctest::Approx(0.35).epsilon(1e-12));
    CHECK(d[0].reward == RewardPair{2, 0});
    CHECK(d[1].next == ChainState{0, 1, FL::Relevant});
    CHECK(d[1].prob == doctest::Approx(0.65).epsilon(1e-12));
    CHECK(d[1].reward == RewardPair{2, 0});
}

TEST_CASE("match row has three outcomes") {
    const auto d = transition_distribution({3, 3, FL::Relevant}, Action::Match, {0.35, 0.5, 20});
    REQUIRE(d.size() == 3);
    CHECK(d[0].next == ChainState{4, 3, FL::Active});
    CHECK(d[0].prob == doctest::Approx(0.35));
    CHECK(d[0].reward == RewardPair{0, 0});
    CHECK(d[1].next == ChainState{0, 1, FL::Relevant});
    CHECK(d[1].prob == doctest::Approx(0.325));
    CHECK(d[1].reward == RewardPair{3, 0});
    CHECK(d[2].next == ChainState{3, 4, FL::Relevant});
    CHECK(d[2].prob == doctest::Approx(0.325));
    CHECK(d[2].reward == RewardPair{0, 0});
}

TEST_CASE("wait from active shares the match row") {
    const ModelParams p{0.4, 0.3, 20};
    const auto w = transition_distribution({4, 3, FL::Active}, Action::Wait, p);
    const auto m = transition_distribution({4, 3, FL::Relevant}, Action::Match, p);
    REQUIRE(w.size() == m.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        CHECK(w[i].next == m[i].next);
        CHECK(w[i].prob == m[i].prob);
        CHECK(w[i].reward == m[i].reward);
    }
}

TEST_CASE("adopt row") {
    for (double alpha : {0.1, 0.35, 0.5}) {
        const auto d = transition_distribution({5, 2, FL::Relevant}, Action::Adopt, {alpha, 0.5, 20});
        double total = 0.0;
        for (const auto& e : d) {
            total += e.prob;
            CHECK(e.reward == RewardPair{0, 2});
            CHECK(e.next.fork == FL::Irrelevant);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("zero-probability branch never sampled at gamma = 1") {
    const ModelParams p{0.35, 1.0, 20};
    CHECK(transition_distribution({2, 2, FL::Relevant}, Action::Match, p).size() == 2);
    Rng rng(5);
    for (int i = 0; i < 20000; ++i) {
        const auto [next, r] = sample_transition({2, 2, FL::Relevant}, Action::Match, p, rng);
        CHECK_FALSE((next == ChainState{2, 3, FL::Relevant}));
    }
}

TEST_CASE("sampling is deterministic under a seed") {
    const ModelParams p{0.3, 0.5, 10};
    auto run = [&](std::uint64_t seed) {
        Rng rng(seed);
        std::vector<ChainState> path;
        ChainState s{0, 0, FL::Irrelevant};
        for (int i = 0; i < 1000; ++i) {
            const auto a = allowed_actions(s, p).back();
            s = sample_transition(s, a, p, rng).first;
            if (s.l_a == p.l_max || s.l_h == p.l_max) s = {0, 0, FL::Irrelevant};
            path.push_back(s);
        }
        return path;
    };
    CHECK(run(11) == run(11));
    CHECK(run(11) != run(12));
}

TEST_CASE("branch frequencies within 3 sigma over 1e6 samples") {
    const ModelParams p{0.35, 0.5, 20};
    const ChainState s{3, 3, FL::Relevant};
    const auto d = transition_distribution(s, Action::Match, p);
    std::map<ChainState, double> count;
    Rng rng(123);
    const int n = 1'000'000;
    for (int i = 0; i < n; ++i) count[sample_transition(s, Action::Match, p, rng).first] += 1.0;
    for (const auto& e : d) {
        const double sigma = std::sqrt(n * e.prob * (1.0 - e.prob));
        CHECK(std::abs(count[e.next] - n * e.prob) < 3.0 * sigma);
    }
}

TEST_CASE("initial state") {
    Rng rng(9);
    for (int i = 0; i < 100; ++i) {
        CHECK(initial_state({1.0, 1.0, 5}, rng).first == ChainState{1, 0, FL::Irrelevant});
        CHECK(initial_state({0.0, 1.0, 5}, rng).first == ChainState{0, 1, FL::Irrelevant});
    }
    int adv = 0;
    for (int i = 0; i < 100000; ++i) {
        const auto [s, r] = initial_state({0.35, 1.0, 5}, rng);
        CHECK(r == RewardPair{0, 0});
        adv += s.l_a == 1;
    }
    CHECK(adv / 1e5 == doctest::Approx(0.35).epsilon(0.01 / 0.35));
}

TEST_CASE("state enumeration") {
    const auto s1 = enumerate_states({0.3, 1.0, 1});
    CHECK(s1.size() == 12);
    CHECK(s1.front() == ChainState{0, 0, FL::Irrelevant});
    CHECK(enumerate_states({0.3, 1.0, 8}).size() == 243);
    const auto s8 = enumerate_states({0.3, 1.0, 8});
    CHECK(std::is_sorted(s8.begin(), s8.end()));
    const StateSpace space(8);
    for (std::size_t i = 0; i < s8.size(); ++i) {
        CHECK(space.index(s8[i]) == i);
        CHECK(space.at(i) == s8[i]);
    }
}

TEST_CASE("reachable states are closed under transitions") {
    const ModelParams p{0.35, 0.5, 6};
    const auto reach = reachable_states(p);
    const std::set<ChainState> set(reach.begin(), reach.end());
    CHECK(set.count({1, 0, FL::Irrelevant}));
    CHECK(set.count({0, 1, FL::Irrelevant}));
    for (const auto& s : reach) {
        for (auto a : allowed_actions(s, p)) {
            for (const auto& e : transition_distribution(s, a, p)) CHECK(set.count(e.next));
        }
    }
}

TEST_CASE("enum text round trips") {
    for (auto f : kForkLabels) CHECK(parse_fork_label(to_string(f)) == f);
    for (auto a : kActions) CHECK(parse_action(to_string(a)) == a);
    CHECK_THROWS(parse_action("defect"));
}

TEST_CASE("model parameter validation") {
    CHECK_NOTHROW(ModelParams{0.35, 1.0, 20}.validate());
    CHECK_THROWS(ModelParams{0.0, 1.0, 20}.validate());
    CHECK_THROWS(ModelParams{0.6, 1.0, 20}.validate());
    CHECK_THROWS(ModelParams{0.3, 1.5, 20}.validate());
    CHECK_THROWS(ModelParams{0.3, 1.0, 1}.validate());
}
