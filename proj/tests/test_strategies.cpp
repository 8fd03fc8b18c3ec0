#include <doctest.h>

#include <set>
#include <sstream>

#include "forkbench/strategies.hpp"
#include "support.hpp"

using namespace forkbench;
using FL = ForkLabel;

TEST_CASE("honest rule") {
    CHECK(honest_action({0, 1, FL::Irrelevant}) == Action::Adopt);
    CHECK(honest_action({1, 0, FL::Irrelevant}) == Action::Override);
    CHECK(honest_action({0, 0, FL::Relevant}) == Action::Wait);
    CHECK_THROWS_AS(honest_action({2, 0, FL::Irrelevant}), ContractViolation);
}

TEST_CASE("selfish rule") {
    CHECK(selfish_action({1, 1, FL::Relevant}) == Action::Match);
    CHECK(selfish_action({2, 1, FL::Relevant}) == Action::Override);
    CHECK(selfish_action({3, 1, FL::Irrelevant}) == Action::Wait);
    CHECK(selfish_action({2, 2, FL::Relevant}) == Action::Wait);  // literal "wait otherwise"
    CHECK(selfish_action({0, 1, FL::Irrelevant}) == Action::Adopt);
}

TEST_CASE("lead-stubborn rule") {
    CHECK(lead_stubborn_action({2, 1, FL::Irrelevant}) == Action::Wait);
    CHECK(lead_stubborn_action({2, 2, FL::Relevant}) == Action::Match);
    CHECK(lead_stubborn_action({0, 2, FL::Active}) == Action::Adopt);
}

TEST_CASE("illegal match falls back to wait") {
    const ModelParams p{0.3, 1.0, 10};
    const auto [a, fell] = legalize(Action::Match, {1, 1, FL::Irrelevant}, p);
    CHECK(a == Action::Wait);
    CHECK(fell);
    const auto [b, kept] = legalize(Action::Match, {1, 1, FL::Relevant}, p);
    CHECK(b == Action::Match);
    CHECK_FALSE(kept);
}

TEST_CASE("closed-form policies are legal on every reachable state") {
    for (auto which : {Strategy::Honest, Strategy::Selfish, Strategy::LeadStubborn}) {
        for (int l_max : {2, 5, 20}) {
            const ModelParams p{0.3, 0.5, l_max};
            const auto pol = closed_form_policy(which, p);
            CHECK(pol.populated() > 0);
            for (const auto& [s, a] : pol.entries()) {
                CHECK(is_allowed(s, a, p));
                for (const auto& e : transition_distribution(s, a, {0.5, 0.5, l_max})) CHECK(pol.find(e.next).has_value());
            }
        }
    }
}

TEST_CASE("honest reachable set stays within one block") {
    const auto pol = closed_form_policy(Strategy::Honest, {0.3, 0.5, 10});
    for (const auto& [s, a] : pol.entries()) {
        CHECK(s.l_a <= 1);
        CHECK(s.l_h <= 1);
    }
}

TEST_CASE("selfish and honest agree when behind") {
    for (const auto& [s, a] : closed_form_policy(Strategy::Honest, {0.3, 0.5, 10}).entries()) {
        if (s.l_a < s.l_h) CHECK(selfish_action(s) == a);
    }
}

TEST_CASE("policy lookup of a missing state names the state") {
    Policy pol("partial", 5);
    pol.set({0, 1, FL::Irrelevant}, Action::Adopt);
    CHECK(lookup_policy_action(pol, {0, 1, FL::Irrelevant}) == Action::Adopt);
    try {
        pol.at({2, 1, FL::Relevant});
        FAIL("expected PolicyIncomplete");
    } catch (const PolicyIncomplete& e) {
        CHECK(e.state() == ChainState{2, 1, FL::Relevant});
        CHECK(std::string(e.what()).find("(2,1") != std::string::npos);
    }
    CHECK_THROWS_AS(pol.set({1, 1, FL::Irrelevant}, Action::Match), ContractViolation);
}

TEST_CASE("published optimal-policy cell table") {
    const auto pol = policy_from_cell_table(testsupport::kTableII, 80);
    CHECK(pol.populated() == 66);
    CHECK(lookup_policy_action(pol, {1, 2, FL::Relevant}) == Action::Adopt);
    CHECK(lookup_policy_action(pol, {2, 2, FL::Relevant}) == Action::Match);
    CHECK(lookup_policy_action(pol, {3, 2, FL::Relevant}) == Action::Override);
    CHECK(lookup_policy_action(pol, {3, 2, FL::Active}) == Action::Override);
    CHECK(lookup_policy_action(pol, {2, 1, FL::Irrelevant}) == Action::Wait);
    CHECK_FALSE(pol.find({1, 1, FL::Irrelevant}).has_value());
}

TEST_CASE("policy file round trip") {
    for (auto which : {Strategy::Honest, Strategy::Selfish, Strategy::LeadStubborn}) {
        auto pol = closed_form_policy(which, {0.35, 1.0, 12});
        std::stringstream ss;
        save_policy(pol, ss);
        const auto back = load_policy(ss);
        CHECK(back.same_mapping(pol));
        CHECK(back.name() == pol.name());
        CHECK(back.alpha == pol.alpha);
        CHECK(back.gamma == pol.gamma);
    }
    const auto t2 = policy_from_cell_table(testsupport::kTableII, 80);
    std::stringstream ss;
    save_policy(t2, ss);
    CHECK(load_policy(ss).populated() == 66);
}

TEST_CASE("policy file errors carry line numbers") {
    auto expect_line = [](const std::string& text, std::size_t line) {
        std::istringstream in(text);
        try {
            load_policy(in);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == line);
        }
    };
    expect_line("forkbench-policy v1; l_max=5\n1 1 irrelevant match\n", 2);
    expect_line("forkbench-policy v2; l_max=5\n", 1);
    expect_line("forkbench-policy v1; l_max=5; colour=red\n", 1);
    expect_line("forkbench-policy v1; l_max=5\n0 1 irrelevant adopt\n0 1 irrelevant adopt\n", 3);
    expect_line("forkbench-policy v1; l_max=5\n0 1 irrelevant\n", 2);
    expect_line("forkbench-policy v1; l_max=5\n0 9 irrelevant adopt\n", 2);
    expect_line("forkbench-policy v1; l_max=5\n0 x irrelevant adopt\n", 2);
}
