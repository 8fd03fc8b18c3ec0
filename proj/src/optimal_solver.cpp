#include "forkbench/optimal_solver.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>

#include "forkbench/text_io.hpp"

namespace forkbench {

void WeightedMdp::reweight(double new_rho) {
    rho = new_rho;
    for (auto& b : branches) b.weight = (1.0 - rho) * b.reward.r_a - rho * b.reward.r_h;
}

WeightedMdp build_weighted_mdp(const ModelParams& p, double rho) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("rho must lie in [0, 1]");
    StateSpace space(p.l_max);
    WeightedMdp m;
    m.params = p;
    m.states = reachable_states(p);
    m.slot.assign(space.size(), -1);
    for (std::size_t i = 0; i < m.states.size(); ++i) m.slot[space.index(m.states[i])] = static_cast<std::int32_t>(i);

    m.choice_begin.reserve(m.states.size() + 1);
    for (const auto& s : m.states) {
        m.choice_begin.push_back(static_cast<std::uint32_t>(m.choices.size()));
        for (auto a : allowed_actions(s, p)) {
            WeightedMdp::Choice c{a, static_cast<std::uint32_t>(m.branches.size()), 0};
            for (const auto& e : transition_distribution(s, a, p)) {
                const auto next = m.slot[space.index(e.next)];
                if (next < 0) throw std::logic_error("successor outside reachable set: " + to_string(e.next));
                m.branches.push_back({next, e.prob, e.reward, 0.0});
                ++c.count;
            }
            m.choices.push_back(c);
        }
    }
    m.choice_begin.push_back(static_cast<std::uint32_t>(m.choices.size()));
    m.reweight(rho);
    return m;
}

AverageRewardSolution solve_average_reward(const WeightedMdp& m, const RviOptions& opts,
                                           const std::vector<double>* warm_start) {
    if (!(opts.tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
    if (!(opts.tau > 0.0 && opts.tau <= 1.0)) throw std::invalid_argument("tau must lie in (0, 1]");
    const std::size_t n = m.num_states();
    if (n == 0) throw std::invalid_argument("empty MDP");

    std::vector<double> h(n, 0.0);
    if (warm_start) {
        if (warm_start->size() != n) throw std::invalid_argument("warm start has the wrong size");
        h = *warm_start;
    }
    std::vector<double> th(n, 0.0);
    std::vector<std::uint32_t> best(n, 0);

    const auto q_value = [&](const WeightedMdp::Choice& c, const std::vector<double>& v) {
        double q = 0.0;
        for (std::uint32_t k = c.first; k < c.first + c.count; ++k) {
            const auto& b = m.branches[k];
            q += b.prob * (b.weight + v[static_cast<std::size_t>(b.next)]);
        }
        return q;
    };

    double lo = 0.0;
    double hi = 0.0;
    std::size_t it = 0;
    for (; it < opts.max_iterations; ++it) {
        lo = std::numeric_limits<double>::infinity();
        hi = -lo;
        for (std::size_t s = 0; s < n; ++s) {
            std::uint32_t c_best = m.choice_begin[s];
            double q_best = q_value(m.choices[c_best], h);
            for (auto c = c_best + 1; c < m.choice_begin[s + 1]; ++c) {
                const double q = q_value(m.choices[c], h);
                // Near-ties keep the earlier (lower-index) action.
                if (q > q_best + 1e-12 * (1.0 + std::abs(q_best))) {
                    q_best = q;
                    c_best = c;
                }
            }
            th[s] = q_best;
            best[s] = c_best;
            const double d = q_best - h[s];
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
        if (hi - lo < opts.tol) break;
        const double ref = h[0] + opts.tau * (th[0] - h[0]);
        for (std::size_t s = 0; s < n; ++s) h[s] = h[s] + opts.tau * (th[s] - h[s]) - ref;
    }
    if (it == opts.max_iterations) {
        throw SolverError("relative value iteration did not converge after " + std::to_string(it) +
                          " iterations (span residual " + text::format_double(hi - lo) + ")");
    }

    AverageRewardSolution sol{Policy("optimal", m.params.l_max), 0.5 * (lo + hi), it + 1, hi - lo, std::move(h)};
    sol.policy.alpha = m.params.alpha;
    sol.policy.gamma = m.params.gamma;
    for (std::size_t s = 0; s < n; ++s) sol.policy.set(m.states[s], m.choices[best[s]].action);
    return sol;
}

SolveReport find_optimal_policy(const ModelParams& p, double search_tol, const RviOptions& opts) {
    p.validate(1);
    if (!(search_tol > 0.0)) throw std::invalid_argument("search tolerance must be positive");

    WeightedMdp m = build_weighted_mdp(p, 0.0);
    std::size_t iterations = 0;
    std::size_t solves = 0;
    std::vector<double> warm;
    const auto solve_at = [&](double rho) {
        m.reweight(rho);
        auto sol = solve_average_reward(m, opts, warm.empty() ? nullptr : &warm);
        iterations += sol.iterations;
        ++solves;
        warm = sol.bias;
        return sol;
    };

    double lo = 0.0;
    double hi = 1.0;
    auto at_lo = solve_at(lo);
    if (at_lo.gain < -opts.tol) throw SolverError("bracket failure: g(0) < 0");
    {
        const auto at_hi = solve_at(hi);
        if (at_hi.gain > opts.tol) throw SolverError("bracket failure: g(1) > 0");
    }
    while (hi - lo > search_tol) {
        const double mid = 0.5 * (lo + hi);
        auto sol = solve_at(mid);
        if (sol.gain > 0.0) {
            lo = mid;
            at_lo = std::move(sol);
        } else {
            hi = mid;
        }
    }

    SolveReport r{std::move(at_lo.policy)};
    r.rho_star = lo;
    r.gain = at_lo.gain;
    r.residual = at_lo.residual;
    // g is 1-Lipschitz in rho per accepted block and at most l_max + 1 blocks are accepted
    // per transition, so |g(lo)| <= (l_max + 1) * (hi - lo) plus the RVI bracket.
    r.gain_bound = (p.l_max + 1) * (hi - lo) + at_lo.residual;
    r.iterations = iterations;
    r.solves = solves;
    r.policy_rmg = exact_policy_rmg(r.policy, p);
    return r;
}

void write_solve_report(const SolveReport& r, std::ostream& out) {
    out << "rho_star " << text::format_double(r.rho_star) << '\n'
        << "gain " << text::format_double(r.gain) << '\n'
        << "gain_bound " << text::format_double(r.gain_bound) << '\n'
        << "policy_rmg " << text::format_double(r.policy_rmg) << '\n'
        << "iterations " << r.iterations << '\n'
        << "solves " << r.solves << '\n'
        << "residual " << text::format_double(r.residual) << '\n';
}

namespace {

struct InducedChain {
    std::vector<ChainState> states;
    std::vector<std::vector<std::pair<std::size_t, double>>> out;  // successor, probability
    std::vector<double> r_a;
    std::vector<double> r_h;
};

InducedChain induce_chain(const Policy& pol, const ModelParams& p) {
    if (pol.l_max() != p.l_max) throw std::invalid_argument("policy l_max does not match model l_max");
    StateSpace space(p.l_max);
    std::vector<std::int64_t> slot(space.size(), -1);
    InducedChain c;
    std::deque<std::size_t> frontier;
    const auto visit = [&](const ChainState& s) {
        auto& idx = slot[space.index(s)];
        if (idx < 0) {
            idx = static_cast<std::int64_t>(c.states.size());
            c.states.push_back(s);
            frontier.push_back(static_cast<std::size_t>(idx));
        }
        return static_cast<std::size_t>(idx);
    };
    if (p.alpha > 0.0) visit({1, 0, ForkLabel::Irrelevant});
    if (p.alpha < 1.0) visit({0, 1, ForkLabel::Irrelevant});
    while (!frontier.empty()) {
        const auto i = frontier.front();
        frontier.pop_front();
        const ChainState s = c.states[i];
        const Action a = pol.at(s);
        std::vector<std::pair<std::size_t, double>> row;
        double ra = 0.0;
        double rh = 0.0;
        for (const auto& e : transition_distribution(s, a, p)) {
            row.emplace_back(visit(e.next), e.prob);
            ra += e.prob * e.reward.r_a;
            rh += e.prob * e.reward.r_h;
        }
        if (c.out.size() <= i) {
            c.out.resize(i + 1);
            c.r_a.resize(i + 1);
            c.r_h.resize(i + 1);
        }
        c.out[i] = std::move(row);
        c.r_a[i] = ra;
        c.r_h[i] = rh;
    }
    return c;
}

//! Tarjan SCC; returns component id per node and the number of components.
std::pair<std::vector<std::size_t>, std::size_t> strongly_connected(const InducedChain& c) {
    const std::size_t n = c.states.size();
    constexpr auto kUnset = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> index(n, kUnset), low(n, 0), comp(n, kUnset);
    std::vector<char> on_stack(n, 0);
    std::vector<std::size_t> stack;
    std::size_t counter = 0;
    std::size_t ncomp = 0;
    // Iterative DFS: (node, next edge position).
    std::vector<std::pair<std::size_t, std::size_t>> dfs;
    for (std::size_t root = 0; root < n; ++root) {
        if (index[root] != kUnset) continue;
        dfs.emplace_back(root, 0);
        while (!dfs.empty()) {
            auto& [v, pos] = dfs.back();
            if (pos == 0 && index[v] == kUnset) {
                index[v] = low[v] = counter++;
                stack.push_back(v);
                on_stack[v] = 1;
            }
            if (pos < c.out[v].size()) {
                const auto w = c.out[v][pos].first;
                ++pos;
                if (index[w] == kUnset) {
                    dfs.emplace_back(w, 0);
                } else if (on_stack[w]) {
                    low[v] = std::min(low[v], index[w]);
                }
                continue;
            }
            if (low[v] == index[v]) {
                std::size_t w = 0;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = 0;
                    comp[w] = ncomp;
                } while (w != v);
                ++ncomp;
            }
            const auto finished = v;
            dfs.pop_back();
            if (!dfs.empty()) {
                auto parent = dfs.back().first;
                low[parent] = std::min(low[parent], low[finished]);
            }
        }
    }
    return {comp, ncomp};
}

}  // namespace

ChainStatistics policy_chain_statistics(const Policy& pol, const ModelParams& p) {
    const InducedChain chain = induce_chain(pol, p);
    const auto [comp, ncomp] = strongly_connected(chain);

    std::vector<char> closed(ncomp, 1);
    for (std::size_t v = 0; v < chain.states.size(); ++v) {
        for (const auto& [w, prob] : chain.out[v]) {
            if (prob > 0.0 && comp[w] != comp[v]) closed[comp[v]] = 0;
        }
    }
    const auto n_closed = static_cast<std::size_t>(std::count(closed.begin(), closed.end(), 1));
    if (n_closed != 1) {
        throw SolverError("policy '" + pol.name() + "' induces " + std::to_string(n_closed) +
                          " closed classes; no unique stationary distribution");
    }
    const auto recurrent = static_cast<std::size_t>(std::find(closed.begin(), closed.end(), 1) - closed.begin());

    std::vector<std::size_t> members;
    std::vector<std::int64_t> local(chain.states.size(), -1);
    for (std::size_t v = 0; v < chain.states.size(); ++v) {
        if (comp[v] == recurrent) {
            local[v] = static_cast<std::int64_t>(members.size());
            members.push_back(v);
        }
    }
    const auto k = static_cast<Eigen::Index>(members.size());

    // Solve pi (P - I) = 0 with the last balance equation replaced by sum(pi) = 1.
    Eigen::VectorXd pi;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
    rhs(k - 1) = 1.0;
    if (k <= 256) {
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
        for (Eigen::Index i = 0; i < k; ++i) {
            a(i, i) -= 1.0;
            for (const auto& [w, prob] : chain.out[members[static_cast<std::size_t>(i)]]) {
                a(local[w], i) += prob;
            }
        }
        a.row(k - 1).setOnes();
        pi = a.partialPivLu().solve(rhs);
    } else {
        std::vector<Eigen::Triplet<double>> trip;
        for (Eigen::Index i = 0; i < k; ++i) {
            if (i != k - 1) trip.emplace_back(i, i, -1.0);
            for (const auto& [w, prob] : chain.out[members[static_cast<std::size_t>(i)]]) {
                if (local[w] != k - 1) trip.emplace_back(local[w], i, prob);
            }
            trip.emplace_back(k - 1, i, 1.0);
        }
        Eigen::SparseMatrix<double> a(k, k);
        a.setFromTriplets(trip.begin(), trip.end());
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.analyzePattern(a);
        lu.factorize(a);
        if (lu.info() != Eigen::Success) throw SolverError("stationary system is singular");
        pi = lu.solve(rhs);
    }

    // Balance check: || pi P - pi ||_1.
    Eigen::VectorXd flow = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        for (const auto& [w, prob] : chain.out[members[static_cast<std::size_t>(i)]]) flow(local[w]) += pi(i) * prob;
    }
    if ((flow - pi).lpNorm<1>() > 1e-10 || pi.minCoeff() < -1e-12) {
        throw SolverError("stationary distribution failed the balance check");
    }

    ChainStatistics st;
    for (Eigen::Index i = 0; i < k; ++i) {
        const auto v = members[static_cast<std::size_t>(i)];
        st.adversary_rate += pi(i) * chain.r_a[v];
        st.honest_rate += pi(i) * chain.r_h[v];
        st.stationary.emplace_back(chain.states[v], pi(i));
    }
    const double total = st.adversary_rate + st.honest_rate;
    if (!(total > 0.0)) throw SolverError("policy '" + pol.name() + "' never gets a block accepted");
    st.rmg = st.adversary_rate / total;
    return st;
}

double exact_policy_rmg(const Policy& pol, const ModelParams& p) { return policy_chain_statistics(pol, p).rmg; }

double oracle_policy_count(const ModelParams& p) {
    double count = 1.0;
    for (const auto& s : reachable_states(p)) count *= static_cast<double>(allowed_actions(s, p).size());
    return count;
}

OracleReport enumerate_policies_oracle(const ModelParams& p, double max_policies) {
    const double estimate = oracle_policy_count(p);
    if (p.l_max > 3 || estimate > max_policies) {
        throw SolverError("oracle refused: l_max=" + std::to_string(p.l_max) + " gives about " +
                          text::format_double(estimate) + " policies (limit l_max <= 3 and " +
                          text::format_double(max_policies) + " policies)");
    }
    const auto states = reachable_states(p);
    std::vector<std::vector<Action>> options;
    options.reserve(states.size());
    for (const auto& s : states) options.push_back(allowed_actions(s, p));

    std::vector<std::size_t> digit(states.size(), 0);
    Policy candidate("oracle", p.l_max);
    candidate.alpha = p.alpha;
    candidate.gamma = p.gamma;
    for (std::size_t i = 0; i < states.size(); ++i) candidate.set(states[i], options[i][0]);

    OracleReport best{candidate, -1.0, 0};
    while (true) {
        const double rmg = exact_policy_rmg(candidate, p);
        ++best.enumerated;
        if (rmg > best.best_rmg) {
            best.best_rmg = rmg;
            best.best = candidate;
        }
        // Mixed-radix increment, first state varies fastest.
        std::size_t i = 0;
        for (; i < states.size(); ++i) {
            if (++digit[i] < options[i].size()) {
                candidate.set(states[i], options[i][digit[i]]);
                break;
            }
            digit[i] = 0;
            candidate.set(states[i], options[i][0]);
        }
        if (i == states.size()) break;
    }
    return best;
}

}  // namespace forkbench
