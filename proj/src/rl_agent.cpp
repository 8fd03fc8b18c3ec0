#include "forkbench/rl_agent.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "forkbench/text_io.hpp"

namespace forkbench {

namespace {
// Beyond this magnitude the ratio objective starts losing integer-reward resolution.
constexpr double kEntryLimit = 1e15;
}  // namespace

void AgentHyperparams::validate() const {
    if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must lie in (0, 1]");
    if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in (0, 1]");
    if (!(t_eps >= 0.0) || !std::isfinite(t_eps)) throw std::invalid_argument("t_eps must be a finite value >= 0");
}

QTablePair::QTablePair(int l_max)
    : space_(l_max), q_a_(space_.size() * kNumActions, 0.0), q_h_(space_.size() * kNumActions, 0.0) {}

void QTablePair::set(const ChainState& s, Action a, double qa, double qh) {
    const auto i = cell(s, a);
    q_a_[i] = qa;
    q_h_[i] = qh;
}

void QTablePair::scale(double c) {
    for (auto& x : q_a_) x *= c;
    for (auto& x : q_h_) x *= c;
}

double QTablePair::max_entry() const {
    double m = 0.0;
    for (double x : q_a_) m = std::max(m, std::abs(x));
    for (double x : q_h_) m = std::max(m, std::abs(x));
    return m;
}

VisitCounts::VisitCounts(int l_max) : space_(l_max), v_(space_.size(), 0) {}

double fraction_objective(const QTablePair& q, const ChainState& s, Action a) {
    const double qa = q.q_a(s, a);
    const double qh = q.q_h(s, a);
    assert(qa >= 0.0 && qh >= 0.0);
    const double denom = qa + qh;
    return denom > 0.0 ? qa / denom : 0.0;
}

Action greedy_action(const QTablePair& q, const ChainState& s, const ModelParams& p) {
    std::optional<Action> best;
    double best_f = 0.0;
    for (auto a : kActions) {
        if (!is_allowed(s, a, p)) continue;
        const double f = fraction_objective(q, s, a);
        if (!best || f > best_f) {
            best = a;
            best_f = f;
        }
    }
    return *best;  // Adopt is always legal
}

double epsilon_for_state(const VisitCounts& v, const ChainState& s, double t_eps) {
    if (t_eps <= 0.0) return 0.0;
    return std::exp(-static_cast<double>(v[s]) / t_eps);
}

Action select_action(const QTablePair& q, VisitCounts& v, const ChainState& s, const ModelParams& p,
                     const AgentHyperparams& hyper, Rng& rng, bool force_greedy) {
    const double eps = force_greedy ? 0.0 : epsilon_for_state(v, s, hyper.t_eps);
    Action a = Action::Adopt;
    if (eps > 0.0 && uniform01(rng) < eps) {
        const auto legal = allowed_actions(s, p);
        a = legal[std::uniform_int_distribution<std::size_t>(0, legal.size() - 1)(rng)];
    } else {
        a = greedy_action(q, s, p);
    }
    v.increment(s);
    return a;
}

void td_update(QTablePair& q, const Experience& e, const ModelParams& p, const AgentHyperparams& hyper) {
    const Action bootstrap = greedy_action(q, e.s_next, p);
    const double next_a = q.q_a(e.s_next, bootstrap);
    const double next_h = q.q_h(e.s_next, bootstrap);
    const double qa = (1.0 - hyper.beta) * q.q_a(e.s, e.a) + hyper.beta * (e.r_a + hyper.lambda * next_a);
    const double qh = (1.0 - hyper.beta) * q.q_h(e.s, e.a) + hyper.beta * (e.r_h + hyper.lambda * next_h);
    if (!(qa < kEntryLimit && qh < kEntryLimit)) {
        throw std::overflow_error("Q-table entry exceeded " + text::format_double(kEntryLimit) + " at " +
                                  to_string(e.s) + "; lower lambda");
    }
    q.set(e.s, e.a, qa, qh);
}

QAgent::QAgent(int l_max, AgentHyperparams hyper) : q_(l_max), v_(l_max), hyper_(hyper) { hyper_.validate(); }

bool QAgent::exploiting() const noexcept {
    return hyper_.t_eps <= 0.0 || (hyper_.exploit_after && steps_ >= *hyper_.exploit_after);
}

Action QAgent::act(const ChainState& s, const ModelParams& p, Rng& rng) {
    return select_action(q_, v_, s, p, hyper_, rng, exploiting());
}

void QAgent::observe(const ChainState& s, Action a, const StepResult& out, const ModelParams& p) {
    td_update(q_, {s, a, out.next, out.reward.r_a, out.reward.r_h}, p, hyper_);
    ++steps_;
}

Policy QAgent::greedy_policy(const ModelParams& p) const {
    Policy pol("rl-greedy", p.l_max);
    pol.alpha = p.alpha;
    pol.gamma = p.gamma;
    for (const auto& s : enumerate_states(p)) pol.set(s, greedy_action(q_, s, p));
    return pol;
}

TrainStats train(Environment& env, QAgent& agent, std::uint64_t steps, Rng& rng, const StepHook& hook) {
    TrainStats st;
    ChainState s = env.state();
    for (std::uint64_t t = 0; t < steps; ++t) {
        const ModelParams& p = env.params();
        const Action a = agent.act(s, p, rng);
        const StepResult out = env.step(a, rng);
        agent.observe(s, a, out, p);
        st.blocks_adversary += static_cast<std::uint64_t>(out.reward.r_a);
        st.blocks_honest += static_cast<std::uint64_t>(out.reward.r_h);
        if (hook) hook(t, s, a, out);
        s = out.next;
    }
    st.steps = steps;
    return st;
}

void save_qtables(const QAgent& agent, const ModelParams& p, std::ostream& out) {
    const auto& h = agent.hyper();
    out << "forkbench-qtables v1; alpha=" << text::format_double(p.alpha)
        << "; gamma=" << text::format_double(p.gamma) << "; l_max=" << p.l_max
        << "; beta=" << text::format_double(h.beta) << "; lambda=" << text::format_double(h.lambda)
        << "; t_eps=" << text::format_double(h.t_eps) << "; steps=" << agent.steps();
    if (h.exploit_after) out << "; exploit_after=" << *h.exploit_after;
    out << '\n';
    const auto& q = agent.tables();
    for (const auto& s : enumerate_states(p)) {
        for (auto a : allowed_actions(s, p)) {
            out << s.l_a << ' ' << s.l_h << ' ' << to_string(s.fork) << ' ' << to_string(a) << ' '
                << text::format_double(q.q_a(s, a)) << ' ' << text::format_double(q.q_h(s, a)) << ' '
                << agent.visits()[s] << '\n';
        }
    }
}

void save_qtables(const QAgent& agent, const ModelParams& p, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    save_qtables(agent, p, out);
}

QTableFile load_qtables(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, "empty Q-table file");
    const auto kv = text::parse_header(line, "forkbench-qtables", 1,
                                       {"alpha", "gamma", "l_max", "beta", "lambda", "t_eps", "steps", "exploit_after"});
    for (const char* key : {"alpha", "gamma", "l_max", "beta", "lambda", "t_eps", "steps"}) {
        if (!kv.count(key)) throw ParseError(1, std::string("header is missing ") + key);
    }
    ModelParams p;
    p.alpha = text::parse_double(kv.at("alpha"), 1);
    p.gamma = text::parse_double(kv.at("gamma"), 1);
    const auto l_max = text::parse_int(kv.at("l_max"), 1);
    if (l_max < 1 || l_max > 10000) throw ParseError(1, "l_max out of range");
    p.l_max = static_cast<int>(l_max);
    AgentHyperparams h;
    h.beta = text::parse_double(kv.at("beta"), 1);
    h.lambda = text::parse_double(kv.at("lambda"), 1);
    h.t_eps = text::parse_double(kv.at("t_eps"), 1);
    if (kv.count("exploit_after")) {
        const auto ea = text::parse_int(kv.at("exploit_after"), 1);
        if (ea < 0) throw ParseError(1, "exploit_after must be non-negative");
        h.exploit_after = static_cast<std::uint64_t>(ea);
    }
    try {
        h.validate();
    } catch (const std::invalid_argument& e) {
        throw ParseError(1, e.what());
    }
    const auto steps = text::parse_int(kv.at("steps"), 1);
    if (steps < 0) throw ParseError(1, "steps must be non-negative");

    QTableFile f{p, h, static_cast<std::uint64_t>(steps), QTablePair(p.l_max), VisitCounts(p.l_max)};
    std::vector<char> seen_state(f.q.space().size(), 0);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        const auto tok = text::split_ws(line);
        if (tok.empty()) continue;
        if (tok.size() != 7) throw ParseError(lineno, "expected 'l_a l_h fork action q_a q_h visits'");
        ChainState s;
        s.l_a = static_cast<int>(text::parse_int(tok[0], lineno));
        s.l_h = static_cast<int>(text::parse_int(tok[1], lineno));
        Action a{};
        try {
            s.fork = parse_fork_label(tok[2]);
            a = parse_action(tok[3]);
            check_state(s, p);
        } catch (const std::exception& e) {
            throw ParseError(lineno, e.what());
        }
        if (!is_allowed(s, a, p)) throw ParseError(lineno, std::string(to_string(a)) + " is illegal in " + to_string(s));
        const double qa = text::parse_double(tok[4], lineno);
        const double qh = text::parse_double(tok[5], lineno);
        if (qa < 0.0 || qh < 0.0) throw ParseError(lineno, "Q entries must be non-negative");
        const auto visits = text::parse_int(tok[6], lineno);
        if (visits < 0) throw ParseError(lineno, "visit count must be non-negative");
        const auto si = f.q.space().index(s);
        if (seen_state[si] && f.v[s] != static_cast<std::uint64_t>(visits)) {
            throw ParseError(lineno, "inconsistent visit count for " + to_string(s));
        }
        seen_state[si] = 1;
        f.q.set(s, a, qa, qh);
        f.v.set(s, static_cast<std::uint64_t>(visits));
    }
    return f;
}

QTableFile load_qtables(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return load_qtables(in);
}

QAgent agent_from_file(const QTableFile& f) {
    QAgent agent(f.params.l_max, f.hyper);
    agent.tables() = f.q;
    agent.visits() = f.v;
    agent.set_steps(f.steps);
    return agent;
}

}  // namespace forkbench
