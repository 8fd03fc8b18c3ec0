#include "forkbench/strategies.hpp"

#include <deque>
#include <fstream>
#include <sstream>

#include "forkbench/text_io.hpp"

namespace forkbench {

PolicyIncomplete::PolicyIncomplete(const ChainState& s)
    : std::runtime_error("policy incomplete: no action for state " + to_string(s)), state_(s) {}

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

Policy::Policy(std::string name, int l_max)
    : name_(std::move(name)), space_(l_max), actions_(space_.size(), -1) {}

void Policy::set(const ChainState& s, Action a) {
    const ModelParams bounds{0.5, 0.5, l_max()};
    check_state(s, bounds);
    if (!is_allowed(s, a, bounds)) {
        throw ContractViolation("policy '" + name_ + "': " + std::string(to_string(a)) + " is illegal in " +
                                to_string(s));
    }
    auto& slot = actions_[space_.index(s)];
    if (slot < 0) ++populated_;
    slot = static_cast<std::int8_t>(a);
}

std::optional<Action> Policy::find(const ChainState& s) const {
    if (s.l_a < 0 || s.l_h < 0 || s.l_a > l_max() || s.l_h > l_max()) return std::nullopt;
    const auto v = actions_[space_.index(s)];
    if (v < 0) return std::nullopt;
    return static_cast<Action>(v);
}

Action Policy::at(const ChainState& s) const {
    if (auto a = find(s)) return *a;
    throw PolicyIncomplete(s);
}

std::vector<std::pair<ChainState, Action>> Policy::entries() const {
    std::vector<std::pair<ChainState, Action>> out;
    out.reserve(populated_);
    for (std::size_t i = 0; i < actions_.size(); ++i) {
        if (actions_[i] >= 0) out.emplace_back(space_.at(i), static_cast<Action>(actions_[i]));
    }
    return out;
}

bool Policy::same_mapping(const Policy& other) const {
    return l_max() == other.l_max() && actions_ == other.actions_;
}

Action honest_action(const ChainState& s) {
    if (s.l_a < 0 || s.l_a > 1 || s.l_h < 0 || s.l_h > 1) {
        throw ContractViolation("honest mining never reaches " + to_string(s));
    }
    if (s.l_a < s.l_h) return Action::Adopt;
    if (s.l_a == s.l_h) return Action::Wait;
    return Action::Override;
}

Action selfish_action(const ChainState& s) {
    if (s.l_a < s.l_h) return Action::Adopt;
    if (s.l_a == 1 && s.l_h == 1) return Action::Match;
    if (s.l_h >= 1 && s.l_h == s.l_a - 1) return Action::Override;
    return Action::Wait;
}

Action lead_stubborn_action(const ChainState& s) {
    if (s.l_a < s.l_h) return Action::Adopt;
    if (s.l_a > s.l_h && s.fork == ForkLabel::Irrelevant) return Action::Wait;
    return Action::Match;
}

std::pair<Action, bool> legalize(Action prescribed, const ChainState& s, const ModelParams& p) {
    Action a = prescribed;
    if (a == Action::Match && !is_allowed(s, a, p)) a = Action::Wait;
    if (a == Action::Wait && !is_allowed(s, a, p)) {
        a = is_allowed(s, Action::Override, p) ? Action::Override : Action::Adopt;
    }
    if (!is_allowed(s, a, p)) a = Action::Adopt;
    return {a, a != prescribed};
}

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::Honest: return "honest";
        case Strategy::Selfish: return "selfish";
        case Strategy::LeadStubborn: return "lead-stubborn";
    }
    return "?";
}

Policy make_policy(std::string name, const ModelParams& p, const std::function<Action(const ChainState&)>& rule) {
    Policy pol(std::move(name), p.l_max);
    pol.alpha = p.alpha;
    pol.gamma = p.gamma;
    std::deque<ChainState> frontier{{1, 0, ForkLabel::Irrelevant}, {0, 1, ForkLabel::Irrelevant}};
    // Reachability is structural: every branch counts, whatever its probability.
    const ModelParams structural{0.5, 0.5, p.l_max};
    while (!frontier.empty()) {
        const ChainState s = frontier.front();
        frontier.pop_front();
        if (pol.find(s)) continue;
        const Action prescribed = rule(s);
        const auto [a, fell_back] = legalize(prescribed, s, p);
        if (fell_back) {
            pol.notes.push_back(to_string(s) + ": " + std::string(to_string(prescribed)) + " -> " +
                                std::string(to_string(a)));
        }
        pol.set(s, a);
        for (const auto& e : transition_distribution(s, a, structural)) {
            if (!pol.find(e.next)) frontier.push_back(e.next);
        }
    }
    return pol;
}

Policy closed_form_policy(Strategy which, const ModelParams& p) {
    switch (which) {
        case Strategy::Honest: return make_policy("honest", p, honest_action);
        case Strategy::Selfish: return make_policy("selfish", p, selfish_action);
        case Strategy::LeadStubborn: return make_policy("lead-stubborn", p, lead_stubborn_action);
    }
    throw std::invalid_argument("unknown strategy");
}

Action lookup_policy_action(const Policy& pol, const ChainState& s) { return pol.at(s); }

void save_policy(const Policy& pol, std::ostream& out) {
    out << "forkbench-policy v1";
    if (!pol.name().empty()) out << "; name=" << pol.name();
    if (pol.alpha) out << "; alpha=" << text::format_double(*pol.alpha);
    if (pol.gamma) out << "; gamma=" << text::format_double(*pol.gamma);
    out << "; l_max=" << pol.l_max() << '\n';
    for (const auto& [s, a] : pol.entries()) {
        out << s.l_a << ' ' << s.l_h << ' ' << to_string(s.fork) << ' ' << to_string(a) << '\n';
    }
}

void save_policy(const Policy& pol, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    save_policy(pol, out);
}

Policy load_policy(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, "empty policy file");
    const auto kv = text::parse_header(line, "forkbench-policy", 1, {"name", "alpha", "gamma", "l_max"});
    const auto lm = kv.find("l_max");
    if (lm == kv.end()) throw ParseError(1, "header is missing l_max");
    const auto l_max = text::parse_int(lm->second, 1);
    if (l_max < 1 || l_max > 10000) throw ParseError(1, "l_max out of range");
    Policy pol(kv.count("name") ? kv.at("name") : std::string{}, static_cast<int>(l_max));
    if (kv.count("alpha")) pol.alpha = text::parse_double(kv.at("alpha"), 1);
    if (kv.count("gamma")) pol.gamma = text::parse_double(kv.at("gamma"), 1);

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        const auto tok = text::split_ws(line);
        if (tok.empty()) continue;
        if (tok.size() != 4) throw ParseError(lineno, "expected 'l_a l_h fork action'");
        ChainState s;
        s.l_a = static_cast<int>(text::parse_int(tok[0], lineno));
        s.l_h = static_cast<int>(text::parse_int(tok[1], lineno));
        Action a{};
        try {
            s.fork = parse_fork_label(tok[2]);
            a = parse_action(tok[3]);
        } catch (const std::invalid_argument& e) {
            throw ParseError(lineno, e.what());
        }
        if (pol.find(s)) throw ParseError(lineno, "duplicate entry for " + to_string(s));
        try {
            pol.set(s, a);
        } catch (const ContractViolation& e) {
            throw ParseError(lineno, e.what());
        }
    }
    return pol;
}

Policy load_policy(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return load_policy(in);
}

namespace {

std::optional<Action> cell_action(char c) {
    switch (c) {
        case 'a': return Action::Adopt;
        case 'o': return Action::Override;
        case 'm': return Action::Match;
        case 'w': return Action::Wait;
        case '*': return std::nullopt;
        default: throw std::invalid_argument(std::string("unknown cell character '") + c + "'");
    }
}

}  // namespace

Policy policy_from_cell_table(std::string_view table, int l_max, int first_l_h) {
    Policy pol("cell-table", l_max);
    std::istringstream in{std::string(table)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto tok = text::split_ws(line);
        if (tok.empty()) continue;
        const int l_a = static_cast<int>(text::parse_int(tok[0], lineno));
        for (std::size_t col = 1; col < tok.size(); ++col) {
            const auto cell = tok[col];
            if (cell.size() != 3) throw ParseError(lineno, "cell '" + std::string(cell) + "' is not 3 characters");
            const int l_h = first_l_h + static_cast<int>(col) - 1;
            for (std::size_t k = 0; k < 3; ++k) {
                std::optional<Action> a;
                try {
                    a = cell_action(cell[k]);
                } catch (const std::invalid_argument& e) {
                    throw ParseError(lineno, e.what());
                }
                if (!a) continue;
                try {
                    pol.set({l_a, l_h, kForkLabels[k]}, *a);
                } catch (const ContractViolation& e) {
                    throw ParseError(lineno, e.what());
                }
            }
        }
    }
    return pol;
}

}  // namespace forkbench
