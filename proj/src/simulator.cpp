#include "forkbench/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "forkbench/text_io.hpp"

namespace forkbench {

std::pair<ChainState, RewardPair> env_step_mdp(const ChainState& s, Action a, const ModelParams& p, Rng& rng) {
    return sample_transition(s, a, p, rng);
}

MdpEnvironment::MdpEnvironment(ModelParams p) : params_(p) {}

ChainState MdpEnvironment::reset(Rng& rng) {
    state_ = initial_state(params_, rng).first;
    return state_;
}

StepResult MdpEnvironment::step(Action a, Rng& rng) {
    auto [next, reward] = env_step_mdp(state_, a, params_, rng);
    state_ = next;
    return {next, reward};
}

void MdpEnvironment::restore(const ChainState& s) {
    check_state(s, params_);
    state_ = s;
}

void MdpEnvironment::set_rates(double alpha, double gamma) {
    params_.alpha = alpha;
    params_.gamma = gamma;
}

MinerPopulation MinerPopulation::from_alpha(double alpha, int n_total, double p_hash) {
    MinerPopulation pop{n_total, static_cast<int>(std::lround(alpha * n_total)), p_hash};
    pop.validate();
    return pop;
}

void MinerPopulation::validate() const {
    if (n_total < 2) throw std::invalid_argument("need at least two miners");
    if (n_adversary <= 0 || n_adversary >= n_total) {
        throw std::invalid_argument("adversary pool must hold between 1 and n_total - 1 miners, got " +
                                    std::to_string(n_adversary));
    }
    if (!(p_hash > 0.0 && p_hash < 1.0)) throw std::invalid_argument("p_hash must lie in (0, 1)");
}

namespace {

int split_count(const MinerPopulation& pop, double gamma) {
    return static_cast<int>(std::lround(gamma * pop.n_honest()));
}

}  // namespace

std::pair<ChainState, RewardPair> env_step_mc(const MinerPopulation& pop, ForkBookkeeping& book, double gamma,
                                              const ChainState& s, Action a, const ModelParams& p, Rng& rng) {
    check_state(s, p);
    if (!is_allowed(s, a, p)) {
        throw ContractViolation("action " + std::string(to_string(a)) + " is not legal in " + to_string(s));
    }
    const bool contested = is_contested(s, a);
    if (s.fork == ForkLabel::Active && contested && !book.race_open) {
        throw std::logic_error("bookkeeping: active fork " + to_string(s) + " without an open race");
    }
    if (contested && !book.race_open) {
        // A race opens with this publication; the honest split is fixed until it resolves.
        book.race_open = true;
        book.on_adversary_branch = split_count(pop, gamma);
    }

    std::binomial_distribution<int> successes(pop.n_total, pop.p_hash);
    int k = 0;
    do {
        ++book.ticks;
        k = successes(rng);
    } while (k == 0);
    int winner = 0;
    if (k == 1) {
        winner = std::uniform_int_distribution<int>(0, pop.n_total - 1)(rng);
    } else {
        // Draw the k successful miners without replacement, then pick one of them.
        const int pick = std::uniform_int_distribution<int>(0, k - 1)(rng);
        std::vector<int> chosen;
        chosen.reserve(static_cast<std::size_t>(k));
        while (static_cast<int>(chosen.size()) < k) {
            const int m = std::uniform_int_distribution<int>(0, pop.n_total - 1)(rng);
            if (std::find(chosen.begin(), chosen.end(), m) == chosen.end()) chosen.push_back(m);
        }
        winner = chosen[static_cast<std::size_t>(pick)];
    }

    MiningEvent event = MiningEvent::HonestOnHonestBranch;
    if (winner < pop.n_adversary) {
        event = MiningEvent::AdversaryBlock;
    } else if (contested && winner < pop.n_adversary + book.on_adversary_branch) {
        event = MiningEvent::HonestOnAdversaryBranch;
    }
    auto result = apply_event(s, a, event);
    if (result.first.fork != ForkLabel::Active) {
        book.race_open = false;
        book.on_adversary_branch = 0;
    }
    return result;
}

MonteCarloEnvironment::MonteCarloEnvironment(ModelParams p, int n_total, double p_hash)
    : params_(p), pop_(MinerPopulation::from_alpha(p.alpha, n_total, p_hash)) {
    params_.alpha = pop_.effective_alpha();
}

ChainState MonteCarloEnvironment::reset(Rng& rng) {
    // The first block of the run goes to a uniformly drawn miner.
    const int winner = std::uniform_int_distribution<int>(0, pop_.n_total - 1)(rng);
    state_ = winner < pop_.n_adversary ? ChainState{1, 0, ForkLabel::Irrelevant} : ChainState{0, 1, ForkLabel::Irrelevant};
    book_ = {};
    return state_;
}

StepResult MonteCarloEnvironment::step(Action a, Rng& rng) {
    auto [next, reward] = env_step_mc(pop_, book_, params_.gamma, state_, a, params_, rng);
    state_ = next;
    return {next, reward};
}

void MonteCarloEnvironment::restore(const ChainState& s) {
    check_state(s, params_);
    state_ = s;
    book_.race_open = s.fork == ForkLabel::Active && s.l_a >= s.l_h;
    book_.on_adversary_branch = book_.race_open ? split_count(pop_, params_.gamma) : 0;
}

void MonteCarloEnvironment::set_rates(double alpha, double gamma) {
    pop_ = MinerPopulation::from_alpha(alpha, pop_.n_total, pop_.p_hash);
    params_.alpha = pop_.effective_alpha();
    params_.gamma = gamma;
}

double MonteCarloEnvironment::effective_gamma() const noexcept {
    return static_cast<double>(split_count(pop_, params_.gamma)) / pop_.n_honest();
}

std::string_view to_string(Backend b) { return b == Backend::Mdp ? "mdp" : "mc"; }

Backend parse_backend(std::string_view text) {
    if (text == "mdp") return Backend::Mdp;
    if (text == "mc") return Backend::MonteCarlo;
    throw std::invalid_argument("unknown backend '" + std::string(text) + "' (expected mdp or mc)");
}

std::unique_ptr<Environment> make_environment(Backend b, const ModelParams& p, int n_miners, double p_hash) {
    if (b == Backend::Mdp) return std::make_unique<MdpEnvironment>(p);
    return std::make_unique<MonteCarloEnvironment>(p, n_miners, p_hash);
}

RewardLedger::RewardLedger(std::uint64_t granularity) : granularity_(granularity) {
    if (granularity == 0) throw std::invalid_argument("ledger granularity must be positive");
    marks_.emplace_back(0, 0);
}

void RewardLedger::append(const RewardPair& r) {
    if (r.r_a < 0 || r.r_h < 0) throw ContractViolation("negative reward");
    sum_a_ += static_cast<std::uint64_t>(r.r_a);
    sum_h_ += static_cast<std::uint64_t>(r.r_h);
    ++steps_;
    if (steps_ % granularity_ == 0) marks_.emplace_back(sum_a_, sum_h_);
}

std::pair<std::uint64_t, std::uint64_t> RewardLedger::prefix(std::uint64_t t) const {
    if (t == steps_) return {sum_a_, sum_h_};
    if (t > steps_ || t % granularity_ != 0) {
        throw ContractViolation("ledger position " + std::to_string(t) + " is not addressable");
    }
    return marks_[t / granularity_];
}

WindowRmg windowed_rmg(const RewardLedger& ledger, std::uint64_t start, std::uint64_t t_w) {
    if (t_w == 0 || start + t_w > ledger.size()) {
        throw ContractViolation("window [" + std::to_string(start) + ", " + std::to_string(start + t_w) +
                                ") outside ledger of " + std::to_string(ledger.size()) + " steps");
    }
    const auto [a0, h0] = ledger.prefix(start);
    const auto [a1, h1] = ledger.prefix(start + t_w);
    const auto ra = a1 - a0;
    const auto rh = h1 - h0;
    if (ra + rh == 0) return {0.0, true};
    return {static_cast<double>(ra) / static_cast<double>(ra + rh), false};
}

std::vector<ScheduleSegment> parse_schedule(std::string_view text) {
    std::vector<ScheduleSegment> out;
    std::size_t start = 0;
    while (start < text.size()) {
        auto comma = text.find(',', start);
        if (comma == std::string_view::npos) comma = text.size();
        const auto item = text::trim(text.substr(start, comma - start));
        const auto c1 = item.find(':');
        const auto c2 = c1 == std::string_view::npos ? c1 : item.find(':', c1 + 1);
        if (c2 == std::string_view::npos) {
            throw std::invalid_argument("schedule segment '" + std::string(item) + "' is not alpha:gamma:duration");
        }
        ScheduleSegment seg;
        seg.alpha = text::parse_double(item.substr(0, c1), 0);
        seg.gamma = text::parse_double(item.substr(c1 + 1, c2 - c1 - 1), 0);
        const double d = text::parse_double(item.substr(c2 + 1), 0);
        if (!(d >= 1.0) || d != std::floor(d) || d > 1e15) {
            throw std::invalid_argument("segment duration must be a positive integer");
        }
        seg.duration = static_cast<std::uint64_t>(d);
        ModelParams{seg.alpha, seg.gamma, 2}.validate();
        out.push_back(seg);
        start = comma + 1;
    }
    if (out.empty()) throw std::invalid_argument("empty schedule");
    return out;
}

std::string format_schedule(const std::vector<ScheduleSegment>& schedule) {
    std::string out;
    for (const auto& seg : schedule) {
        if (!out.empty()) out += ',';
        out += text::format_double(seg.alpha) + ':' + text::format_double(seg.gamma) + ':' + std::to_string(seg.duration);
    }
    return out;
}

std::uint64_t schedule_length(const std::vector<ScheduleSegment>& schedule) {
    std::uint64_t n = 0;
    for (const auto& seg : schedule) n += seg.duration;
    return n;
}

RunResult run_schedule(Controller& controller, Environment& env, const std::vector<ScheduleSegment>& schedule,
                       const RunOptions& opts, Rng& rng) {
    if (schedule.empty()) throw std::invalid_argument("empty schedule");
    if (opts.t_w == 0) throw std::invalid_argument("t_w must be positive");
    if (opts.start_step % opts.t_w != 0) throw std::invalid_argument("resume step must be a multiple of t_w");

    RunResult result;
    RewardLedger ledger(opts.t_w);
    const std::uint64_t total = schedule_length(schedule);
    std::uint64_t seg_begin = 0;
    std::uint64_t step = opts.start_step;
    ChainState s = env.state();
    for (const auto& seg : schedule) {
        const std::uint64_t seg_end = seg_begin + seg.duration;
        if (step < seg_end) {
            env.set_rates(seg.alpha, seg.gamma);
            for (; step < seg_end; ++step) {
                const ModelParams& p = env.params();
                const Action a = controller.act(s, p, rng);
                const StepResult out = env.step(a, rng);
                controller.observe(s, a, out, p);
                ledger.append(out.reward);
                s = out.next;
                if ((step + 1) % opts.t_w == 0) {
                    const auto w = windowed_rmg(ledger, ledger.size() - opts.t_w, opts.t_w);
                    SeriesPoint pt{step + 1, w.rmg, seg.alpha, seg.gamma, w.empty};
                    result.series.push_back(pt);
                    if (opts.on_window) opts.on_window(step + 1, pt);
                }
            }
        }
        seg_begin = seg_end;
    }
    result.steps = total - opts.start_step;
    result.blocks_adversary = ledger.total_adversary();
    result.blocks_honest = ledger.total_honest();
    return result;
}

void write_series_csv_header(std::ostream& out) { out << "step,rmg,alpha,gamma,strategy,seed,backend,empty\n"; }

void write_series_csv(std::ostream& out, const std::vector<SeriesPoint>& series, std::string_view strategy,
                      std::uint64_t seed, std::string_view backend) {
    for (const auto& pt : series) {
        out << pt.step << ',' << text::format_double(pt.rmg) << ',' << text::format_double(pt.alpha) << ','
            << text::format_double(pt.gamma) << ',' << strategy << ',' << seed << ',' << backend << ','
            << (pt.empty ? 1 : 0) << '\n';
    }
}

double tail_mean_rmg(const std::vector<SeriesPoint>& series, std::size_t count) {
    double sum = 0.0;
    std::size_t n = 0;
    for (auto it = series.rbegin(); it != series.rend() && n < count; ++it) {
        if (it->empty) continue;
        sum += it->rmg;
        ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace forkbench
