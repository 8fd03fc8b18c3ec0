// forkbench: command-line front end for the mining-strategy lab.

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "forkbench/harness.hpp"

namespace {

struct Sub {
    forkbench::Mode mode;
    CLI::App* app = nullptr;
    std::string config;
    std::map<std::string, std::string> values;
    bool resume = false;
};

const std::map<std::string, std::string> kHelp{
    {"alpha", "adversary hash share, (0, 0.5]"},
    {"gamma", "share of honest miners that follow the adversary in a race, [0, 1]"},
    {"l-max", "chain-length truncation bound"},
    {"beta", "Q-learning rate"},
    {"lambda", "discount factor"},
    {"t-eps", "exploration temperature (0 = always greedy)"},
    {"exploit-after", "switch exploration off after this many steps"},
    {"schedule", "alpha:gamma:steps[,alpha:gamma:steps...]"},
    {"backend", "mdp or mc"},
    {"steps", "number of mined blocks (2e7 style accepted)"},
    {"t-w", "window length for the RMG series"},
    {"seed", "rng seed (falls back to FORKBENCH_SEED)"},
    {"out", "output directory"},
    {"strategy", "honest | selfish | lead-stubborn | policy-file | qtable-file"},
    {"strategies", "comma list of rl, optimal, selfish, honest, lead-stubborn"},
    {"seeds", "comma list of seeds for compare"},
    {"policy-file", "policy file for strategy policy-file"},
    {"qtable-file", "Q-table file for strategy qtable-file"},
    {"checkpoint-every", "checkpoint cadence in steps (multiple of t-w)"},
    {"n-miners", "miners in the Monte Carlo backend"},
    {"p-hash", "per-miner success probability per tick (mc)"},
    {"search-tol", "bisection tolerance on rho"},
    {"jobs", "worker threads for compare (0 = all cores)"},
};

}  // namespace

int main(int argc, char** argv) {
    using forkbench::Mode;
    CLI::App app{"forkbench: mining strategies, optimal policies and Q-learning on the fork MDP"};
    app.require_subcommand(1);

    std::vector<Sub> subs{{Mode::Solve}, {Mode::Train}, {Mode::Simulate}, {Mode::Compare}, {Mode::Oracle}};
    const std::map<Mode, std::string> about{
        {Mode::Solve, "solve for the RMG-optimal policy"},
        {Mode::Train, "train the Q-learning agent"},
        {Mode::Simulate, "run a fixed strategy"},
        {Mode::Compare, "run several strategies over the same seeds"},
        {Mode::Oracle, "brute-force the best policy (l-max <= 3)"},
    };
    for (auto& sub : subs) {
        sub.app = app.add_subcommand(std::string(forkbench::to_string(sub.mode)), about.at(sub.mode));
        sub.app->add_option("--config", sub.config, "key = value config file; flags override it");
        for (const auto& key : forkbench::config_keys()) {
            if (key == "resume") continue;
            sub.app->add_option("--" + key, sub.values[key], kHelp.at(key));
        }
        if (sub.mode == Mode::Train) sub.app->add_flag("--resume", sub.resume, "continue from out/checkpoint.txt");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    for (auto& sub : subs) {
        if (!sub.app->parsed()) continue;
        std::vector<std::pair<std::string, std::string>> flags;
        for (const auto& key : forkbench::config_keys()) {
            if (key == "resume") {
                if (sub.resume) flags.emplace_back("resume", "true");
                continue;
            }
            if (sub.app->count("--" + key) > 0) flags.emplace_back(key, sub.values[key]);
        }
        std::optional<std::filesystem::path> config;
        if (!sub.config.empty()) config = sub.config;
        forkbench::ExperimentConfig cfg;
        try {
            cfg = forkbench::resolve_config(sub.mode, config, flags);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 2;
        }
        return forkbench::run_command(cfg, std::cout, std::cerr);
    }
    return 2;
}
