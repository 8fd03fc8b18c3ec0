#include "forkbench/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "forkbench/optimal_solver.hpp"
#include "forkbench/strategies.hpp"
#include "forkbench/text_io.hpp"

namespace forkbench {

namespace fs = std::filesystem;

std::string_view to_string(Mode m) {
    switch (m) {
        case Mode::Solve: return "solve";
        case Mode::Train: return "train";
        case Mode::Simulate: return "simulate";
        case Mode::Compare: return "compare";
        case Mode::Oracle: return "oracle";
    }
    return "?";
}

Mode parse_mode(std::string_view text) {
    for (auto m : {Mode::Solve, Mode::Train, Mode::Simulate, Mode::Compare, Mode::Oracle}) {
        if (to_string(m) == text) return m;
    }
    throw UsageError("unknown mode '" + std::string(text) + "'");
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{
        "alpha",       "gamma",       "l-max",      "beta",   "lambda",      "t-eps",
        "exploit-after", "schedule",  "backend",    "steps",  "t-w",         "seed",
        "out",         "strategy",    "strategies", "seeds",  "policy-file", "qtable-file",
        "checkpoint-every", "resume", "n-miners",   "p-hash", "search-tol",  "jobs"};
    return keys;
}

namespace {

bool known_key(const std::string& key) {
    const auto& k = config_keys();
    return std::find(k.begin(), k.end(), key) != k.end();
}

double to_double(const std::string& key, std::string_view v) {
    v = text::trim(v);
    double x = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(x)) {
        throw UsageError(key + ": expected a number, got '" + std::string(v) + "'");
    }
    return x;
}

std::vector<std::string> split_list(std::string_view v) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= v.size()) {
        const auto comma = v.find(',', start);
        const auto piece = text::trim(v.substr(start, comma == std::string_view::npos ? v.npos : comma - start));
        if (!piece.empty()) out.emplace_back(piece);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

bool to_bool(const std::string& key, std::string_view v) {
    v = text::trim(v);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UsageError(key + ": expected true or false, got '" + std::string(v) + "'");
}

std::uint64_t count_for(const std::string& key, std::string_view v) {
    try {
        return parse_count(v);
    } catch (const UsageError& e) {
        throw UsageError(key + ": " + e.what());
    }
}

int small_int(const std::string& key, std::string_view v) {
    const auto n = count_for(key, v);
    if (n > 1'000'000'000ULL) throw UsageError(key + ": value too large");
    return static_cast<int>(n);
}

std::string join(const std::vector<std::string>& xs) {
    std::string s;
    for (const auto& x : xs) s += (s.empty() ? "" : ",") + x;
    return s;
}

const std::vector<std::string> kCompareStrategies{"rl", "optimal", "selfish", "honest", "lead-stubborn"};
const std::vector<std::string> kSimulateStrategies{"honest", "selfish", "lead-stubborn", "policy-file", "qtable-file"};

bool contains(const std::vector<std::string>& xs, const std::string& x) {
    return std::find(xs.begin(), xs.end(), x) != xs.end();
}

}  // namespace

std::uint64_t parse_count(std::string_view text) {
    const double x = to_double("value", text);
    if (x < 0.0) throw UsageError("expected a non-negative count, got '" + std::string(text::trim(text)) + "'");
    if (x != std::floor(x)) throw UsageError("expected an integer, got '" + std::string(text::trim(text)) + "'");
    if (x > 9007199254740992.0) throw UsageError("count too large");
    return static_cast<std::uint64_t>(x);
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (!known_key(key)) throw UsageError("unknown config key '" + key + "'");
    const std::string v(text::trim(value));
    if (key == "alpha") cfg.model.alpha = to_double(key, v);
    else if (key == "gamma") cfg.model.gamma = to_double(key, v);
    else if (key == "l-max") cfg.model.l_max = small_int(key, v);
    else if (key == "beta") cfg.hyper.beta = to_double(key, v);
    else if (key == "lambda") cfg.hyper.lambda = to_double(key, v);
    else if (key == "t-eps") cfg.hyper.t_eps = to_double(key, v);
    else if (key == "exploit-after") {
        if (v == "none" || v.empty()) cfg.hyper.exploit_after.reset();
        else cfg.hyper.exploit_after = count_for(key, v);
    } else if (key == "schedule") cfg.schedule = v;
    else if (key == "backend") {
        try {
            cfg.backend = parse_backend(v);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    } else if (key == "steps") cfg.steps = count_for(key, v);
    else if (key == "t-w") cfg.t_w = count_for(key, v);
    else if (key == "seed") cfg.seed = count_for(key, v);
    else if (key == "out") cfg.out_dir = v;
    else if (key == "strategy") cfg.strategy = v;
    else if (key == "strategies") cfg.strategies = split_list(v);
    else if (key == "seeds") {
        cfg.seeds.clear();
        for (const auto& s : split_list(v)) cfg.seeds.push_back(count_for(key, s));
    } else if (key == "policy-file") cfg.policy_file = v;
    else if (key == "qtable-file") cfg.qtable_file = v;
    else if (key == "checkpoint-every") cfg.checkpoint_every = count_for(key, v);
    else if (key == "resume") cfg.resume = to_bool(key, v);
    else if (key == "n-miners") cfg.n_miners = small_int(key, v);
    else if (key == "p-hash") cfg.p_hash = to_double(key, v);
    else if (key == "search-tol") cfg.search_tol = to_double(key, v);
    else if (key == "jobs") cfg.jobs = static_cast<unsigned>(small_int(key, v));
    cfg.explicit_keys[key] = v;
}

std::vector<std::pair<std::string, std::string>> parse_config_text(std::istream& in, const std::string& origin) {
    std::vector<std::pair<std::string, std::string>> out;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        const auto body = text::trim(std::string_view(line).substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        const auto where = origin + ":" + std::to_string(lineno) + ": ";
        if (eq == std::string_view::npos) throw UsageError(where + "expected 'key = value'");
        std::string key(text::trim(body.substr(0, eq)));
        std::string value(text::trim(body.substr(eq + 1)));
        if (!known_key(key)) throw UsageError(where + "unknown key '" + key + "'");
        if (!seen.insert(key).second) throw UsageError(where + "key '" + key + "' given twice");
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> read_config_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file " + path.string());
    return parse_config_text(in, path.string());
}

ExperimentConfig resolve_config(Mode mode, const std::optional<fs::path>& config_file,
                                const std::vector<std::pair<std::string, std::string>>& flags) {
    ExperimentConfig cfg;
    cfg.mode = mode;
    if (config_file) {
        for (const auto& [k, v] : read_config_file(*config_file)) apply_setting(cfg, k, v);
    }
    for (const auto& [k, v] : flags) apply_setting(cfg, k, v);
    if (!cfg.seed) {
        if (const char* env = std::getenv("FORKBENCH_SEED"); env && *env) {
            try {
                cfg.seed = parse_count(env);
            } catch (const UsageError& e) {
                throw UsageError(std::string("FORKBENCH_SEED: ") + e.what());
            }
        } else {
            cfg.seed = 1;
        }
    }
    if (!cfg.schedule.empty()) {
        std::uint64_t len = 0;
        try {
            len = schedule_length(parse_schedule(cfg.schedule));
        } catch (const std::exception& e) {
            throw UsageError(std::string("schedule: ") + e.what());
        }
        if (cfg.explicit_keys.count("steps") && cfg.steps != len) {
            throw UsageError("steps (" + std::to_string(cfg.steps) + ") disagrees with the schedule length (" +
                             std::to_string(len) + ")");
        }
        cfg.steps = len;
    }
    if (cfg.seeds.empty()) cfg.seeds.push_back(*cfg.seed);
    validate_config(cfg);
    return cfg;
}

std::vector<ScheduleSegment> effective_schedule(const ExperimentConfig& cfg) {
    if (!cfg.schedule.empty()) {
        try {
            return parse_schedule(cfg.schedule);
        } catch (const std::exception& e) {
            throw UsageError(std::string("schedule: ") + e.what());
        }
    }
    if (cfg.steps == 0) return {};
    return {ScheduleSegment{cfg.model.alpha, cfg.model.gamma, cfg.steps}};
}

void validate_config(const ExperimentConfig& cfg) {
    auto check_model = [&](double alpha, double gamma) {
        // the oracle and solver also run at l_max = 1
        const bool tiny_ok = cfg.mode == Mode::Oracle || cfg.mode == Mode::Solve;
        ModelParams p{alpha, gamma, cfg.model.l_max};
        try {
            p.validate(tiny_ok ? 1 : 2);
            if (cfg.backend == Backend::MonteCarlo && cfg.mode != Mode::Solve && cfg.mode != Mode::Oracle) {
                MinerPopulation::from_alpha(alpha, cfg.n_miners, cfg.p_hash);
            }
        } catch (const std::exception& e) {
            throw UsageError(e.what());
        }
    };
    check_model(cfg.model.alpha, cfg.model.gamma);
    if (cfg.model.l_max < 1) throw UsageError("l-max must be positive");
    if (cfg.model.l_max > 2000) throw UsageError("l-max above 2000 is not supported");
    try {
        cfg.hyper.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (!(cfg.search_tol > 0.0 && cfg.search_tol < 0.5)) throw UsageError("search-tol must lie in (0, 0.5)");
    if (cfg.t_w == 0) throw UsageError("t-w must be positive");
    if (cfg.checkpoint_every == 0 || cfg.checkpoint_every % cfg.t_w != 0) {
        throw UsageError("checkpoint-every must be a positive multiple of t-w");
    }
    for (const auto& seg : effective_schedule(cfg)) check_model(seg.alpha, seg.gamma);
    if (cfg.resume && cfg.mode != Mode::Train) throw UsageError("resume only applies to train");

    if (cfg.mode == Mode::Simulate) {
        if (!contains(kSimulateStrategies, cfg.strategy)) {
            throw UsageError("strategy must be one of " + join(kSimulateStrategies) + ", got '" + cfg.strategy + "'");
        }
        if (cfg.strategy == "policy-file" && !fs::is_regular_file(cfg.policy_file)) {
            throw UsageError("policy file not found: '" + cfg.policy_file.string() + "'");
        }
        if (cfg.strategy == "qtable-file" && !fs::is_regular_file(cfg.qtable_file)) {
            throw UsageError("qtable file not found: '" + cfg.qtable_file.string() + "'");
        }
    }
    if (cfg.mode == Mode::Compare) {
        if (cfg.strategies.size() < 2) throw UsageError("compare needs at least two strategies");
        std::set<std::string> seen;
        for (const auto& s : cfg.strategies) {
            if (!contains(kCompareStrategies, s)) {
                throw UsageError("compare strategies must be among " + join(kCompareStrategies) + ", got '" + s + "'");
            }
            if (!seen.insert(s).second) throw UsageError("strategy '" + s + "' listed twice");
        }
        std::set<std::uint64_t> seed_set(cfg.seeds.begin(), cfg.seeds.end());
        if (seed_set.size() != cfg.seeds.size()) throw UsageError("duplicate seeds");
    }
}

void write_config(const ExperimentConfig& cfg, std::ostream& out) {
    std::vector<std::string> seeds;
    for (auto s : cfg.seeds) seeds.push_back(std::to_string(s));
    out << "# forkbench " << to_string(cfg.mode) << " (effective config)\n";
    for (const auto& key : config_keys()) {
        std::string v;
        if (key == "alpha") v = text::format_double(cfg.model.alpha);
        else if (key == "gamma") v = text::format_double(cfg.model.gamma);
        else if (key == "l-max") v = std::to_string(cfg.model.l_max);
        else if (key == "beta") v = text::format_double(cfg.hyper.beta);
        else if (key == "lambda") v = text::format_double(cfg.hyper.lambda);
        else if (key == "t-eps") v = text::format_double(cfg.hyper.t_eps);
        else if (key == "exploit-after") v = cfg.hyper.exploit_after ? std::to_string(*cfg.hyper.exploit_after) : "none";
        else if (key == "schedule") {
            if (cfg.schedule.empty()) continue;
            v = cfg.schedule;
        } else if (key == "backend") v = std::string(to_string(cfg.backend));
        else if (key == "steps") v = std::to_string(cfg.steps);
        else if (key == "t-w") v = std::to_string(cfg.t_w);
        else if (key == "seed") v = std::to_string(cfg.seed.value_or(0));
        else if (key == "out") v = cfg.out_dir.string();
        else if (key == "strategy") v = cfg.strategy;
        else if (key == "strategies") {
            if (cfg.strategies.empty()) continue;
            v = join(cfg.strategies);
        } else if (key == "seeds") v = join(seeds);
        else if (key == "policy-file") {
            if (cfg.policy_file.empty()) continue;
            v = cfg.policy_file.string();
        } else if (key == "qtable-file") {
            if (cfg.qtable_file.empty()) continue;
            v = cfg.qtable_file.string();
        } else if (key == "checkpoint-every") v = std::to_string(cfg.checkpoint_every);
        else if (key == "resume") v = cfg.resume ? "true" : "false";
        else if (key == "n-miners") v = std::to_string(cfg.n_miners);
        else if (key == "p-hash") v = text::format_double(cfg.p_hash);
        else if (key == "search-tol") v = text::format_double(cfg.search_tol);
        else if (key == "jobs") v = std::to_string(cfg.jobs);
        out << key << " = " << v << '\n';
    }
}

std::optional<std::uint64_t> plateau_step(const std::vector<SeriesPoint>& series, double rel_tol, std::size_t windows) {
    if (windows == 0 || series.size() <= windows) return std::nullopt;
    std::size_t run = 0;
    for (std::size_t i = 1; i < series.size(); ++i) {
        const double prev = series[i - 1].rmg;
        const double cur = series[i].rmg;
        const double scale = std::max(std::abs(prev), 1e-12);
        const bool flat = !series[i].empty && !series[i - 1].empty && std::abs(cur - prev) / scale < rel_tol;
        run = flat ? run + 1 : 0;
        if (run >= windows) return series[i].step;
    }
    return std::nullopt;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {

std::string hex64(std::uint64_t x) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << x;
    return os.str();
}

std::string config_text(const ExperimentConfig& cfg) {
    ExperimentConfig c = cfg;
    c.resume = false;
    std::ostringstream os;
    write_config(c, os);
    return os.str();
}

}  // namespace

void write_checkpoint(const Checkpoint& c, const fs::path& path) {
    std::ostringstream body;
    body << "forkbench-checkpoint v1\n";
    body << "step " << c.step << '\n';
    body << "state " << c.env_state.l_a << ' ' << c.env_state.l_h << ' ' << to_string(c.env_state.fork) << '\n';
    body << "rng " << c.rng_state << '\n';
    body << "config " << c.config_text.size() << '\n' << c.config_text;
    body << "qtables " << c.qtables.size() << '\n' << c.qtables;
    body << "series " << c.series.size() << '\n';
    for (const auto& pt : c.series) {
        body << pt.step << ' ' << text::format_double(pt.rmg) << ' ' << text::format_double(pt.alpha) << ' '
             << text::format_double(pt.gamma) << ' ' << (pt.empty ? 1 : 0) << '\n';
    }
    const std::string payload = body.str();
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
        out << payload << "checksum " << hex64(fnv1a64(payload)) << '\n';
        if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
    }
    fs::rename(tmp, path);
}

Checkpoint read_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto bad = [&](const std::string& why) {
        return std::runtime_error("refusing to resume: checkpoint " + path.string() + " is corrupted (" + why + ")");
    };
    const auto mark = all.rfind("checksum ");
    if (mark == std::string::npos || (mark > 0 && all[mark - 1] != '\n')) throw bad("no checksum line");
    const std::string payload = all.substr(0, mark);
    const std::string stored(text::trim(std::string_view(all).substr(mark + 9)));
    if (stored != hex64(fnv1a64(payload))) throw bad("checksum mismatch");

    std::istringstream is(payload);
    Checkpoint c;
    std::string word;
    std::string line;
    std::getline(is, line);
    if (line != "forkbench-checkpoint v1") throw bad("unknown header");
    auto expect = [&](const char* w) {
        if (!(is >> word) || word != w) throw bad(std::string("expected '") + w + "'");
    };
    auto read_blob = [&](const char* w) {
        expect(w);
        std::size_t n = 0;
        if (!(is >> n)) throw bad(std::string("bad size for ") + w);
        is.get();
        std::string blob(n, '\0');
        if (!is.read(blob.data(), static_cast<std::streamsize>(n))) throw bad(std::string("truncated ") + w);
        return blob;
    };
    expect("step");
    if (!(is >> c.step)) throw bad("bad step");
    expect("state");
    std::string fork;
    if (!(is >> c.env_state.l_a >> c.env_state.l_h >> fork)) throw bad("bad state");
    try {
        c.env_state.fork = parse_fork_label(fork);
    } catch (const std::exception&) {
        throw bad("bad fork label");
    }
    expect("rng");
    is.get();
    std::getline(is, c.rng_state);
    c.config_text = read_blob("config");
    c.qtables = read_blob("qtables");
    expect("series");
    std::size_t n = 0;
    if (!(is >> n)) throw bad("bad series length");
    for (std::size_t i = 0; i < n; ++i) {
        SeriesPoint pt;
        std::string rmg, alpha, gamma;
        int empty = 0;
        if (!(is >> pt.step >> rmg >> alpha >> gamma >> empty)) throw bad("truncated series");
        try {
            pt.rmg = text::parse_double(rmg, 0);
            pt.alpha = text::parse_double(alpha, 0);
            pt.gamma = text::parse_double(gamma, 0);
        } catch (const std::exception&) {
            throw bad("bad series value");
        }
        pt.empty = empty != 0;
        c.series.push_back(pt);
    }
    return c;
}

namespace {

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void prepare_out_dir(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    std::ofstream out(cfg.out_dir / "config.txt");
    if (!out) throw std::runtime_error("cannot write into " + cfg.out_dir.string());
    write_config(cfg, out);
}

// Timestamps live only here, so every other output is a pure function of the config.
void write_meta(const ExperimentConfig& cfg, const std::string& started, nlohmann::json extra) {
    nlohmann::json meta;
    meta["command"] = std::string(to_string(cfg.mode));
    meta["started_utc"] = started;
    meta["finished_utc"] = utc_now();
    nlohmann::json config = nlohmann::json::object();
    std::istringstream is(config_text(cfg));
    for (const auto& [k, v] : parse_config_text(is, "config")) config[k] = v;
    config["resume"] = cfg.resume ? "true" : "false";
    meta["config"] = config;
    nlohmann::json rates = nlohmann::json::array();
    auto schedule = effective_schedule(cfg);
    if (schedule.empty()) schedule.push_back({cfg.model.alpha, cfg.model.gamma, 0});
    for (const auto& seg : schedule) {
        nlohmann::json r;
        r["alpha"] = seg.alpha;
        r["gamma"] = seg.gamma;
        r["steps"] = seg.duration;
        if (cfg.backend == Backend::MonteCarlo && cfg.mode != Mode::Solve && cfg.mode != Mode::Oracle) {
            MonteCarloEnvironment env({seg.alpha, seg.gamma, cfg.model.l_max}, cfg.n_miners, cfg.p_hash);
            r["effective_alpha"] = env.params().alpha;
            r["effective_gamma"] = env.effective_gamma();
            r["adversary_miners"] = env.population().n_adversary;
        } else {
            r["effective_alpha"] = seg.alpha;
            r["effective_gamma"] = seg.gamma;
        }
        rates.push_back(r);
    }
    meta["rates"] = rates;
    for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
    std::ofstream out(cfg.out_dir / "meta.json");
    out << meta.dump(2) << '\n';
}

ModelParams first_params(const ExperimentConfig& cfg, const std::vector<ScheduleSegment>& schedule) {
    ModelParams p = cfg.model;
    if (!schedule.empty()) {
        p.alpha = schedule.front().alpha;
        p.gamma = schedule.front().gamma;
    }
    return p;
}

ModelParams last_params(const ExperimentConfig& cfg, const std::vector<ScheduleSegment>& schedule) {
    ModelParams p = cfg.model;
    if (!schedule.empty()) {
        p.alpha = schedule.back().alpha;
        p.gamma = schedule.back().gamma;
    }
    return p;
}

void write_csv_file(const fs::path& path, const std::vector<SeriesPoint>& series, std::string_view strategy,
                    std::uint64_t seed, std::string_view backend) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_series_csv_header(out);
    write_series_csv(out, series, strategy, seed, backend);
}

std::string plateau_text(const std::optional<std::uint64_t>& step) {
    return step ? std::to_string(*step) : std::string("none");
}

std::string qtables_text(const QAgent& agent, const ModelParams& p) {
    std::ostringstream os;
    save_qtables(agent, p, os);
    return os.str();
}

// Which schedule segment holds global step t (t < total).
const ScheduleSegment* segment_at(const std::vector<ScheduleSegment>& schedule, std::uint64_t t) {
    std::uint64_t begin = 0;
    for (const auto& seg : schedule) {
        if (t < begin + seg.duration) return &seg;
        begin += seg.duration;
    }
    return nullptr;
}

}  // namespace

int cmd_solve(const ExperimentConfig& cfg, std::ostream& out) {
    const auto started = utc_now();
    prepare_out_dir(cfg);
    const auto report = find_optimal_policy(cfg.model, cfg.search_tol);
    Policy pol = report.policy;
    save_policy(pol, cfg.out_dir / "policy.txt");
    std::ofstream rep(cfg.out_dir / "solve_report.txt");
    write_solve_report(report, rep);
    write_solve_report(report, out);
    write_meta(cfg, started, {{"rho_star", report.rho_star}});
    return 0;
}

int cmd_train(const ExperimentConfig& cfg, std::ostream& out) {
    const auto started = utc_now();
    prepare_out_dir(cfg);
    const auto schedule = effective_schedule(cfg);
    const std::uint64_t total = schedule_length(schedule);
    const ModelParams p0 = first_params(cfg, schedule);
    const fs::path ckpt_path = cfg.out_dir / "checkpoint.txt";
    const std::string cfg_text = config_text(cfg);

    auto env = make_environment(cfg.backend, p0, cfg.n_miners, cfg.p_hash);
    QAgent agent(cfg.model.l_max, cfg.hyper);
    Rng rng(*cfg.seed);
    std::vector<SeriesPoint> series;
    std::uint64_t start = 0;

    if (cfg.resume) {
        const Checkpoint c = read_checkpoint(ckpt_path);
        if (c.config_text != cfg_text) {
            throw std::runtime_error("refusing to resume: checkpoint " + ckpt_path.string() +
                                     " was written under a different config");
        }
        std::istringstream qs(c.qtables);
        try {
            agent = agent_from_file(load_qtables(qs));
        } catch (const std::exception& e) {
            throw std::runtime_error("refusing to resume: checkpoint tables are corrupted (" + std::string(e.what()) + ")");
        }
        std::istringstream rs(c.rng_state);
        if (!(rs >> rng)) throw std::runtime_error("refusing to resume: checkpoint rng state is corrupted");
        if (c.step > total || c.step % cfg.t_w != 0 || agent.steps() != c.step) {
            throw std::runtime_error("refusing to resume: checkpoint step " + std::to_string(c.step) + " is inconsistent");
        }
        if (const auto* seg = segment_at(schedule, c.step)) env->set_rates(seg->alpha, seg->gamma);
        try {
            env->restore(c.env_state);
        } catch (const std::exception& e) {
            throw std::runtime_error("refusing to resume: checkpoint state is invalid (" + std::string(e.what()) + ")");
        }
        series = c.series;
        start = c.step;
        out << "resumed from step " << start << '\n';
    } else {
        env->reset(rng);
    }

    if (start < total) {
        RunOptions opts;
        opts.t_w = cfg.t_w;
        opts.start_step = start;
        opts.on_window = [&](std::uint64_t step, const SeriesPoint& pt) {
            series.push_back(pt);
            if (step % cfg.checkpoint_every == 0 && step < total) {
                std::ostringstream rs;
                rs << rng;
                write_checkpoint({step, cfg_text, env->state(), rs.str(), qtables_text(agent, env->params()), series},
                                 ckpt_path);
            }
        };
        run_schedule(agent, *env, schedule, opts, rng);
    }

    const ModelParams pf = last_params(cfg, schedule);
    save_qtables(agent, pf, cfg.out_dir / "qtables.txt");
    write_csv_file(cfg.out_dir / "series.csv", series, "rl", *cfg.seed, to_string(cfg.backend));

    nlohmann::json extra;
    out << "steps " << total << '\n';
    out << "windows " << series.size() << '\n';
    if (!series.empty()) {
        out << "final_window_rmg " << text::format_double(series.back().rmg) << '\n';
        extra["final_window_rmg"] = series.back().rmg;
    }
    try {
        const double g = exact_policy_rmg(agent.greedy_policy(pf), pf);
        out << "greedy_policy_rmg " << text::format_double(g) << '\n';
        extra["greedy_policy_rmg"] = g;
    } catch (const SolverError& e) {
        out << "greedy_policy_rmg undefined (" << e.what() << ")\n";
    }
    const auto plateau = plateau_step(series);
    out << "plateau_step_heuristic " << plateau_text(plateau) << '\n';
    extra["plateau_step_heuristic"] = plateau_text(plateau);
    write_meta(cfg, started, extra);
    return 0;
}

namespace {

struct StrategyPlan {
    std::string name;
    std::optional<Policy> policy;      // fixed strategies
    std::optional<QTablePair> frozen;  // qtable-file
    bool learner = false;              // rl
};

StrategyPlan plan_strategy(const ExperimentConfig& cfg, const std::string& name, const ModelParams& p0,
                           const std::optional<Policy>& optimal) {
    StrategyPlan plan{name, std::nullopt, std::nullopt, false};
    if (name == "honest") plan.policy = closed_form_policy(Strategy::Honest, p0);
    else if (name == "selfish") plan.policy = closed_form_policy(Strategy::Selfish, p0);
    else if (name == "lead-stubborn") plan.policy = closed_form_policy(Strategy::LeadStubborn, p0);
    else if (name == "optimal") plan.policy = *optimal;
    else if (name == "rl") plan.learner = true;
    else if (name == "policy-file") {
        Policy pol = load_policy(cfg.policy_file);
        if (pol.l_max() != cfg.model.l_max) {
            throw UsageError("policy file has l_max=" + std::to_string(pol.l_max()) + " but l-max is " +
                             std::to_string(cfg.model.l_max));
        }
        plan.policy = std::move(pol);
    } else if (name == "qtable-file") {
        auto f = load_qtables(cfg.qtable_file);
        if (f.params.l_max != cfg.model.l_max) {
            throw UsageError("qtable file has l_max=" + std::to_string(f.params.l_max) + " but l-max is " +
                             std::to_string(cfg.model.l_max));
        }
        plan.frozen = std::move(f.q);
    }
    return plan;
}

std::vector<SeriesPoint> run_plan(const ExperimentConfig& cfg, const StrategyPlan& plan,
                                  const std::vector<ScheduleSegment>& schedule, std::uint64_t seed) {
    if (schedule.empty()) return {};
    const ModelParams p0 = first_params(cfg, schedule);
    auto env = make_environment(cfg.backend, p0, cfg.n_miners, cfg.p_hash);
    Rng rng(seed);
    env->reset(rng);
    RunOptions opts;
    opts.t_w = cfg.t_w;
    if (plan.learner) {
        QAgent agent(cfg.model.l_max, cfg.hyper);
        return run_schedule(agent, *env, schedule, opts, rng).series;
    }
    if (plan.frozen) {
        GreedyQController c(*plan.frozen);
        return run_schedule(c, *env, schedule, opts, rng).series;
    }
    PolicyController c(*plan.policy);
    return run_schedule(c, *env, schedule, opts, rng).series;
}

}  // namespace

int cmd_simulate(const ExperimentConfig& cfg, std::ostream& out) {
    const auto started = utc_now();
    prepare_out_dir(cfg);
    const auto schedule = effective_schedule(cfg);
    const ModelParams p0 = first_params(cfg, schedule);
    const auto plan = plan_strategy(cfg, cfg.strategy, p0, std::nullopt);
    const auto series = run_plan(cfg, plan, schedule, *cfg.seed);
    write_csv_file(cfg.out_dir / "series.csv", series, cfg.strategy, *cfg.seed, to_string(cfg.backend));
    nlohmann::json extra;
    out << "strategy " << cfg.strategy << '\n' << "windows " << series.size() << '\n';
    if (!series.empty()) {
        const double mean = tail_mean_rmg(series, series.size());
        out << "mean_rmg " << text::format_double(mean) << '\n';
        out << "final_window_rmg " << text::format_double(series.back().rmg) << '\n';
        extra["mean_rmg"] = mean;
    }
    write_meta(cfg, started, extra);
    return 0;
}

int cmd_compare(const ExperimentConfig& cfg, std::ostream& out) {
    const auto started = utc_now();
    prepare_out_dir(cfg);
    const auto schedule = effective_schedule(cfg);
    const ModelParams p0 = first_params(cfg, schedule);
    const ModelParams pf = last_params(cfg, schedule);

    std::optional<Policy> optimal;
    if (contains(cfg.strategies, "optimal")) {
        optimal = find_optimal_policy(p0, cfg.search_tol).policy;
    }
    std::vector<StrategyPlan> plans;
    for (const auto& s : cfg.strategies) plans.push_back(plan_strategy(cfg, s, p0, optimal));

    struct Job {
        std::size_t plan = 0;
        std::uint64_t seed = 0;
        std::vector<SeriesPoint> series;
        std::exception_ptr error;
    };
    std::vector<Job> jobs;
    for (std::size_t i = 0; i < plans.size(); ++i) {
        for (auto seed : cfg.seeds) jobs.push_back({i, seed, {}, nullptr});
    }
    // Workers share nothing but read-only plans; results land in their own slots.
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) {
            try {
                jobs[j].series = run_plan(cfg, plans[jobs[j].plan], schedule, jobs[j].seed);
            } catch (...) {
                jobs[j].error = std::current_exception();
            }
        }
    };
    unsigned n_threads = cfg.jobs ? cfg.jobs : std::max(1u, std::thread::hardware_concurrency());
    n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, jobs.size()));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    for (const auto& j : jobs) {
        if (j.error) std::rethrow_exception(j.error);
    }

    // deterministic merge: listed strategy order, then seed, then step
    std::sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) {
        return std::tie(a.plan, a.seed) < std::tie(b.plan, b.seed);
    });
    {
        std::ofstream csv(cfg.out_dir / "compare.csv");
        write_series_csv_header(csv);
        for (const auto& j : jobs) {
            write_series_csv(csv, j.series, plans[j.plan].name, j.seed, to_string(cfg.backend));
        }
    }

    const double bound = pf.alpha / (1.0 - pf.alpha);
    std::vector<CompareRow> rows;
    for (std::size_t i = 0; i < plans.size(); ++i) {
        CompareRow row;
        row.strategy = plans[i].name;
        row.bound = bound;
        double sum = 0.0;
        bool all_plateau = true;
        std::uint64_t latest = 0;
        for (const auto& j : jobs) {
            if (j.plan != i) continue;
            ++row.seeds;
            if (!j.series.empty()) sum += j.series.back().rmg;
            const auto pl = plateau_step(j.series);
            if (pl) latest = std::max(latest, *pl);
            else all_plateau = false;
        }
        row.final_rmg = row.seeds ? sum / static_cast<double>(row.seeds) : 0.0;
        row.gap = bound - row.final_rmg;
        if (all_plateau && row.seeds) row.plateau = latest;
        rows.push_back(row);
    }
    std::ostringstream table;
    table << "strategy seeds final_window_rmg bound gap_to_bound plateau_step_heuristic\n";
    for (const auto& r : rows) {
        table << r.strategy << ' ' << r.seeds << ' ' << std::fixed << std::setprecision(6) << r.final_rmg << ' '
              << r.bound << ' ' << r.gap << ' ' << plateau_text(r.plateau) << '\n';
        table.unsetf(std::ios::fixed);
    }
    std::ofstream(cfg.out_dir / "summary.txt") << table.str();
    out << table.str();
    write_meta(cfg, started, {{"jobs", jobs.size()}, {"threads", n_threads}});
    return 0;
}

int cmd_oracle(const ExperimentConfig& cfg, std::ostream& out) {
    const auto started = utc_now();
    prepare_out_dir(cfg);
    const auto report = enumerate_policies_oracle(cfg.model);
    std::ostringstream os;
    os << "best_rmg " << text::format_double(report.best_rmg) << '\n';
    os << "enumerated " << report.enumerated << '\n';
    os << "policy\n";
    for (const auto& [s, a] : report.best.entries()) {
        os << s.l_a << ' ' << s.l_h << ' ' << to_string(s.fork) << ' ' << to_string(a) << '\n';
    }
    std::ofstream(cfg.out_dir / "oracle_report.txt") << os.str();
    Policy best = report.best;
    best.alpha = cfg.model.alpha;
    best.gamma = cfg.model.gamma;
    save_policy(best, cfg.out_dir / "oracle_policy.txt");
    out << os.str();
    write_meta(cfg, started, {{"best_rmg", report.best_rmg}, {"enumerated", report.enumerated}});
    return 0;
}

int run_command(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        switch (cfg.mode) {
            case Mode::Solve: return cmd_solve(cfg, out);
            case Mode::Train: return cmd_train(cfg, out);
            case Mode::Simulate: return cmd_simulate(cfg, out);
            case Mode::Compare: return cmd_compare(cfg, out);
            case Mode::Oracle: return cmd_oracle(cfg, out);
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace forkbench
