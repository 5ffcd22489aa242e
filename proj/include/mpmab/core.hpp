#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mpmab/rng.hpp"

namespace mpmab {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Dist { Gaussian, Bernoulli };

struct ArmSpec {
    double mean = 0.0;
    Dist dist = Dist::Gaussian;
    double sigma = 0.0;  // Gaussian only
};

// Shared stochastic environment: K arms with strictly decreasing means.
// Arms are 1-indexed throughout, matching the usual bandit convention.
class BanditEnv {
public:
    explicit BanditEnv(std::vector<ArmSpec> arms) : arms_(std::move(arms)) {
        if (arms_.size() < 2) throw ConfigError("environment needs at least 2 arms");
        for (std::size_t i = 0; i < arms_.size(); ++i) {
            const auto& a = arms_[i];
            if (!std::isfinite(a.mean)) throw ConfigError("arm mean must be finite");
            if (a.dist == Dist::Bernoulli && (a.mean < 0.0 || a.mean > 1.0))
                throw ConfigError("Bernoulli arm mean must lie in [0,1]");
            if (a.dist == Dist::Gaussian && a.sigma < 0.0)
                throw ConfigError("Gaussian sigma must be >= 0");
            if (i > 0 && !(arms_[i - 1].mean > a.mean))
                throw ConfigError("arm means must be strictly decreasing");
        }
        prefix_.resize(arms_.size() + 1, 0.0);
        for (std::size_t k = 0; k < arms_.size(); ++k)
            prefix_[k + 1] = prefix_[k] + arms_[k].mean;
    }

    int num_arms() const { return static_cast<int>(arms_.size()); }
    const ArmSpec& arm(int k) const { return arms_[static_cast<std::size_t>(k - 1)]; }
    double mean(int k) const { return arm(k).mean; }

    // Sum of the m largest means (the centralized per-step optimum).
    double top_mean_sum(int m) const { return prefix_[static_cast<std::size_t>(m)]; }

    // min_{k<=m}(mu_k - mu_{k+1}); recomputed on demand, never cached.
    double min_gap(int m) const {
        if (m < 1 || m >= num_arms()) throw ConfigError("min_gap requires 1 <= m < K");
        double g = std::numeric_limits<double>::infinity();
        for (int k = 1; k <= m; ++k) g = std::min(g, mean(k) - mean(k + 1));
        return g;
    }

    // The ladder used in the experiments: mu_K = mu_min, adjacent gap fixed.
    static BanditEnv gaussian_ladder(int K, double mu_min, double gap, double sigma) {
        std::vector<ArmSpec> arms;
        arms.reserve(static_cast<std::size_t>(K));
        for (int k = 1; k <= K; ++k)
            arms.push_back({mu_min + gap * (K - k), Dist::Gaussian, sigma});
        return BanditEnv(std::move(arms));
    }

    static BanditEnv from_json(const nlohmann::json& j);

private:
    std::vector<ArmSpec> arms_;
    std::vector<double> prefix_;
};

struct ActivityWindow {
    std::int64_t start = 1;
    std::int64_t end = 1;
};

// Per-player activity intervals, inclusive on both ends and 1-indexed.
class Schedule {
public:
    Schedule(std::vector<ActivityWindow> entries, std::int64_t horizon)
        : entries_(std::move(entries)), horizon_(horizon) {
        if (entries_.empty()) throw ConfigError("schedule needs at least one player");
        if (horizon_ < 1) throw ConfigError("horizon must be >= 1");
    }

    int num_players() const { return static_cast<int>(entries_.size()); }
    std::int64_t horizon() const { return horizon_; }
    const ActivityWindow& window(int player) const {
        return entries_[static_cast<std::size_t>(player - 1)];
    }

    bool is_active(int player, std::int64_t t) const {
        const auto& w = window(player);
        return w.start <= t && t <= w.end;
    }

    std::vector<int> active_players(std::int64_t t) const {
        std::vector<int> out;
        for (int j = 1; j <= num_players(); ++j)
            if (is_active(j, t)) out.push_back(j);
        return out;
    }

    int active_count(std::int64_t t) const {
        int n = 0;
        for (int j = 1; j <= num_players(); ++j) n += is_active(j, t) ? 1 : 0;
        return n;
    }

    // max_t m_t via an event sweep.
    int max_active() const {
        std::vector<std::pair<std::int64_t, int>> events;
        events.reserve(entries_.size() * 2);
        for (const auto& w : entries_) {
            events.emplace_back(w.start, +1);
            events.emplace_back(w.end + 1, -1);
        }
        std::sort(events.begin(), events.end());
        int cur = 0, best = 0;
        for (const auto& [t, d] : events) {
            cur += d;
            best = std::max(best, cur);
        }
        return best;
    }

    void save_csv(const std::filesystem::path& path) const;
    static Schedule load_csv(const std::filesystem::path& path, std::int64_t horizon);

private:
    std::vector<ActivityWindow> entries_;
    std::int64_t horizon_;
};

inline std::string format_double(double v) {
    char buf[40];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

inline std::string format_int(std::int64_t v) {
    char buf[24];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

struct ValidationReport {
    std::vector<std::string> errors;
    std::vector<std::string> warnings;

    bool ok() const { return errors.empty(); }
    std::string to_string() const {
        std::string out;
        for (const auto& e : errors) out += "error: " + e + "\n";
        for (const auto& w : warnings) out += "warning: " + w + "\n";
        return out;
    }
};

// Checks the model assumptions: strictly decreasing means (guaranteed by
// construction but re-verified), intervals inside [1, T], and the active
// player cap m_t <= m <= floor(K/2). Means above 1 only warn so that the
// large-K experiment ladders run unchanged.
inline ValidationReport validate(const BanditEnv& env, const Schedule& sched, int m) {
    ValidationReport rep;
    for (int k = 1; k + 1 <= env.num_arms(); ++k) {
        if (!(env.mean(k) > env.mean(k + 1))) {
            rep.errors.push_back("arm means not strictly decreasing at arm " + std::to_string(k));
            break;
        }
    }
    for (int j = 1; j <= sched.num_players(); ++j) {
        const auto& w = sched.window(j);
        if (w.start < 1 || w.start > w.end || w.end > sched.horizon())
            rep.errors.push_back("player " + std::to_string(j) + " window [" +
                                 std::to_string(w.start) + "," + std::to_string(w.end) +
                                 "] not inside [1," + std::to_string(sched.horizon()) + "]");
    }
    const int peak = sched.max_active();
    if (peak > m)
        rep.errors.push_back("max active players " + std::to_string(peak) + " exceeds m = " +
                             std::to_string(m));
    if (m > env.num_arms() / 2)
        rep.errors.push_back("m = " + std::to_string(m) + " exceeds K/2 = " +
                             std::to_string(env.num_arms() / 2));
    if (m < 1) rep.errors.push_back("m must be >= 1");
    for (int k = 1; k <= env.num_arms(); ++k) {
        if (env.mean(k) > 1.0) {
            rep.warnings.push_back("arm " + std::to_string(k) + " mean " +
                                   format_double(env.mean(k)) + " exceeds 1");
        }
    }
    return rep;
}

// Reward source keyed by (step, arm): the draw for arm k at step t is a pure
// function of (seed, t, k). Collided pulls therefore consume nothing, and two
// runs with the same seed see identical reward noise regardless of policy.
class EnvSampler {
public:
    EnvSampler(const BanditEnv& env, std::uint64_t seed) : env_(&env), seed_(seed) {}

    double reward(std::int64_t t, int arm) const {
        const auto& spec = env_->arm(arm);
        const std::uint64_t index = static_cast<std::uint64_t>(t - 1) *
                                        static_cast<std::uint64_t>(env_->num_arms()) +
                                    static_cast<std::uint64_t>(arm - 1);
        const auto w = Philox4x32::words(seed_, kEnvStream, index);
        if (spec.dist == Dist::Bernoulli)
            return u64_to_double(w[0]) < spec.mean ? 1.0 : 0.0;
        const double u1 = u64_to_open_double(w[0]);
        const double u2 = u64_to_double(w[1]);
        const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
        return spec.mean + spec.sigma * z;
    }

private:
    const BanditEnv* env_;
    std::uint64_t seed_;
};

struct PlayerPull {
    int player = 0;
    int arm = 0;  // 0 means inactive in serialized views; entries here are active
    bool collided = false;
    double reward = 0.0;
};

struct StepOutcome {
    std::vector<PlayerPull> pulls;  // one entry per active player, ascending id
};

// Collision semantics: every player that shares an arm with someone else this
// step collides and earns zero; everyone else draws a fresh reward.
inline StepOutcome resolve_step(const BanditEnv& env,
                                const std::vector<std::pair<int, int>>& choices,
                                const EnvSampler& rewards, std::int64_t t) {
    StepOutcome out;
    out.pulls.reserve(choices.size());
    std::vector<int> count(static_cast<std::size_t>(env.num_arms()) + 1, 0);
    for (const auto& [player, arm] : choices) {
        if (arm < 1 || arm > env.num_arms())
            throw ConfigError("arm id " + std::to_string(arm) + " out of range for player " +
                              std::to_string(player));
        ++count[static_cast<std::size_t>(arm)];
    }
    for (const auto& [player, arm] : choices) {
        const bool collided = count[static_cast<std::size_t>(arm)] >= 2;
        out.pulls.push_back(
            {player, arm, collided, collided ? 0.0 : rewards.reward(t, arm)});
    }
    return out;
}

// Expected pseudo-regret of one step: the top-m_t means minus the means of
// the distinct successfully held arms.
inline double step_regret(const BanditEnv& env, int m_t, const std::vector<int>& success_arms) {
    double captured = 0.0;
    for (int arm : success_arms) captured += env.mean(arm);
    return env.top_mean_sum(m_t) - captured;
}

// ---- serialization helpers ----

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void Schedule::save_csv(const std::filesystem::path& path) const {
    std::string out = "player,start,end\n";
    for (int j = 1; j <= num_players(); ++j) {
        const auto& w = window(j);
        out += format_int(j) + "," + format_int(w.start) + "," + format_int(w.end) + "\n";
    }
    write_text_file(path, out);
}

inline Schedule Schedule::load_csv(const std::filesystem::path& path, std::int64_t horizon) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || (line != "player,start,end" && line != "player,start,end\r"))
        throw IoError("schedule file " + path.string() + " must start with 'player,start,end'");
    std::vector<std::pair<int, ActivityWindow>> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        std::int64_t vals[3];
        for (int i = 0; i < 3; ++i) {
            if (!std::getline(ls, field, ',')) throw IoError("bad schedule row: " + line);
            vals[i] = std::stoll(field);
        }
        rows.emplace_back(static_cast<int>(vals[0]), ActivityWindow{vals[1], vals[2]});
    }
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<ActivityWindow> entries;
    entries.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].first != static_cast<int>(i) + 1)
            throw IoError("schedule file must cover players 1..M exactly once");
        entries.push_back(rows[i].second);
    }
    return Schedule(std::move(entries), horizon);
}

inline BanditEnv BanditEnv::from_json(const nlohmann::json& j) {
    Dist dist = Dist::Gaussian;
    if (j.contains("dist")) {
        const std::string d = j.at("dist").get<std::string>();
        if (d == "gaussian")
            dist = Dist::Gaussian;
        else if (d == "bernoulli")
            dist = Dist::Bernoulli;
        else
            throw ConfigError("unknown dist '" + d + "'");
    }
    const double sigma = j.value("sigma", 0.5);
    if (j.contains("means")) {
        std::vector<ArmSpec> arms;
        for (const auto& v : j.at("means"))
            arms.push_back({v.get<double>(), dist, dist == Dist::Gaussian ? sigma : 0.0});
        return BanditEnv(std::move(arms));
    }
    const int K = j.at("K").get<int>();
    const double mu_min = j.value("mu_min", 0.1);
    const double gap = j.value("gap", 0.05);
    if (dist == Dist::Bernoulli) {
        std::vector<ArmSpec> arms;
        for (int k = 1; k <= K; ++k) arms.push_back({mu_min + gap * (K - k), Dist::Bernoulli, 0.0});
        return BanditEnv(std::move(arms));
    }
    return gaussian_ladder(K, mu_min, gap, sigma);
}

}  // namespace mpmab
