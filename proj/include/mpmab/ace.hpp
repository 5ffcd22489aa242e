#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "mpmab/core.hpp"
#include "mpmab/rng.hpp"

namespace mpmab {

enum class EpsilonMode { KnownM, UnknownM };

// Probe probability for the two operating modes. With m known the schedule is
// min{ sqrt(1141 m^3 ln T / 2T), 1/K, 1/10 }; when m is unknown, m is replaced
// by K/2 and the denominator becomes 16T.
inline double compute_epsilon(int m, int K, std::int64_t T, EpsilonMode mode) {
    if (T < 3 || K < 2 || m < 1) throw ConfigError("compute_epsilon needs T >= 3, K >= 2, m >= 1");
    const double lnT = std::log(static_cast<double>(T));
    const double root =
        mode == EpsilonMode::KnownM
            ? std::sqrt(1141.0 * m * m * m * lnT / (2.0 * static_cast<double>(T)))
            : std::sqrt(1141.0 * static_cast<double>(K) * K * K * lnT /
                        (16.0 * static_cast<double>(T)));
    return std::min({root, 1.0 / K, 0.1});
}

struct QueueLengths {
    int L_p = 0;
    int L_q = 0;
    int thr_p = 0;  // ceil(0.85 L_p)
    int thr_q = 0;  // ceil(0.142 L_q)
};

inline QueueLengths queue_lengths(std::int64_t T) {
    if (T < 3) throw ConfigError("queue_lengths needs T >= 3");
    const double lnT = std::log(static_cast<double>(T));
    QueueLengths q;
    q.L_p = static_cast<int>(std::ceil(866.0 * lnT));
    q.L_q = static_cast<int>(std::ceil(570.0 * lnT));
    q.thr_p = static_cast<int>(std::ceil(0.85 * q.L_p));
    q.thr_q = static_cast<int>(std::ceil(0.142 * q.L_q));
    return q;
}

// Fixed-capacity FIFO of bits with an incrementally maintained popcount.
// Pushing at capacity evicts the oldest bit.
class BoundedBitQueue {
public:
    explicit BoundedBitQueue(int capacity) : capacity_(capacity) {
        if (capacity < 1) throw ConfigError("queue capacity must be >= 1");
        words_.resize((static_cast<std::size_t>(capacity) + 63) / 64, 0);
    }

    void push(bool bit) {
        if (size_ == capacity_) {
            sum_ -= get(head_);
            set(head_, bit);
            head_ = (head_ + 1) % capacity_;
        } else {
            set((head_ + size_) % capacity_, bit);
            ++size_;
        }
        sum_ += bit ? 1 : 0;
    }

    void reset() {
        std::fill(words_.begin(), words_.end(), 0);
        head_ = 0;
        size_ = 0;
        sum_ = 0;
    }

    int running_sum() const { return sum_; }
    int size() const { return size_; }
    int capacity() const { return capacity_; }

    // O(capacity) recount; the incremental sum must always agree with this.
    int recount() const {
        int total = 0;
        for (int i = 0; i < size_; ++i) total += get((head_ + i) % capacity_) ? 1 : 0;
        return total;
    }

private:
    bool get(int slot) const {
        return (words_[static_cast<std::size_t>(slot) / 64] >> (slot % 64)) & 1u;
    }
    void set(int slot, bool bit) {
        const std::uint64_t mask = std::uint64_t{1} << (slot % 64);
        if (bit)
            words_[static_cast<std::size_t>(slot) / 64] |= mask;
        else
            words_[static_cast<std::size_t>(slot) / 64] &= ~mask;
    }

    std::vector<std::uint64_t> words_;
    int capacity_;
    int head_ = 0;
    int size_ = 0;
    int sum_ = 0;
};

struct ArmStats {
    std::int64_t pulls = 0;   // successful (non-collided) pulls only
    double reward_sum = 0.0;

    double mean() const { return reward_sum / static_cast<double>(pulls); }
};

inline double confidence_radius(double log_T, std::int64_t pulls) {
    if (pulls <= 0) return std::numeric_limits<double>::infinity();
    return std::sqrt(6.0 * log_T / static_cast<double>(pulls));
}

inline double ucb_value(const ArmStats& s, double log_T) {
    if (s.pulls <= 0) return std::numeric_limits<double>::infinity();
    return s.mean() + confidence_radius(log_T, s.pulls);
}

inline double lcb_value(const ArmStats& s, double log_T) {
    if (s.pulls <= 0) return -std::numeric_limits<double>::infinity();
    return s.mean() - confidence_radius(log_T, s.pulls);
}

enum class Phase { Exploration, Exploitation };

struct AceParams {
    int num_arms = 0;       // K
    int occupancy_cap = 0;  // m when known, floor(K/2) otherwise
    double epsilon = 0.0;
    QueueLengths queues;
    double log_T = 0.0;

    static AceParams standard(int K, int m, std::int64_t T, EpsilonMode mode) {
        AceParams p;
        p.num_arms = K;
        p.occupancy_cap = mode == EpsilonMode::KnownM ? m : K / 2;
        p.epsilon = compute_epsilon(m, K, T, mode);
        p.queues = queue_lengths(T);
        p.log_T = std::log(static_cast<double>(T));
        return p;
    }
};

struct DoublePull {
    int first = 0;
    int second = 0;
};

struct ObserveReport {
    std::vector<int> added;    // arms newly marked occupied
    std::vector<int> removed;  // arms released from the occupied set
    bool entered_exploitation = false;
    bool returned_to_exploration = false;
    int exploit_arm = 0;  // set when entered_exploitation

    bool any() const {
        return entered_exploitation || returned_to_exploration || !added.empty() ||
               !removed.empty();
    }
};

// One player's decentralized state machine. A round is a pair of pulls chosen
// by double_selection; the observations come back through observe_pair (or
// observe_truncated when the activity window cuts the pair short).
class AceState {
public:
    explicit AceState(const AceParams& params) : params_(params) {
        if (params.num_arms < 2) throw ConfigError("ACE needs K >= 2");
        if (params.epsilon <= 0.0 || params.epsilon >= 1.0)
            throw ConfigError("epsilon must lie in (0,1)");
        occupied_.assign(static_cast<std::size_t>(params.num_arms) + 1, 0);
        stats_.assign(static_cast<std::size_t>(params.num_arms) + 1, ArmStats{});
        p_queues_.reserve(static_cast<std::size_t>(params.num_arms) + 1);
        q_queues_.reserve(static_cast<std::size_t>(params.num_arms) + 1);
        for (int k = 0; k <= params.num_arms; ++k) {
            p_queues_.emplace_back(params.queues.L_p);
            q_queues_.emplace_back(params.queues.L_q);
        }
    }

    DoublePull double_selection(RngStream& rng) {
        const bool probe = rng.bernoulli(params_.epsilon);
        DoublePull out;
        if (phase_ == Phase::Exploration) {
            if (!correction_) {
                out.first = sample_unoccupied(rng);
                out.second = (probe && occupied_count_ > 0) ? sample_occupied(rng) : out.first;
            } else {
                out.first = sample_occupied(rng);
                out.second = sample_occupied(rng);
            }
        } else {
            out.first = exploit_arm_;
            out.second = (probe && occupied_count_ > 0) ? sample_occupied(rng) : out.first;
        }
        return out;
    }

    // Feedback for a complete round, applied in the order of the main loop:
    // release-probe bits, exploration statistics and occupancy bits, occupancy
    // threshold, release threshold, and finally the exploitation switch.
    ObserveReport observe_pair(int k1, bool collided1, double reward1, int k2, bool collided2,
                               double reward2) {
        ObserveReport report;

        // Probe feedback for arms currently believed occupied.
        if (occupied_[static_cast<std::size_t>(k1)]) q_queues_[static_cast<std::size_t>(k1)].push(!collided1);
        if (occupied_[static_cast<std::size_t>(k2)]) q_queues_[static_cast<std::size_t>(k2)].push(!collided2);

        const bool exploring = phase_ == Phase::Exploration;
        if (exploring) {
            if (!collided1 && !occupied_[static_cast<std::size_t>(k1)]) record_reward(k1, reward1);
            if (!collided2 && !occupied_[static_cast<std::size_t>(k2)]) record_reward(k2, reward2);
            if (k1 == k2) p_queues_[static_cast<std::size_t>(k1)].push(collided1 && collided2);

            // Too many paired collisions: someone is exploiting that arm.
            for (int k = 1; k <= params_.num_arms; ++k) {
                if (occupied_[static_cast<std::size_t>(k)]) continue;
                if (p_queues_[static_cast<std::size_t>(k)].running_sum() >= params_.queues.thr_p) {
                    occupied_[static_cast<std::size_t>(k)] = 1;
                    ++occupied_count_;
                    p_queues_[static_cast<std::size_t>(k)].reset();
                    report.added.push_back(k);
                    if (occupied_count_ > params_.occupancy_cap - 1) correction_ = true;
                }
            }
        }

        // Enough collision-free probes: the arm has been released.
        for (int k = 1; k <= params_.num_arms; ++k) {
            if (!occupied_[static_cast<std::size_t>(k)]) continue;
            if (q_queues_[static_cast<std::size_t>(k)].running_sum() < params_.queues.thr_q) continue;
            occupied_[static_cast<std::size_t>(k)] = 0;
            --occupied_count_;
            q_queues_[static_cast<std::size_t>(k)].reset();
            report.removed.push_back(k);
            if (phase_ == Phase::Exploration) {
                if (occupied_count_ < params_.occupancy_cap) correction_ = false;
            } else if (lcb(exploit_arm_) < ucb(k)) {
                exploit_arm_ = 0;
                phase_ = Phase::Exploration;
                report.returned_to_exploration = true;
            }
        }

        // Switch to exploitation once a doubly collision-free arm dominates
        // every other free arm.
        if (exploring && phase_ == Phase::Exploration && !correction_ && k1 == k2 &&
            !collided1 && !collided2 && !occupied_[static_cast<std::size_t>(k1)] &&
            dominates_free_arms(k1)) {
            exploit_arm_ = k1;
            phase_ = Phase::Exploitation;
            report.entered_exploitation = true;
            report.exploit_arm = k1;
        }
        return report;
    }

    // Single-step fallback for a round cut short at the end of the activity
    // window: only the first pull's per-step updates apply, none of the
    // pair-dependent logic.
    void observe_truncated(int k1, bool collided1, double reward1) {
        if (occupied_[static_cast<std::size_t>(k1)]) q_queues_[static_cast<std::size_t>(k1)].push(!collided1);
        if (phase_ == Phase::Exploration && !collided1 && !occupied_[static_cast<std::size_t>(k1)])
            record_reward(k1, reward1);
    }

    double ucb(int k) const { return ucb_value(stats_[static_cast<std::size_t>(k)], params_.log_T); }
    double lcb(int k) const { return lcb_value(stats_[static_cast<std::size_t>(k)], params_.log_T); }

    Phase phase() const { return phase_; }
    bool correction() const { return correction_; }
    int exploit_arm() const { return exploit_arm_; }
    int occupied_count() const { return occupied_count_; }
    bool is_occupied(int k) const { return occupied_[static_cast<std::size_t>(k)] != 0; }
    std::vector<int> occupied_arms() const {
        std::vector<int> out;
        for (int k = 1; k <= params_.num_arms; ++k)
            if (occupied_[static_cast<std::size_t>(k)]) out.push_back(k);
        return out;
    }
    const ArmStats& stats(int k) const { return stats_[static_cast<std::size_t>(k)]; }
    const BoundedBitQueue& p_queue(int k) const { return p_queues_[static_cast<std::size_t>(k)]; }
    const BoundedBitQueue& q_queue(int k) const { return q_queues_[static_cast<std::size_t>(k)]; }
    const AceParams& params() const { return params_; }

private:
    void record_reward(int k, double reward) {
        auto& s = stats_[static_cast<std::size_t>(k)];
        ++s.pulls;
        s.reward_sum += reward;
    }

    int sample_unoccupied(RngStream& rng) {
        const int free_count = params_.num_arms - occupied_count_;
        if (free_count <= 0) throw std::logic_error("no unoccupied arm to explore");
        int index = rng.uniform_int(free_count);
        for (int k = 1; k <= params_.num_arms; ++k) {
            if (occupied_[static_cast<std::size_t>(k)]) continue;
            if (index-- == 0) return k;
        }
        throw std::logic_error("unoccupied sampling fell through");
    }

    int sample_occupied(RngStream& rng) {
        if (occupied_count_ <= 0) throw std::logic_error("occupied set is empty");
        int index = rng.uniform_int(occupied_count_);
        for (int k = 1; k <= params_.num_arms; ++k) {
            if (!occupied_[static_cast<std::size_t>(k)]) continue;
            if (index-- == 0) return k;
        }
        throw std::logic_error("occupied sampling fell through");
    }

    bool dominates_free_arms(int k) const {
        const double lo = lcb(k);
        for (int other = 1; other <= params_.num_arms; ++other) {
            if (other == k || occupied_[static_cast<std::size_t>(other)]) continue;
            if (!(lo >= ucb(other))) return false;
        }
        return true;
    }

    AceParams params_;
    Phase phase_ = Phase::Exploration;
    bool correction_ = false;
    int exploit_arm_ = 0;
    int occupied_count_ = 0;
    std::vector<std::uint8_t> occupied_;
    std::vector<ArmStats> stats_;
    std::vector<BoundedBitQueue> p_queues_;
    std::vector<BoundedBitQueue> q_queues_;
};

}  // namespace mpmab
