#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "rlalign/env.hpp"
#include "rlalign/errors.hpp"
#include "rlalign/neural.hpp"

namespace rlalign {

enum class Variant { Dqn, Double, Dueling, DoubleDueling };

const char* to_string(Variant v) noexcept;
Variant parse_variant(std::string_view name);
bool uses_double_target(Variant v) noexcept;
bool uses_dueling_head(Variant v) noexcept;

// Fixed-capacity FIFO ring. Sampling draws distinct slots uniformly.
template <class T>
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity)
    {
        if (capacity == 0) throw ConfigError("replay capacity must be positive");
        items_.reserve(std::min<std::size_t>(capacity, 1u << 16));
    }

    void push(T item)
    {
        if (items_.size() < capacity_) {
            items_.push_back(std::move(item));
        } else {
            items_[cursor_] = std::move(item);
        }
        cursor_ = (cursor_ + 1) % capacity_;
    }

    std::size_t size() const noexcept { return items_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    bool full() const noexcept { return items_.size() == capacity_; }

    // Insertion order, oldest first.
    const T& at_age(std::size_t i) const
    {
        if (i >= items_.size()) throw BoundsError("replay index out of range");
        const std::size_t start = full() ? cursor_ : 0;
        return items_[(start + i) % capacity_];
    }

    // Floyd's algorithm: k distinct indices with k draws.
    std::vector<std::size_t> sample_indices(std::size_t k, std::mt19937_64& rng) const
    {
        const std::size_t n = items_.size();
        if (k > n) throw StateError("replay holds fewer records than the requested batch");
        std::vector<std::size_t> picked;
        picked.reserve(k);
        std::unordered_set<std::size_t> seen;
        seen.reserve(k * 2);
        for (std::size_t j = n - k; j < n; ++j) {
            std::uniform_int_distribution<std::size_t> d(0, j);
            const std::size_t t = d(rng);
            const std::size_t v = seen.count(t) ? j : t;
            seen.insert(v);
            picked.push_back(v);
        }
        return picked;
    }

    std::vector<const T*> sample(std::size_t k, std::mt19937_64& rng) const
    {
        std::vector<const T*> out;
        for (std::size_t i : sample_indices(k, rng)) out.push_back(&items_[i]);
        return out;
    }

    const T& slot(std::size_t i) const { return items_.at(i); }

private:
    std::size_t capacity_;
    std::size_t cursor_ = 0;
    std::vector<T> items_;
};

struct Transition {
    Observation state;
    int action = 0;
    float reward = 0.0f;
    Observation next_state;
    bool terminal = false;
};

// Piecewise-linear exploration rate over (possibly fractional) epochs.
struct ExplorationSchedule {
    double start = 1.0;
    double mid = 0.1;
    double mid_epoch = 20.0;
    double end = 0.01;
    double end_epoch = 100.0;

    void validate() const;
    double value(double epoch) const;
};

struct AgentConfig {
    Variant variant = Variant::Dueling;
    RewardMode reward_mode = RewardMode::Unsupervised;
    // Dueling combination used by dueling variants.
    nn::HeadKind dueling_head = nn::HeadKind::Dueling;
    double gamma = 0.9;
    int batch_size = 64;
    double lr = 1e-3;
    int target_sync_every = 2500;
    int steps_per_epoch = 2000;
    int epochs = 30;
    int warmup = 5000;
    int replay_capacity = 100000;
    // Gradient update every this many environment steps.
    int train_every = 1;
    std::uint64_t seed = 1;
    ExplorationSchedule schedule;
    nn::AdamConfig adam;

    void validate() const;
    nn::HeadKind head() const noexcept;
};

// Lowest-index argmax over `allowed` (all actions when empty).
int greedy_action(std::span<const float> q, std::span<const int> allowed = {});

// Epsilon-greedy. One uniform draw decides exploration; a second picks the
// random action only when exploring.
int select_action(std::span<const float> q, double eps, std::span<const int> allowed, std::mt19937_64& rng);
int select_action(const nn::QNetwork<float>& net, const Observation& obs, double eps,
                  std::span<const int> allowed, std::mt19937_64& rng);

double td_target(Variant variant, std::span<const float> q_online_next, std::span<const float> q_target_next,
                 double reward, bool terminal, double gamma, std::span<const int> allowed = {});

nn::Tensor<float> pack_observations(std::span<const Observation* const> batch);

struct EpochRecord {
    int epoch = 0;
    double eps = 0.0;
    std::optional<double> mean_loss;
    std::optional<double> mean_score;
    std::optional<double> mean_final_d;
    std::optional<double> mean_d_drop;
    int episodes = 0;
    double wall_s = 0.0;
};

struct TrainHooks {
    // Called after every epoch with the online network.
    std::function<void(const EpochRecord&, const nn::QNetwork<float>&)> on_epoch;
    // Polled every step; returning true ends training early.
    std::function<bool()> should_stop;
    // Replaces the variant target rule (testing hook).
    std::function<double(std::span<const float>, std::span<const float>, double, bool, double)> target_rule;
    bool record_timing = true;
};

class DqnTrainer {
public:
    DqnTrainer(AgentConfig cfg, nn::NetSpec spec);

    // Runs the configured number of epochs on `env`.
    std::vector<EpochRecord> train(Environment& env, const TrainHooks& hooks = {});

    const nn::QNetwork<float>& online() const noexcept { return online_; }
    const nn::QNetwork<float>& target() const noexcept { return target_; }
    const AgentConfig& config() const noexcept { return cfg_; }
    std::uint64_t global_step() const noexcept { return step_; }
    std::uint64_t sync_count() const noexcept { return syncs_; }
    bool stopped_early() const noexcept { return stopped_; }

private:
    double update(std::span<const int> allowed, const TrainHooks& hooks);

    AgentConfig cfg_;
    nn::QNetwork<float> online_;
    nn::QNetwork<float> target_;
    ReplayBuffer<Transition> replay_;
    std::mt19937_64 rng_;
    std::uint64_t step_ = 0;
    std::uint64_t syncs_ = 0;
    bool stopped_ = false;
};

// Registration network for a variant: input window x history, six actions.
nn::NetSpec registration_spec(const AgentConfig& cfg, int window_h, int window_w, int history_n);

} // namespace rlalign
