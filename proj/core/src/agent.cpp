#include "rlalign/agent.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "rlalign/phantom.hpp"

namespace rlalign {

const char* to_string(Variant v) noexcept
{
    switch (v) {
    case Variant::Dqn: return "dqn";
    case Variant::Double: return "double";
    case Variant::Dueling: return "dueling";
    case Variant::DoubleDueling: return "double_dueling";
    }
    return "?";
}

Variant parse_variant(std::string_view name)
{
    if (name == "dqn") return Variant::Dqn;
    if (name == "double") return Variant::Double;
    if (name == "dueling") return Variant::Dueling;
    if (name == "double_dueling") return Variant::DoubleDueling;
    throw ConfigError("unknown variant '" + std::string(name) + "' (dqn|double|dueling|double_dueling)");
}

bool uses_double_target(Variant v) noexcept { return v == Variant::Double || v == Variant::DoubleDueling; }
bool uses_dueling_head(Variant v) noexcept { return v == Variant::Dueling || v == Variant::DoubleDueling; }

void ExplorationSchedule::validate() const
{
    auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!in_unit(start) || !in_unit(mid) || !in_unit(end)) throw ConfigError("exploration rates must lie in [0,1]");
    if (!(start >= mid && mid >= end)) throw ConfigError("exploration rates must be non-increasing");
    if (!(mid_epoch > 0.0 && end_epoch > mid_epoch)) throw ConfigError("schedule epochs must satisfy 0 < mid < end");
}

double ExplorationSchedule::value(double epoch) const
{
    if (epoch <= 0.0) return start;
    if (epoch == mid_epoch) return mid;
    if (epoch >= end_epoch) return end;
    if (epoch < mid_epoch) return start + (mid - start) * (epoch / mid_epoch);
    return mid + (end - mid) * ((epoch - mid_epoch) / (end_epoch - mid_epoch));
}

void AgentConfig::validate() const
{
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0,1]");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a finite non-negative number");
    if (target_sync_every < 1) throw ConfigError("target_sync_every must be >= 1");
    if (steps_per_epoch < 1) throw ConfigError("steps_per_epoch must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (replay_capacity < 1) throw ConfigError("replay_capacity must be >= 1");
    if (warmup < 0 || warmup > replay_capacity) throw ConfigError("warmup must lie in [0, replay_capacity]");
    if (batch_size > replay_capacity) throw ConfigError("batch_size cannot exceed replay_capacity");
    if (train_every < 1) throw ConfigError("train_every must be >= 1");
    if (dueling_head == nn::HeadKind::Plain) throw ConfigError("dueling_head must be a dueling combination");
    schedule.validate();
}

nn::HeadKind AgentConfig::head() const noexcept
{
    return uses_dueling_head(variant) ? dueling_head : nn::HeadKind::Plain;
}

nn::NetSpec registration_spec(const AgentConfig& cfg, int window_h, int window_w, int history_n)
{
    nn::NetSpec spec = nn::NetSpec::registration(cfg.head());
    spec.input_h = window_h;
    spec.input_w = window_w;
    spec.input_c = history_n;
    spec.validate();
    return spec;
}

int greedy_action(std::span<const float> q, std::span<const int> allowed)
{
    if (q.empty()) throw DimensionError("no Q-values to choose from");
    int best = -1;
    float best_q = -std::numeric_limits<float>::infinity();
    auto consider = [&](int a) {
        if (a < 0 || static_cast<std::size_t>(a) >= q.size()) throw InputError("allowed action outside Q range");
        if (best < 0 || q[static_cast<std::size_t>(a)] > best_q) {
            best = a;
            best_q = q[static_cast<std::size_t>(a)];
        }
    };
    if (allowed.empty()) {
        for (std::size_t a = 0; a < q.size(); ++a) consider(static_cast<int>(a));
    } else {
        // Lowest index wins ties regardless of listing order.
        std::vector<int> sorted(allowed.begin(), allowed.end());
        std::sort(sorted.begin(), sorted.end());
        for (int a : sorted) consider(a);
    }
    return best;
}

int select_action(std::span<const float> q, double eps, std::span<const int> allowed, std::mt19937_64& rng)
{
    if (!(eps >= 0.0 && eps <= 1.0)) throw InputError("eps must lie in [0,1]");
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < eps) {
        const std::size_t n = allowed.empty() ? q.size() : allowed.size();
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        const std::size_t i = pick(rng);
        return allowed.empty() ? static_cast<int>(i) : allowed[i];
    }
    return greedy_action(q, allowed);
}

nn::Tensor<float> pack_observations(std::span<const Observation* const> batch)
{
    if (batch.empty()) throw DimensionError("empty observation batch");
    const Observation& first = *batch.front();
    const int h = first.height();
    const int w = first.width();
    const int c = first.channels();
    nn::Tensor<float> out({static_cast<int>(batch.size()), h, w, c});
    const std::size_t per = static_cast<std::size_t>(h) * w * c;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Observation& o = *batch[i];
        if (o.height() != h || o.width() != w || o.channels() != c) {
            throw DimensionError("observation batch has mixed shapes");
        }
        o.pack(out.ptr() + i * per);
    }
    return out;
}

int select_action(const nn::QNetwork<float>& net, const Observation& obs, double eps,
                  std::span<const int> allowed, std::mt19937_64& rng)
{
    if (!(eps >= 0.0 && eps <= 1.0)) throw InputError("eps must lie in [0,1]");
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < eps) {
        const std::size_t n = allowed.empty() ? static_cast<std::size_t>(net.spec().actions) : allowed.size();
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        const std::size_t i = pick(rng);
        return allowed.empty() ? static_cast<int>(i) : allowed[i];
    }
    const Observation* one[] = {&obs};
    const nn::Tensor<float> q = net.infer(pack_observations(one));
    return greedy_action(q.data, allowed);
}

double td_target(Variant variant, std::span<const float> q_online_next, std::span<const float> q_target_next,
                 double reward, bool terminal, double gamma, std::span<const int> allowed)
{
    if (terminal) return reward;
    if (uses_double_target(variant)) {
        const int a = greedy_action(q_online_next, allowed);
        return reward + gamma * q_target_next[static_cast<std::size_t>(a)];
    }
    const int a = greedy_action(q_target_next, allowed);
    return reward + gamma * q_target_next[static_cast<std::size_t>(a)];
}

DqnTrainer::DqnTrainer(AgentConfig cfg, nn::NetSpec spec)
    : cfg_(cfg), replay_(static_cast<std::size_t>(std::max(cfg.replay_capacity, 1))), rng_(cfg.seed)
{
    cfg_.validate();
    spec.validate();
    online_ = nn::QNetwork<float>(spec, derive_seed(cfg_.seed, 0x4E4554ull));
    target_ = online_;
    rng_.seed(derive_seed(cfg_.seed, 0x524E47ull));
}

double DqnTrainer::update(std::span<const int> allowed, const TrainHooks& hooks)
{
    const auto picks = replay_.sample(static_cast<std::size_t>(cfg_.batch_size), rng_);
    std::vector<const Observation*> states;
    std::vector<const Observation*> nexts;
    std::vector<int> actions;
    states.reserve(picks.size());
    nexts.reserve(picks.size());
    actions.reserve(picks.size());
    for (const Transition* t : picks) {
        states.push_back(&t->state);
        nexts.push_back(&t->next_state);
        actions.push_back(t->action);
    }
    const nn::Tensor<float> next_in = pack_observations(nexts);
    const nn::Tensor<float> q_target = target_.forward(next_in, nn::Mode::Eval);
    nn::Tensor<float> q_online;
    const bool need_online = uses_double_target(cfg_.variant) || static_cast<bool>(hooks.target_rule);
    if (need_online) q_online = online_.forward(next_in, nn::Mode::Eval);

    const std::size_t a_count = static_cast<std::size_t>(online_.spec().actions);
    std::vector<float> targets(picks.size());
    for (std::size_t i = 0; i < picks.size(); ++i) {
        const std::span<const float> qt(q_target.ptr() + i * a_count, a_count);
        const std::span<const float> qo =
            need_online ? std::span<const float>(q_online.ptr() + i * a_count, a_count) : qt;
        const Transition& t = *picks[i];
        const double y = hooks.target_rule
                             ? hooks.target_rule(qo, qt, t.reward, t.terminal, cfg_.gamma)
                             : td_target(cfg_.variant, qo, qt, t.reward, t.terminal, cfg_.gamma, allowed);
        targets[i] = static_cast<float>(y);
    }

    const nn::Tensor<float> in = pack_observations(states);
    const float loss = online_.backward(in, std::span<const int>(actions), std::span<const float>(targets));
    if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at step " + std::to_string(step_));
    }
    online_.adam_step(cfg_.lr, cfg_.adam);
    return loss;
}

std::vector<EpochRecord> DqnTrainer::train(Environment& env, const TrainHooks& hooks)
{
    const auto shape = env.observation_shape();
    const auto& spec = online_.spec();
    if (shape[0] != spec.input_h || shape[1] != spec.input_w || shape[2] != spec.input_c) {
        throw ConfigError("network input shape does not match the environment observation");
    }
    if (env.action_count() != spec.actions) throw ConfigError("network action count does not match the environment");
    const std::vector<int> allowed = env.allowed_actions();

    std::vector<EpochRecord> log;
    stopped_ = false;

    double score_sum = 0.0, final_sum = 0.0, drop_sum = 0.0;
    int episodes = 0;
    auto close_episode = [&] {
        const EpisodeStats s = env.episode_stats();
        score_sum += s.score;
        final_sum += s.final_d;
        drop_sum += s.initial_d - s.final_d;
        ++episodes;
    };
    auto start_episode = [&]() -> Observation {
        for (int tries = 0; tries < 1000; ++tries) {
            if (auto obs = env.begin_episode(rng_)) return std::move(*obs);
            close_episode();
        }
        throw StateError("every sampled episode was terminal on reset");
    };

    Observation obs = start_episode();
    for (int epoch = 0; epoch < cfg_.epochs && !stopped_; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        score_sum = final_sum = drop_sum = 0.0;
        episodes = 0;
        double loss_sum = 0.0;
        int updates = 0;

        for (int s = 0; s < cfg_.steps_per_epoch; ++s) {
            if (hooks.should_stop && hooks.should_stop()) {
                stopped_ = true;
                break;
            }
            const double eps = cfg_.schedule.value(epoch + static_cast<double>(s) / cfg_.steps_per_epoch);
            const int a = select_action(online_, obs, eps, allowed, rng_);
            EnvStep st = env.advance(a);
            replay_.push({obs, a, static_cast<float>(st.reward), st.observation, st.terminal});
            ++step_;
            if (st.terminal) {
                close_episode();
                obs = start_episode();
            } else {
                obs = std::move(st.observation);
            }

            if (replay_.size() >= static_cast<std::size_t>(std::max(cfg_.warmup, cfg_.batch_size)) &&
                step_ % static_cast<std::uint64_t>(cfg_.train_every) == 0) {
                loss_sum += update(allowed, hooks);
                ++updates;
            }
            if (step_ % static_cast<std::uint64_t>(cfg_.target_sync_every) == 0) {
                target_.copy_parameters_from(online_);
                ++syncs_;
            }
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.eps = cfg_.schedule.value(epoch);
        if (updates > 0) rec.mean_loss = loss_sum / updates;
        if (episodes > 0) {
            rec.mean_score = score_sum / episodes;
            rec.mean_final_d = final_sum / episodes;
            rec.mean_d_drop = drop_sum / episodes;
        }
        rec.episodes = episodes;
        if (hooks.record_timing) {
            rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
        log.push_back(rec);
        if (hooks.on_epoch) hooks.on_epoch(rec, online_);
    }
    return log;
}

} // namespace rlalign
