#include "rlalign/env.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace rlalign {

const char* action_name(int action) noexcept
{
    static constexpr const char* names[kActionCount] = {"+tx", "-tx", "+ty", "-ty", "+theta", "-theta"};
    return action >= 0 && action < kActionCount ? names[action] : "?";
}

void EnvConfig::validate() const
{
    if (!(epsilon_dist > 0.0)) throw ConfigError("env epsilon must be positive");
    if (!(bonus > 0.0)) throw ConfigError("terminal bonus must be positive");
    if (history_n < 1) throw ConfigError("history_n must be >= 1");
    if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
    for (double s : action_step) {
        if (!(s > 0.0)) throw ConfigError("action steps must be positive");
    }
    if (!(param_bound > 0.0)) throw ConfigError("param_bound must be positive");
    if (!(supervised_terminal_distance > 0.0)) throw ConfigError("supervised terminal distance must be positive");
    similarity.validate();
}

std::vector<int> EnvConfig::allowed_actions() const
{
    if (translations_only) return {0, 1, 2, 3};
    return {0, 1, 2, 3, 4, 5};
}

void Observation::pack(float* dst) const
{
    const int c = channels();
    if (c == 0) return;
    const std::size_t n = frames.front()->size();
    for (int k = 0; k < c; ++k) {
        const auto px = frames[static_cast<std::size_t>(k)]->pixels();
        for (std::size_t i = 0; i < n; ++i) dst[i * static_cast<std::size_t>(c) + static_cast<std::size_t>(k)] = px[i];
    }
}

double parameter_distance(const RigidTransform2D& a, const RigidTransform2D& b)
{
    const double dx = a.tx - b.tx;
    const double dy = a.ty - b.ty;
    const double dt = a.theta - b.theta;
    return std::sqrt(dx * dx + dy * dy + dt * dt);
}

SupervisedReward supervised_reward(const RigidTransform2D& target, const RigidTransform2D& previous,
                                   const RigidTransform2D& current, double terminal_distance)
{
    const double before = parameter_distance(previous, target);
    const double after = parameter_distance(current, target);
    return {before - after, after <= terminal_distance};
}

RegistrationEnv::RegistrationEnv(Image2D fixed, Image2D moving, EnvConfig cfg,
                                 std::optional<RigidTransform2D> truth)
    : fixed_(std::move(fixed)), moving_(std::move(moving)), cfg_(cfg), truth_(truth)
{
    cfg_.validate();
    if (fixed_.empty() || moving_.empty()) throw DimensionError("registration pair must be non-empty");
    const int mh = moving_.height() - fixed_.height();
    const int mw = moving_.width() - fixed_.width();
    if (mh < 0 || mw < 0 || mh % 2 != 0 || mw % 2 != 0) {
        throw DimensionError("moving image must match fixed or exceed it by an even margin");
    }
    if (cfg_.reward_mode == RewardMode::Supervised && !truth_) {
        throw ConfigError("supervised reward requires the ground-truth transform");
    }
}

std::optional<RigidTransform2D> RegistrationEnv::correction() const
{
    if (!truth_) return std::nullopt;
    return invert(*truth_);
}

Image2D RegistrationEnv::aligned(const RigidTransform2D& t) const
{
    return warp_window(moving_, t, fixed_.height(), fixed_.width());
}

double RegistrationEnv::dissimilarity_at(const RigidTransform2D& t) const
{
    return rlalign::dissimilarity(fixed_, aligned(t), cfg_.similarity);
}

std::shared_ptr<const DiffImage> RegistrationEnv::difference(const RigidTransform2D& t, double* d_out) const
{
    const Image2D view = aligned(t);
    if (d_out) *d_out = rlalign::dissimilarity(fixed_, view, cfg_.similarity);
    return std::make_shared<const DiffImage>(diff(fixed_, view));
}

bool RegistrationEnv::goal_reached(double d, double param_dist) const
{
    if (cfg_.reward_mode == RewardMode::Supervised) return param_dist <= cfg_.supervised_terminal_distance;
    return d <= cfg_.epsilon_dist;
}

EnvState RegistrationEnv::reset() const
{
    EnvState s;
    s.current_t = RigidTransform2D::identity();
    auto frame = difference(s.current_t, &s.dissimilarity);
    s.stack.frames.assign(static_cast<std::size_t>(cfg_.history_n), frame);
    if (const auto target = correction()) s.parameter_distance = parameter_distance(s.current_t, *target);
    if (goal_reached(s.dissimilarity, s.parameter_distance)) {
        s.terminal = true;
        s.reached_goal = true;
        s.cumulative_reward = cfg_.bonus;
    }
    return s;
}

StepResult RegistrationEnv::step(const EnvState& state, int action) const
{
    if (action < 0 || action >= kActionCount) throw InputError("action must lie in 0..5");
    if (cfg_.translations_only && action >= 4) throw InputError("rotation actions are disabled");
    if (state.terminal) throw StateError("cannot step a terminal state");
    if (static_cast<int>(state.stack.frames.size()) != cfg_.history_n) {
        throw StateError("state stack does not hold history_n frames");
    }

    RigidTransform2D t = state.current_t;
    const double sign = (action % 2 == 0) ? 1.0 : -1.0;
    const double bound = cfg_.param_bound;
    switch (action / 2) {
    case 0: t.tx = std::clamp(t.tx + sign * cfg_.action_step[0], -bound, bound); break;
    case 1: t.ty = std::clamp(t.ty + sign * cfg_.action_step[1], -bound, bound); break;
    default: t.theta = std::clamp(t.theta + sign * cfg_.action_step[2], -bound, bound); break;
    }

    StepResult out;
    EnvState& next = out.next;
    next.current_t = t;
    next.step_index = state.step_index + 1;
    auto frame = difference(t, &next.dissimilarity);
    next.stack.frames.reserve(state.stack.frames.size());
    next.stack.frames.assign(state.stack.frames.begin() + 1, state.stack.frames.end());
    next.stack.frames.push_back(std::move(frame));

    if (cfg_.reward_mode == RewardMode::Supervised) {
        const auto r = supervised_reward(*correction(), state.current_t, t, cfg_.supervised_terminal_distance);
        next.parameter_distance = parameter_distance(t, *correction());
        out.shaping = r.shaping;
    } else {
        if (const auto target = correction()) next.parameter_distance = parameter_distance(t, *target);
        out.shaping = state.dissimilarity - next.dissimilarity;
    }
    if (cfg_.reward_form == RewardForm::Absolute) out.shaping = std::abs(out.shaping);
    out.reward = out.shaping;

    if (goal_reached(next.dissimilarity, next.parameter_distance)) {
        out.reward += cfg_.bonus;
        next.reached_goal = true;
        next.terminal = true;
    }
    if (next.step_index >= cfg_.max_steps) next.terminal = true;
    if (!std::isfinite(out.reward)) throw NumericError("non-finite reward");
    next.cumulative_reward = state.cumulative_reward + out.reward;
    out.terminal = next.terminal;
    return out;
}

EpisodeReport run_episode(const RegistrationEnv& env, const Policy& policy, int nmi_bins, bool record_timing)
{
    const auto start = std::chrono::steady_clock::now();
    EnvState s = env.reset();
    EpisodeReport rep;
    rep.initial_d = s.dissimilarity;
    while (!s.terminal) {
        const int a = policy(s);
        s = env.step(s, a).next;
    }
    const auto stop = std::chrono::steady_clock::now();
    const Image2D view = env.aligned(s.current_t);
    rep.final_t = s.current_t;
    rep.truth_t = env.truth();
    rep.score = s.cumulative_reward;
    rep.steps = s.step_index;
    rep.final_d = s.dissimilarity;
    rep.reached_goal = s.reached_goal;
    rep.nmi = nmi(env.fixed(), view, nmi_bins);
    rep.rho = correlation(env.fixed(), view);
    rep.wall_s = record_timing ? std::chrono::duration<double>(stop - start).count() : 0.0;
    return rep;
}

PairPoolEnvironment::PairPoolEnvironment(std::shared_ptr<const std::vector<PairSample>> pairs, EnvConfig cfg)
    : pairs_(std::move(pairs)), cfg_(cfg)
{
    cfg_.validate();
    if (!pairs_ || pairs_->empty()) throw InputError("training needs at least one pair");
    const auto& first = pairs_->front();
    for (const auto& p : *pairs_) {
        if (!p.fixed.same_shape(first.fixed)) throw DimensionError("all training pairs must share the window size");
        if (cfg_.reward_mode == RewardMode::Supervised && !p.truth) {
            throw ConfigError("supervised reward requires truth for pair " + p.pair_id);
        }
    }
}

std::array<int, 3> PairPoolEnvironment::observation_shape() const
{
    const auto& f = pairs_->front().fixed;
    return {f.height(), f.width(), cfg_.history_n};
}

std::optional<Observation> PairPoolEnvironment::begin_episode(std::mt19937_64& rng)
{
    std::uniform_int_distribution<std::size_t> pick(0, pairs_->size() - 1);
    const PairSample& p = (*pairs_)[pick(rng)];
    env_.emplace(p.fixed, p.moving, cfg_, p.truth);
    state_ = env_->reset();
    initial_d_ = state_.dissimilarity;
    if (state_.terminal) return std::nullopt;
    return state_.stack;
}

EnvStep PairPoolEnvironment::advance(int action)
{
    if (!env_) throw StateError("advance called before begin_episode");
    StepResult r = env_->step(state_, action);
    state_ = std::move(r.next);
    return {state_.stack, r.reward, r.terminal};
}

EpisodeStats PairPoolEnvironment::episode_stats() const
{
    return {state_.cumulative_reward, state_.step_index, initial_d_, state_.dissimilarity, state_.reached_goal};
}

} // namespace rlalign
