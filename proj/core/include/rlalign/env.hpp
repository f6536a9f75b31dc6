#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rlalign/image.hpp"
#include "rlalign/similarity.hpp"

namespace rlalign {

inline constexpr int kActionCount = 6;

// Action index -> parameter move: 0:+tx 1:-tx 2:+ty 3:-ty 4:+theta 5:-theta.
enum class Action : int { IncTx = 0, DecTx, IncTy, DecTy, IncTheta, DecTheta };

const char* action_name(int action) noexcept;

enum class RewardForm {
    Signed,    // D_{t-1} - D_t
    Absolute,  // |D_{t-1} - D_t|
};

enum class RewardMode {
    Unsupervised,  // intensity dissimilarity D
    Supervised,    // Euclidean distance to the known correcting transform
};

struct EnvConfig {
    double epsilon_dist = 0.05;
    double bonus = 10.0;
    int max_steps = 200;
    int history_n = 4;
    std::array<double, 3> action_step = {1.0, 1.0, 1.0};  // px, px, degrees
    double param_bound = 10.0;
    RewardForm reward_form = RewardForm::Signed;
    RewardMode reward_mode = RewardMode::Unsupervised;
    double supervised_terminal_distance = 1.0;
    // Only translation actions (0..3) are available.
    bool translations_only = false;
    SimilarityConfig similarity;

    void validate() const;
    std::vector<int> allowed_actions() const;
};

// Stack of the last history_n difference images, oldest first.
struct Observation {
    std::vector<std::shared_ptr<const DiffImage>> frames;

    int height() const { return frames.empty() ? 0 : frames.front()->height(); }
    int width() const { return frames.empty() ? 0 : frames.front()->width(); }
    int channels() const { return static_cast<int>(frames.size()); }
    // Writes the stack interleaved as [h, w, channels].
    void pack(float* dst) const;
};

struct EnvState {
    Observation stack;
    RigidTransform2D current_t;
    int step_index = 0;
    double cumulative_reward = 0.0;
    double dissimilarity = 0.0;       // D(fixed, moving o current_t)
    double parameter_distance = 0.0;  // to the correcting transform; supervised mode only
    bool terminal = false;
    bool reached_goal = false;
};

struct StepResult {
    EnvState next;
    double reward = 0.0;
    double shaping = 0.0;  // reward without the terminal bonus
    bool terminal = false;
};

// Parameter-space reward: ||T_prev - target|| - ||T_cur - target|| with theta
// in degrees, and whether the new transform lies within `terminal_distance`.
struct SupervisedReward {
    double shaping = 0.0;
    bool reached = false;
};
SupervisedReward supervised_reward(const RigidTransform2D& target, const RigidTransform2D& previous,
                                   const RigidTransform2D& current, double terminal_distance = 1.0);

double parameter_distance(const RigidTransform2D& a, const RigidTransform2D& b);

// The registration MDP for one fixed/moving pair. `moving` is either the
// same size as `fixed` or larger by an even margin; the agent always sees
// the centered fixed-sized window of the warped moving image.
class RegistrationEnv {
public:
    RegistrationEnv(Image2D fixed, Image2D moving, EnvConfig cfg,
                    std::optional<RigidTransform2D> truth = std::nullopt);

    EnvState reset() const;
    StepResult step(const EnvState& state, int action) const;

    Image2D aligned(const RigidTransform2D& t) const;
    double dissimilarity_at(const RigidTransform2D& t) const;

    const Image2D& fixed() const noexcept { return fixed_; }
    const Image2D& moving() const noexcept { return moving_; }
    const EnvConfig& config() const noexcept { return cfg_; }
    const std::optional<RigidTransform2D>& truth() const noexcept { return truth_; }
    // Transform that undoes the simulated motion (supervised target).
    std::optional<RigidTransform2D> correction() const;

private:
    std::shared_ptr<const DiffImage> difference(const RigidTransform2D& t, double* d_out) const;
    bool goal_reached(double d, double param_dist) const;

    Image2D fixed_;
    Image2D moving_;
    EnvConfig cfg_;
    std::optional<RigidTransform2D> truth_;
};

// Shared result record for one aligned pair (agent or baseline).
struct EpisodeReport {
    std::string pair_id;
    std::string method;
    double nmi = 0.0;
    double rho = 0.0;
    std::optional<double> score;  // cumulative reward; empty for the baseline
    int steps = 0;
    double wall_s = 0.0;
    RigidTransform2D final_t;
    std::optional<RigidTransform2D> truth_t;
    double initial_d = 0.0;
    double final_d = 0.0;
    bool reached_goal = false;
};

using Policy = std::function<int(const EnvState&)>;

// Resets, then steps under `policy` until terminal.
EpisodeReport run_episode(const RegistrationEnv& env, const Policy& policy, int nmi_bins = 32,
                          bool record_timing = true);

// Interface the trainer drives. Implementations own their episode state.
struct EpisodeStats {
    double score = 0.0;
    int steps = 0;
    double initial_d = 0.0;
    double final_d = 0.0;
    bool reached_goal = false;
};

struct EnvStep {
    Observation observation;
    double reward = 0.0;
    bool terminal = false;
};

class Environment {
public:
    virtual ~Environment() = default;
    virtual std::array<int, 3> observation_shape() const = 0;  // h, w, channels
    virtual int action_count() const = 0;
    virtual std::vector<int> allowed_actions() const = 0;
    // Starts a new episode. Returns nullopt when the episode was terminal
    // on reset; episode_stats() then describes it.
    virtual std::optional<Observation> begin_episode(std::mt19937_64& rng) = 0;
    virtual EnvStep advance(int action) = 0;
    virtual EpisodeStats episode_stats() const = 0;
};

struct PairSample {
    std::string pair_id;
    Image2D fixed;
    Image2D moving;
    std::optional<RigidTransform2D> truth;
};

// Episodes drawn uniformly from a fixed pool of pairs.
class PairPoolEnvironment final : public Environment {
public:
    PairPoolEnvironment(std::shared_ptr<const std::vector<PairSample>> pairs, EnvConfig cfg);

    std::array<int, 3> observation_shape() const override;
    int action_count() const override { return kActionCount; }
    std::vector<int> allowed_actions() const override { return cfg_.allowed_actions(); }
    std::optional<Observation> begin_episode(std::mt19937_64& rng) override;
    EnvStep advance(int action) override;
    EpisodeStats episode_stats() const override;

private:
    std::shared_ptr<const std::vector<PairSample>> pairs_;
    EnvConfig cfg_;
    std::optional<RegistrationEnv> env_;
    EnvState state_;
    double initial_d_ = 0.0;
};

} // namespace rlalign
