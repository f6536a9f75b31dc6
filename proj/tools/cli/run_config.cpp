#include "run_config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

namespace rlalign::cli {

using nlohmann::json;

namespace {

struct KeyDef {
    std::function<void(RunConfig&, const json&)> set;
    std::function<json(const RunConfig&)> get;
};

template <class T>
T expect(const json& v, const std::string& key)
{
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(key + " expects true or false");
            return v.get<bool>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) {
                if (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long long>(v.get<double>()))) {
                    return static_cast<T>(v.get<double>());
                }
                throw ConfigError(key + " expects an integer");
            }
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_integer() && v.get<long long>() < 0 && !v.is_number_unsigned()) {
                    throw ConfigError(key + " expects a non-negative integer");
                }
            }
            return v.get<T>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(key + " expects a number");
            return v.get<T>();
        } else {
            if (!v.is_string()) throw ConfigError(key + " expects a string");
            return v.get<std::string>();
        }
    } catch (const json::exception& ex) {
        throw ConfigError(key + ": " + ex.what());
    }
}

const char* reward_form_name(RewardForm f) { return f == RewardForm::Signed ? "signed" : "abs"; }
const char* reward_mode_name(RewardMode m) { return m == RewardMode::Supervised ? "supervised" : "unsupervised"; }

RewardForm parse_reward_form(const std::string& s)
{
    if (s == "signed") return RewardForm::Signed;
    if (s == "abs") return RewardForm::Absolute;
    throw ConfigError("env.reward_form must be signed or abs");
}

RewardMode parse_reward_mode(const std::string& s)
{
    if (s == "unsupervised") return RewardMode::Unsupervised;
    if (s == "supervised") return RewardMode::Supervised;
    throw ConfigError("agent.reward_mode must be unsupervised or supervised");
}

nn::HeadKind parse_dueling_head(const std::string& s)
{
    if (s == "sum") return nn::HeadKind::Dueling;
    if (s == "mean") return nn::HeadKind::DuelingMean;
    throw ConfigError("agent.dueling_head must be sum or mean");
}

// Accessor-based registration: `ref` yields the field to read or write.
template <class T, class Ref>
void add(std::map<std::string, KeyDef>& m, const std::string& key, Ref ref)
{
    m[key] = KeyDef{[key, ref](RunConfig& c, const json& v) { ref(c) = expect<T>(v, key); },
                    [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); }};
}

const std::map<std::string, KeyDef>& registry()
{
    static const std::map<std::string, KeyDef> table = [] {
        std::map<std::string, KeyDef> m;
        add<std::uint64_t>(m, "seed", [](RunConfig& c) -> auto& { return c.seed; });
        add<int>(m, "pairs", [](RunConfig& c) -> auto& { return c.pairs; });

        add<int>(m, "phantom.height", [](RunConfig& c) -> auto& { return c.phantom.height; });
        add<int>(m, "phantom.width", [](RunConfig& c) -> auto& { return c.phantom.width; });
        add<double>(m, "phantom.layer_amplitude", [](RunConfig& c) -> auto& { return c.phantom.layer_amplitude; });
        add<double>(m, "phantom.background", [](RunConfig& c) -> auto& { return c.phantom.background; });
        add<double>(m, "phantom.retina_top", [](RunConfig& c) -> auto& { return c.phantom.retina_top; });
        add<double>(m, "phantom.retina_bottom", [](RunConfig& c) -> auto& { return c.phantom.retina_bottom; });
        add<double>(m, "phantom.edge_softness", [](RunConfig& c) -> auto& { return c.phantom.edge_softness; });
        add<double>(m, "phantom.speckle_looks", [](RunConfig& c) -> auto& { return c.phantom.speckle_looks; });
        add<double>(m, "phantom.texture_strength", [](RunConfig& c) -> auto& { return c.phantom.texture_strength; });
        add<double>(m, "phantom.texture_sigma", [](RunConfig& c) -> auto& { return c.phantom.texture_sigma; });
        add<int>(m, "phantom.vessel_count", [](RunConfig& c) -> auto& { return c.phantom.vessel_count; });
        add<double>(m, "phantom.vessel_depth", [](RunConfig& c) -> auto& { return c.phantom.vessel_depth; });
        m["phantom.layer_contrasts"] = KeyDef{
            [](RunConfig& c, const json& v) {
                if (!v.is_array() || v.empty()) throw ConfigError("phantom.layer_contrasts expects a list of numbers");
                std::vector<double> out;
                for (const auto& x : v) out.push_back(expect<double>(x, "phantom.layer_contrasts"));
                c.phantom.layer_contrasts = out;
                c.phantom.layer_count = static_cast<int>(out.size());
            },
            [](const RunConfig& c) { return json(c.phantom.layer_contrasts); }};

        add<int>(m, "pair.window", [](RunConfig& c) -> auto& { return c.pair.window; });
        add<int>(m, "pair.context_margin", [](RunConfig& c) -> auto& { return c.pair.context_margin; });
        add<double>(m, "pair.range", [](RunConfig& c) -> auto& { return c.pair.range; });
        add<bool>(m, "pair.stress", [](RunConfig& c) -> auto& { return c.pair.stress; });
        add<int>(m, "pair.spacing_y", [](RunConfig& c) -> auto& { return c.pair.spacing_y; });
        add<int>(m, "pair.spacing_x", [](RunConfig& c) -> auto& { return c.pair.spacing_x; });

        // One switch drives the simulation, the action set and the baseline.
        m["translations_only"] = KeyDef{
            [](RunConfig& c, const json& v) {
                const bool b = expect<bool>(v, "translations_only");
                c.pair.translations_only = b;
                c.env.translations_only = b;
                c.baseline.translations_only = b;
            },
            [](const RunConfig& c) { return json(c.env.translations_only); }};

        add<double>(m, "env.epsilon", [](RunConfig& c) -> auto& { return c.env.epsilon_dist; });
        add<double>(m, "env.bonus", [](RunConfig& c) -> auto& { return c.env.bonus; });
        add<int>(m, "env.max_steps", [](RunConfig& c) -> auto& { return c.env.max_steps; });
        add<int>(m, "env.history", [](RunConfig& c) -> auto& { return c.env.history_n; });
        add<double>(m, "env.step_tx", [](RunConfig& c) -> auto& { return c.env.action_step[0]; });
        add<double>(m, "env.step_ty", [](RunConfig& c) -> auto& { return c.env.action_step[1]; });
        add<double>(m, "env.step_theta", [](RunConfig& c) -> auto& { return c.env.action_step[2]; });
        add<double>(m, "env.param_bound", [](RunConfig& c) -> auto& { return c.env.param_bound; });
        add<double>(m, "env.supervised_terminal_distance",
                    [](RunConfig& c) -> auto& { return c.env.supervised_terminal_distance; });
        m["env.reward_form"] = KeyDef{
            [](RunConfig& c, const json& v) { c.env.reward_form = parse_reward_form(expect<std::string>(v, "env.reward_form")); },
            [](const RunConfig& c) { return json(reward_form_name(c.env.reward_form)); }};

        add<double>(m, "similarity.c1", [](RunConfig& c) -> auto& { return c.env.similarity.ssim_c1; });
        add<double>(m, "similarity.c2", [](RunConfig& c) -> auto& { return c.env.similarity.ssim_c2; });
        add<int>(m, "similarity.nmi_bins", [](RunConfig& c) -> auto& { return c.env.similarity.nmi_bins; });

        m["agent.variant"] = KeyDef{
            [](RunConfig& c, const json& v) { c.agent.variant = parse_variant(expect<std::string>(v, "agent.variant")); },
            [](const RunConfig& c) { return json(to_string(c.agent.variant)); }};
        m["agent.reward_mode"] = KeyDef{
            [](RunConfig& c, const json& v) {
                const RewardMode mode = parse_reward_mode(expect<std::string>(v, "agent.reward_mode"));
                c.agent.reward_mode = mode;
                c.env.reward_mode = mode;
            },
            [](const RunConfig& c) { return json(reward_mode_name(c.agent.reward_mode)); }};
        m["agent.dueling_head"] = KeyDef{
            [](RunConfig& c, const json& v) {
                c.agent.dueling_head = parse_dueling_head(expect<std::string>(v, "agent.dueling_head"));
            },
            [](const RunConfig& c) { return json(c.agent.dueling_head == nn::HeadKind::DuelingMean ? "mean" : "sum"); }};
        add<double>(m, "agent.gamma", [](RunConfig& c) -> auto& { return c.agent.gamma; });
        add<int>(m, "agent.batch_size", [](RunConfig& c) -> auto& { return c.agent.batch_size; });
        add<double>(m, "agent.lr", [](RunConfig& c) -> auto& { return c.agent.lr; });
        add<int>(m, "agent.target_sync_every", [](RunConfig& c) -> auto& { return c.agent.target_sync_every; });
        add<int>(m, "agent.steps_per_epoch", [](RunConfig& c) -> auto& { return c.agent.steps_per_epoch; });
        add<int>(m, "agent.epochs", [](RunConfig& c) -> auto& { return c.agent.epochs; });
        add<int>(m, "agent.warmup", [](RunConfig& c) -> auto& { return c.agent.warmup; });
        add<int>(m, "agent.replay_capacity", [](RunConfig& c) -> auto& { return c.agent.replay_capacity; });
        add<int>(m, "agent.train_every", [](RunConfig& c) -> auto& { return c.agent.train_every; });
        add<double>(m, "schedule.start", [](RunConfig& c) -> auto& { return c.agent.schedule.start; });
        add<double>(m, "schedule.mid", [](RunConfig& c) -> auto& { return c.agent.schedule.mid; });
        add<double>(m, "schedule.mid_epoch", [](RunConfig& c) -> auto& { return c.agent.schedule.mid_epoch; });
        add<double>(m, "schedule.end", [](RunConfig& c) -> auto& { return c.agent.schedule.end; });
        add<double>(m, "schedule.end_epoch", [](RunConfig& c) -> auto& { return c.agent.schedule.end_epoch; });

        m["baseline.metric"] = KeyDef{
            [](RunConfig& c, const json& v) {
                c.baseline.metric = parse_baseline_metric(expect<std::string>(v, "baseline.metric"));
            },
            [](const RunConfig& c) { return json(to_string(c.baseline.metric)); }};
        add<int>(m, "baseline.starts", [](RunConfig& c) -> auto& { return c.baseline.starts; });
        add<int>(m, "baseline.max_evals", [](RunConfig& c) -> auto& { return c.baseline.max_evals; });
        add<double>(m, "baseline.step_tx", [](RunConfig& c) -> auto& { return c.baseline.initial_step[0]; });
        add<double>(m, "baseline.step_ty", [](RunConfig& c) -> auto& { return c.baseline.initial_step[1]; });
        add<double>(m, "baseline.step_theta", [](RunConfig& c) -> auto& { return c.baseline.initial_step[2]; });
        add<double>(m, "baseline.shrink", [](RunConfig& c) -> auto& { return c.baseline.shrink; });
        add<double>(m, "baseline.tol", [](RunConfig& c) -> auto& { return c.baseline.tol; });
        add<double>(m, "baseline.start_extent", [](RunConfig& c) -> auto& { return c.baseline.start_extent; });
        return m;
    }();
    return table;
}

void sync_shared(RunConfig& c)
{
    c.baseline.similarity = c.env.similarity;
    c.baseline.nmi_bins = c.env.similarity.nmi_bins;
    c.baseline.param_bound = c.env.param_bound;
    c.agent.seed = c.seed;
    c.phantom.seed = c.seed;
}

} // namespace

void RunConfig::validate() const
{
    phantom.validate();
    pair.validate();
    env.validate();
    agent.validate();
    baseline.validate();
    if (pairs < 1) throw ConfigError("pairs must be >= 1");
    if (agent.reward_mode != env.reward_mode) throw ConfigError("agent and env reward modes disagree");
}

std::vector<std::string> config_keys()
{
    std::vector<std::string> out;
    for (const auto& [k, _] : registry()) out.push_back(k);
    return out;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& json_value)
{
    json v;
    try {
        v = json::parse(json_value);
    } catch (const json::exception&) {
        v = json_value;
    }
    const auto& reg = registry();
    const auto it = reg.find(key);
    if (it == reg.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(cfg, v);
    sync_shared(cfg);
}

void apply_assignment(RunConfig& cfg, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    set_key(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& ex) {
        throw ConfigError(origin + ": not valid JSON (" + ex.what() + ")");
    }
    if (!j.is_object()) throw ConfigError(origin + ": config must be a flat JSON object");
    const auto& reg = registry();
    for (const auto& [key, value] : j.items()) {
        const auto it = reg.find(key);
        if (it == reg.end()) throw ConfigError(origin + ": unknown config key '" + key + "'");
        it->second.set(cfg, value);
    }
    sync_shared(cfg);
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(cfg, ss.str(), path.string());
}

std::vector<std::string> preset_names() { return {"desk", "paper", "smoke"}; }

void apply_preset(RunConfig& cfg, const std::string& name)
{
    if (name == "paper") {
        cfg.agent.replay_capacity = 1000000;
        cfg.agent.epochs = 125;
        cfg.agent.steps_per_epoch = 20000;
        cfg.agent.batch_size = 256;
        cfg.agent.warmup = 5000;
        cfg.agent.target_sync_every = 2500;
        cfg.agent.train_every = 1;
        cfg.agent.schedule = ExplorationSchedule{};
    } else if (name == "desk") {
        // Translations-only, +-3 px, 8 x 2000 steps with the schedule
        // compressed onto the shorter run. Updates every third step keep
        // the run inside half an hour on one core.
        set_key(cfg, "translations_only", "true");
        cfg.pair.range = 3.0;
        cfg.agent.epochs = 8;
        cfg.agent.steps_per_epoch = 2000;
        cfg.agent.batch_size = 32;
        cfg.agent.train_every = 3;
        cfg.agent.warmup = 2000;
        cfg.agent.target_sync_every = 1000;
        cfg.agent.replay_capacity = 20000;
        cfg.agent.schedule = ExplorationSchedule{1.0, 0.1, 4.0, 0.05, 8.0};
        cfg.env.max_steps = 20;
        cfg.pairs = 2000;
    } else if (name == "smoke") {
        cfg.agent.epochs = 2;
        cfg.agent.steps_per_epoch = 40;
        cfg.agent.batch_size = 4;
        cfg.agent.warmup = 16;
        cfg.agent.target_sync_every = 20;
        cfg.agent.replay_capacity = 200;
        cfg.agent.train_every = 4;
        cfg.env.max_steps = 20;
        cfg.pairs = 4;
    } else {
        throw ConfigError("unknown preset '" + name + "' (desk|paper|smoke)");
    }
    sync_shared(cfg);
}

std::string dump_config(const RunConfig& cfg)
{
    json j = json::object();
    for (const auto& [k, def] : registry()) j[k] = def.get(cfg);
    return j.dump(2) + "\n";
}

} // namespace rlalign::cli
