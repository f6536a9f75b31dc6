#include "commands.hpp"

#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "rlalign/checkpoint.hpp"
#include "rlalign/dataset.hpp"
#include "rlalign/evalkit.hpp"
#include "rlalign/image_io.hpp"
#include "run_config.hpp"

namespace rlalign::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

std::string fmt3(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    // Avoid printing "-0.000".
    if (std::string(buf) == "-0.000") return "0.000";
    return buf;
}

fs::path sibling(const fs::path& p, const std::string& suffix)
{
    return p.parent_path() / (p.stem().string() + suffix);
}

void write_text(const fs::path& p, const std::string& s)
{
    write_file_bytes(p, std::vector<unsigned char>(s.begin(), s.end()));
}

json nullable(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Options every subcommand shares.
struct Common {
    std::string config_file;
    std::string preset;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    bool no_timing = false;
    bool paper_scale = false;

    void attach(CLI::App& app, bool with_workers)
    {
        app.add_option("--config", config_file, "Flat JSON config file");
        app.add_option("--preset", preset, "Settings bundle: desk, paper or smoke");
        app.add_flag("--paper-scale", paper_scale, "Shorthand for --preset paper");
        app.add_option("--set", sets, "Override one config key, key=value (repeatable)");
        app.add_option("--seed", seed, "Random seed (falls back to RLALIGN_SEED, then the config)");
        if (with_workers) {
            app.add_option("--workers", workers, "Parallel workers for per-pair work")->capture_default_str()
                ->check(CLI::PositiveNumber);
            app.add_flag("--no-timing", no_timing, "Write 0 for wall-clock fields so outputs are reproducible");
        }
    }

    // Preset, then file, then --set, then the seed.
    void apply(RunConfig& cfg) const
    {
        if (paper_scale) apply_preset(cfg, "paper");
        if (!preset.empty()) apply_preset(cfg, preset);
        if (!config_file.empty()) apply_config_file(cfg, config_file);
        for (const auto& s : sets) apply_assignment(cfg, s);
        if (seed) {
            set_key(cfg, "seed", std::to_string(*seed));
        } else if (const char* env = std::getenv("RLALIGN_SEED"); env && *env) {
            set_key(cfg, "seed", env);
        }
    }
};

void load_sidecar(RunConfig& cfg, const fs::path& ckpt)
{
    const fs::path side = sibling(ckpt, ".config.json");
    std::error_code ec;
    if (fs::is_regular_file(side, ec)) apply_config_file(cfg, side);
}

nn::QNetwork<float> load_net_for(const fs::path& ckpt, int h, int w, const EnvConfig& env)
{
    nn::QNetwork<float> net = nn::load_checkpoint(ckpt);
    const auto& s = net.spec();
    if (s.input_h != h || s.input_w != w || s.input_c != env.history_n) {
        throw FormatError("checkpoint expects " + std::to_string(s.input_h) + "x" + std::to_string(s.input_w) + "x" +
                          std::to_string(s.input_c) + " input, data gives " + std::to_string(h) + "x" +
                          std::to_string(w) + "x" + std::to_string(env.history_n));
    }
    if (s.actions != kActionCount) throw FormatError("checkpoint does not have six action outputs");
    return net;
}

// ---------------------------------------------------------------------------

struct GenData {
    Common common;
    std::string out;
    std::optional<int> pairs;
    std::optional<double> range;
    std::optional<double> noise;
    bool translations_only = false;
    bool stress = false;

    void attach(CLI::App& app)
    {
        app.add_option("--out", out, "Output directory")->required();
        app.add_option("--pairs", pairs, "Number of pairs (default 10)");
        app.add_option("--range", range, "Motion range per parameter (default 5, max 5 or 10 with --stress)");
        app.add_option("--noise", noise, "Speckle looks; smaller is noisier (default 200)");
        app.add_flag("--translations-only", translations_only, "Simulate translations only");
        app.add_flag("--stress", stress, "Allow ranges up to 10 for stress evaluation");
        common.attach(app, false);
    }

    int run(std::ostream& os) const
    {
        RunConfig cfg;
        common.apply(cfg);
        if (pairs) cfg.pairs = *pairs;
        if (range) cfg.pair.range = *range;
        if (noise) cfg.phantom.speckle_looks = *noise;
        if (translations_only) set_key(cfg, "translations_only", "true");
        if (stress) cfg.pair.stress = true;
        cfg.validate();

        GenDataOptions opt{cfg.phantom, cfg.pair, cfg.pairs, cfg.seed};
        const auto entries = generate_dataset(out, opt);
        write_text(fs::path(out) / "config.json", dump_config(cfg));
        os << "wrote " << entries.size() << " pairs to " << out << "\n";
        return kOk;
    }
};

struct Train {
    Common common;
    std::string data;
    std::string out;
    std::string log;
    std::optional<std::string> variant;
    std::optional<std::string> reward_mode;
    std::optional<std::string> reward_form;

    void attach(CLI::App& app)
    {
        app.add_option("--data", data, "Dataset directory or manifest")->required();
        app.add_option("--out", out, "Checkpoint path")->required();
        app.add_option("--reward-form", reward_form, "signed or abs (default signed)");
        app.add_option("--log", log, "Epoch log (default <out stem>.log.jsonl)");
        app.add_option("--variant", variant, "dqn, double, dueling or double_dueling (default dueling)");
        app.add_option("--reward-mode", reward_mode, "unsupervised or supervised (default unsupervised)");
        common.attach(app, true);
    }

    int run(std::ostream& os, std::ostream& es) const
    {
        RunConfig cfg;
        common.apply(cfg);
        if (variant) set_key(cfg, "agent.variant", json(*variant).dump());
        if (reward_mode) set_key(cfg, "agent.reward_mode", json(*reward_mode).dump());
        if (reward_form) set_key(cfg, "env.reward_form", json(*reward_form).dump());
        cfg.validate();

        auto pairs = std::make_shared<const std::vector<PairSample>>(load_pairs(resolve_manifest(data)));
        PairPoolEnvironment env(pairs, cfg.env);
        const auto& first = pairs->front().fixed;
        DqnTrainer trainer(cfg.agent, registration_spec(cfg.agent, first.height(), first.width(), cfg.env.history_n));

        const fs::path ckpt = out;
        const fs::path log_path = log.empty() ? sibling(ckpt, ".log.jsonl") : fs::path(log);
        write_text(sibling(ckpt, ".config.json"), dump_config(cfg));

        std::string log_text;
        bool saved = false;
        TrainHooks hooks;
        hooks.record_timing = !common.no_timing;
        hooks.should_stop = [] { return g_stop.load(); };
        hooks.on_epoch = [&](const EpochRecord& r, const nn::QNetwork<float>& net) {
            json j;
            j["epoch"] = r.epoch;
            j["eps"] = r.eps;
            j["mean_loss"] = nullable(r.mean_loss);
            j["mean_score"] = nullable(r.mean_score);
            j["mean_final_D"] = nullable(r.mean_final_d);
            j["mean_D_drop"] = nullable(r.mean_d_drop);
            j["episodes"] = r.episodes;
            j["wall_s"] = r.wall_s;
            const std::string line = j.dump();
            log_text += line + "\n";
            write_text(log_path, log_text);
            nn::save_checkpoint(net, ckpt);
            saved = true;
            os << line << "\n" << std::flush;
        };

        g_stop.store(false);
        auto previous = std::signal(SIGINT, on_sigint);
        try {
            trainer.train(env, hooks);
        } catch (const NumericError&) {
            std::signal(SIGINT, previous);
            if (saved) es << "last good checkpoint: " << ckpt.string() << "\n";
            else es << "no checkpoint was written before the failure\n";
            throw;
        }
        std::signal(SIGINT, previous);
        if (trainer.stopped_early()) {
            nn::save_checkpoint(trainer.online(), ckpt);
            os << "interrupted; checkpoint flushed to " << ckpt.string() << "\n";
        } else if (!saved) {
            nn::save_checkpoint(trainer.online(), ckpt);
        }
        write_text(log_path, log_text);
        os << "checkpoint: " << ckpt.string() << "\n";
        return kOk;
    }
};

struct Align {
    Common common;
    std::string fixed;
    std::string moving;
    std::string ckpt;
    std::string out;

    void attach(CLI::App& app)
    {
        app.add_option("--fixed", fixed, "Fixed image (IMG1 or PGM)")->required();
        app.add_option("--moving", moving, "Moving image (IMG1 or PGM)")->required();
        app.add_option("--ckpt", ckpt, "Trained checkpoint")->required();
        app.add_option("--out", out, "Write the aligned moving window as IMG1");
        common.attach(app, false);
    }

    int run(std::ostream& os) const
    {
        RunConfig cfg;
        load_sidecar(cfg, ckpt);
        common.apply(cfg);
        cfg.validate();
        const Image2D f = read_image(fixed);
        const Image2D m = read_image(moving);
        const auto net = load_net_for(ckpt, f.height(), f.width(), cfg.env);
        const std::vector<PairSample> one{{"pair", f, m, std::nullopt}};
        EvalOptions opt;
        opt.workers = 1;
        opt.record_timing = false;
        opt.nmi_bins = cfg.env.similarity.nmi_bins;
        const EpisodeReport r = evaluate_agent(one, net, cfg.env, "agent", opt).front();
        os << "tx " << fmt3(r.final_t.tx) << "\n"
           << "ty " << fmt3(r.final_t.ty) << "\n"
           << "theta " << fmt3(r.final_t.theta) << "\n"
           << "steps " << r.steps << "\n"
           << "nmi " << fmt3(r.nmi) << "\n"
           << "rho " << fmt3(r.rho) << "\n";
        if (!out.empty()) write_img1(out, warp_window(m, r.final_t, f.height(), f.width()));
        return kOk;
    }
};

void write_report_bundle(const fs::path& out, const std::vector<EpisodeReport>& reports, const RunConfig& cfg,
                         std::ostream& os)
{
    write_reports(out, reports);
    const std::string text = render_summary_text(reports);
    write_text(sibling(out, ".summary.txt"), text);
    write_text(sibling(out, ".summary.csv"), render_summary_csv(reports));
    write_text(sibling(out, ".config.json"), dump_config(cfg));
    os << text;
}

struct Evaluate {
    Common common;
    std::string data;
    std::string ckpt;
    std::string out;
    std::string method;

    void attach(CLI::App& app)
    {
        app.add_option("--data", data, "Dataset directory or manifest")->required();
        app.add_option("--ckpt", ckpt, "Trained checkpoint")->required();
        app.add_option("--out", out, "Report file (JSON lines)")->required();
        app.add_option("--method", method, "Method label (default agent-<variant>)");
        common.attach(app, true);
    }

    int run(std::ostream& os) const
    {
        RunConfig cfg;
        load_sidecar(cfg, ckpt);
        common.apply(cfg);
        cfg.validate();
        const auto pairs = load_pairs(resolve_manifest(data));
        if (pairs.empty()) throw InputError("manifest lists no pairs");
        const auto net = load_net_for(ckpt, pairs.front().fixed.height(), pairs.front().fixed.width(), cfg.env);
        EvalOptions opt{common.workers, !common.no_timing, cfg.env.similarity.nmi_bins};
        const std::string label = method.empty() ? std::string("agent-") + to_string(cfg.agent.variant) : method;
        write_report_bundle(out, evaluate_agent(pairs, net, cfg.env, label, opt), cfg, os);
        return kOk;
    }
};

struct Baseline {
    Common common;
    std::string data;
    std::string out;
    std::optional<std::string> metric;
    std::optional<int> starts;
    std::optional<int> max_evals;
    std::string method = "baseline";

    void attach(CLI::App& app)
    {
        app.add_option("--data", data, "Dataset directory or manifest")->required();
        app.add_option("--out", out, "Report file (JSON lines)")->required();
        app.add_option("--metric", metric, "nmi, correlation or dissimilarity (default nmi)");
        app.add_option("--starts", starts, "Multi-start count, 1..27 (default 9)");
        app.add_option("--max-evals", max_evals, "Metric evaluations per start (default 400)");
        app.add_option("--method", method, "Method label")->capture_default_str();
        common.attach(app, true);
    }

    int run(std::ostream& os) const
    {
        RunConfig cfg;
        common.apply(cfg);
        if (metric) set_key(cfg, "baseline.metric", json(*metric).dump());
        if (starts) cfg.baseline.starts = *starts;
        if (max_evals) cfg.baseline.max_evals = *max_evals;
        cfg.validate();
        const auto pairs = load_pairs(resolve_manifest(data));
        EvalOptions opt{common.workers, !common.no_timing, cfg.env.similarity.nmi_bins};
        write_report_bundle(out, evaluate_baseline(pairs, cfg.baseline, cfg.env, method, opt), cfg, os);
        return kOk;
    }
};

struct Report {
    std::vector<std::string> files;
    std::string out;

    void attach(CLI::App& app)
    {
        app.add_option("files", files, "Report files to compare (two or more)")->required();
        app.add_option("--out", out, "Write <out>.txt and <out>.csv");
    }

    int run(std::ostream& os) const
    {
        if (files.size() < 2) throw InputError("report needs at least two report files");
        std::vector<MethodReports> sets;
        for (const auto& f : files) {
            auto reports = read_reports(f);
            if (reports.empty()) throw InputError("report file " + f + " is empty");
            std::string name = reports.front().method;
            for (const auto& s : sets) {
                if (s.method == name) {
                    name += " (" + fs::path(f).filename().string() + ")";
                    break;
                }
            }
            sets.push_back({name, std::move(reports)});
        }
        const Comparison c = compare(sets);
        const std::string text = render_comparison_text(c);
        os << text;
        if (!out.empty()) {
            write_text(out + ".txt", text);
            write_text(out + ".csv", render_comparison_csv(c));
        }
        return kOk;
    }
};

} // namespace

int exit_code_for(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Input:
    case ErrorKind::Dimension:
    case ErrorKind::Bounds: return kConfig;
    case ErrorKind::Io: return kIo;
    case ErrorKind::Numeric: return kNumeric;
    case ErrorKind::Format: return kFormat;
    case ErrorKind::Data:
    case ErrorKind::State: return kInternal;
    }
    return kInternal;
}

void request_stop() noexcept { g_stop.store(true); }
void clear_stop() noexcept { g_stop.store(false); }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Rigid slice alignment with a deep Q-network agent", "rlalign"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    GenData gen;
    Train train;
    Align align;
    Evaluate evaluate;
    Baseline baseline;
    Report report;
    auto* c_gen = app.add_subcommand("gen-data", "Generate synthetic phantom pairs and a manifest");
    gen.attach(*c_gen);
    auto* c_train = app.add_subcommand("train", "Train a Q-network agent on a dataset");
    train.attach(*c_train);
    auto* c_align = app.add_subcommand("align", "Align one image pair with a trained agent");
    align.attach(*c_align);
    auto* c_eval = app.add_subcommand("evaluate", "Run the greedy agent over a dataset");
    evaluate.attach(*c_eval);
    auto* c_base = app.add_subcommand("baseline", "Run the pattern-search registrar over a dataset");
    baseline.attach(*c_base);
    auto* c_report = app.add_subcommand("report", "Compare two or more report files");
    report.attach(*c_report);

    std::vector<std::string> rev(args.begin() + (args.empty() ? 0 : 1), args.end());
    std::reverse(rev.begin(), rev.end());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (c_gen->parsed()) return gen.run(out);
        if (c_train->parsed()) return train.run(out, err);
        if (c_align->parsed()) return align.run(out);
        if (c_eval->parsed()) return evaluate.run(out);
        if (c_base->parsed()) return baseline.run(out);
        if (c_report->parsed()) return report.run(out);
    } catch (const Error& e) {
        err << "rlalign: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "rlalign: " << e.what() << "\n";
        return kInternal;
    }
    return kInternal;
}

} // namespace rlalign::cli
