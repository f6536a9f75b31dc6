// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails. Usage: rlalign_acceptance [work_dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "cli/commands.hpp"
#include "oracles.hpp"
#include "rlalign/baseline.hpp"
#include "rlalign/checkpoint.hpp"
#include "rlalign/evalkit.hpp"
#include "rlalign/similarity.hpp"

using namespace rlalign;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

int cli_run(std::vector<std::string> args, std::string* out_text = nullptr)
{
    args.insert(args.begin(), "rlalign");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (out_text) *out_text = out.str();
    if (code != 0) std::cerr << "  rlalign " << args[1] << " exited " << code << ": " << err.str();
    return code;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::string fmt(double v, int prec = 4)
{
    std::ostringstream s;
    s.precision(prec);
    s << v;
    return s.str();
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    return quantile_sorted(v, 0.5);
}

Outcome metric_oracles()
{
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        const auto [x, y] = testing::random_pair(16, 16, rng);
        worst = std::max(worst, std::abs(correlation(x, y) - testing::brute_correlation(x, y)));
        worst = std::max(worst, std::abs(ssim(x, y) - testing::brute_ssim(x, y)));
        worst = std::max(worst, std::abs(dissimilarity(x, y) - testing::brute_dissimilarity(x, y)));
        worst = std::max(worst, std::abs(nmi(x, y) - testing::brute_nmi(x, y)));
    }
    const double t = seconds_since(t0);
    return {worst <= 1e-9 && t < 5.0, "max deviation " + fmt(worst) + " in " + fmt(t, 3) + " s"};
}

Outcome gradient_checks()
{
    const auto t0 = Clock::now();
    std::vector<std::pair<std::string, nn::NetSpec>> specs;
    specs.emplace_back("dense", nn::NetSpec::mlp(7, 5, 3));
    {
        nn::NetSpec s = nn::NetSpec::mlp(1, 5, 3);
        s.input_h = s.input_w = 6;
        s.input_c = 2;
        s.convs = {{3, 3, 1, false}};
        specs.emplace_back("conv", s);
        s.input_h = s.input_w = 9;
        s.convs = {{3, 3, 2, true}};
        specs.emplace_back("conv+bn", s);
        s.input_h = s.input_w = 6;
        s.convs = {{3, 3, 1, false}};
        s.max_pool = true;
        specs.emplace_back("maxpool", s);
    }
    for (nn::HeadKind h : {nn::HeadKind::Plain, nn::HeadKind::Dueling, nn::HeadKind::DuelingMean}) {
        nn::NetSpec s = nn::NetSpec::mlp(6, 8, 6);
        s.head = h;
        specs.emplace_back(std::string("head:") + nn::to_string(h), s);
        specs.emplace_back(std::string("shrunken:") + nn::to_string(h), testing::shrunken_spec(h));
    }
    std::size_t checked = 0, failed = 0;
    std::string failing;
    std::mt19937_64 rng(99);
    for (const auto& [name, spec] : specs) {
        nn::QNetwork<double> net(spec, 17);
        const auto input = testing::random_input(spec, 4, rng);
        std::vector<int> actions;
        std::vector<double> targets;
        for (int i = 0; i < 4; ++i) {
            actions.push_back(i % spec.actions);
            targets.push_back(0.5 * i - 1.0);
        }
        const auto r = testing::gradient_check(net, input, actions, targets);
        checked += r.checked;
        failed += r.failed;
        if (r.failed > 0) failing += " " + name;
    }
    const double t = seconds_since(t0);
    return {failed == 0 && t < 60.0, std::to_string(specs.size()) + " networks, " + std::to_string(checked) +
                                         " scalars, " + std::to_string(failed) + " mismatches" + failing + ", " +
                                         fmt(t, 3) + " s"};
}

Outcome telescoping()
{
    const auto pairs = generate_samples(testing::small_pairs(25, 77));
    EnvConfig cfg;
    cfg.max_steps = 40;
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> act(0, kActionCount - 1);
    double worst = 0.0;
    for (int ep = 0; ep < 100; ++ep) {
        const auto& p = pairs[static_cast<std::size_t>(ep) % pairs.size()];
        const RegistrationEnv env(p.fixed, p.moving, cfg, p.truth);
        EnvState s = env.reset();
        const double d0 = s.dissimilarity;
        double sum = s.cumulative_reward;
        while (!s.terminal) {
            const auto r = env.step(s, act(rng));
            sum += r.reward;
            s = r.next;
        }
        const double expected = d0 - s.dissimilarity + (s.reached_goal ? cfg.bonus : 0.0);
        if (s.step_index == 0) continue;
        worst = std::max(worst, std::abs(sum - expected));
    }
    return {worst <= 1e-6, "max |sum r - (D0 - DT + bonus)| = " + fmt(worst)};
}

Outcome chain_mdp()
{
    const auto t0 = Clock::now();
    const AgentConfig cfg = testing::chain_agent_config(5);
    DqnTrainer trainer(cfg, testing::chain_net_spec());
    testing::ChainMdp env;
    TrainHooks hooks;
    hooks.record_timing = false;
    trainer.train(env, hooks);
    const double err = testing::chain_q_error(trainer.online(), cfg.gamma);
    const double t = seconds_since(t0);
    return {err < 0.05 && trainer.global_step() <= 5000 && t < 120.0,
            "max |Q - Q*| = " + fmt(err) + " after " + std::to_string(trainer.global_step()) + " steps, " +
                fmt(t, 3) + " s"};
}

struct DeskRun {
    bool trained = false;
    fs::path ckpt;
    fs::path eval;
    double seconds = 0.0;
};

DeskRun desk_training(const fs::path& dir)
{
    DeskRun run;
    const auto t0 = Clock::now();
    run.ckpt = dir / "desk.bin";
    run.eval = dir / "desk_eval.jsonl";
    const std::string train = (dir / "train").string();
    const std::string test = (dir / "test").string();
    const bool ok = cli_run({"gen-data", "--out", train, "--pairs", "2000", "--range", "3", "--translations-only",
                             "--seed", "11"}) == 0 &&
                    cli_run({"gen-data", "--out", test, "--pairs", "100", "--range", "3", "--translations-only",
                             "--seed", "12"}) == 0 &&
                    cli_run({"train", "--data", train, "--out", run.ckpt.string(), "--preset", "desk"}) == 0 &&
                    cli_run({"evaluate", "--data", test, "--ckpt", run.ckpt.string(), "--out",
                             run.eval.string()}) == 0;
    run.trained = ok;
    run.seconds = seconds_since(t0);
    return run;
}

Outcome desk_learning(const DeskRun& run)
{
    if (!run.trained) return {false, "desk pipeline did not complete"};
    const auto reports = read_reports(run.eval);
    std::vector<double> d0, d1;
    int reached = 0;
    for (const auto& r : reports) {
        d0.push_back(r.initial_d);
        d1.push_back(r.final_d);
        reached += r.reached_goal ? 1 : 0;
    }
    const double m0 = median(d0), m1 = median(d1);
    const double success = static_cast<double>(reached) / static_cast<double>(reports.size());
    const bool pass = m1 < 0.5 * m0 && success >= 0.6 && run.seconds < 1800.0;
    return {pass, "median D " + fmt(m0) + " -> " + fmt(m1) + ", success " + fmt(100 * success, 3) + "% of " +
                      std::to_string(reports.size()) + ", " + fmt(run.seconds, 4) + " s"};
}

Outcome baseline_recovery()
{
    const auto t0 = Clock::now();
    GenDataOptions opt;
    opt.pairs = 100;
    opt.seed = 61;
    opt.pair.range = 5.0;
    opt.phantom.speckle_looks = 1e12;  // effectively noise-free
    const auto pairs = generate_samples(opt);
    BaselineConfig cfg;
    int good = 0;
    for (const auto& p : pairs) {
        const auto r = register_rigid(p.fixed, p.moving, cfg);
        const auto want = invert(*p.truth);
        if (std::abs(r.transform.tx - want.tx) <= 0.5 && std::abs(r.transform.ty - want.ty) <= 0.5 &&
            std::abs(r.transform.theta - want.theta) <= 0.5) {
            ++good;
        }
    }
    const double t = seconds_since(t0);
    return {good >= 95 && t < 120.0, std::to_string(good) + "/100 within 0.5 px / 0.5 deg, " + fmt(t, 3) + " s"};
}

Outcome agent_vs_baseline(const DeskRun& run, const fs::path& dir)
{
    if (!run.trained) return {false, "no trained agent"};
    const std::string data = (dir / "speckled").string();
    const std::string agent = (dir / "cmp_agent.jsonl").string();
    const std::string base = (dir / "cmp_baseline.jsonl").string();
    std::string table;
    const bool ok =
        cli_run({"gen-data", "--out", data, "--pairs", "100", "--range", "3", "--translations-only", "--noise",
                 "20", "--seed", "13"}) == 0 &&
        cli_run({"evaluate", "--data", data, "--ckpt", run.ckpt.string(), "--out", agent, "--method", "agent"}) ==
            0 &&
        cli_run({"baseline", "--data", data, "--out", base, "--set", "translations_only=true", "--starts", "1", "--max-evals",
                 "50", "--method", "baseline"}) == 0 &&
        cli_run({"report", agent, base, "--out", (dir / "comparison").string()}, &table) == 0;
    if (!ok) return {false, "comparison pipeline failed"};
    std::cout << table;
    const auto a = read_reports(agent);
    const auto b = read_reports(base);
    return {!table.empty(), "mean rho agent " + fmt(summarize(a, ReportMetric::Rho).mean) + " vs baseline " +
                                fmt(summarize(b, ReportMetric::Rho).mean) + " (informational)"};
}

Outcome schedule_anchors()
{
    const ExplorationSchedule s;
    const bool ok = s.value(0) == 1.0 && s.value(20) == 0.1 && s.value(100) == 0.01 && s.value(150) == 0.01;
    return {ok, "eps(0)=" + fmt(s.value(0)) + " eps(20)=" + fmt(s.value(20)) + " eps(100)=" + fmt(s.value(100))};
}

Outcome determinism(const fs::path& dir)
{
    std::vector<std::string> files{"data/manifest.jsonl", "data/pair_00005_fixed.img1", "data/pair_00005_moving.img1",
                                   "ck.bin", "ck.log.jsonl", "aligned.img1", "align.txt", "eval.jsonl",
                                   "eval.summary.csv"};
    auto once = [&](const fs::path& d) {
        fs::remove_all(d);
        fs::create_directories(d);
        const std::string data = (d / "data").string();
        std::string align_out;
        const bool ok =
            cli_run({"gen-data", "--out", data, "--pairs", "8", "--seed", "3"}) == 0 &&
            cli_run({"train", "--data", data, "--out", (d / "ck.bin").string(), "--preset", "smoke", "--workers",
                     "1", "--no-timing"}) == 0 &&
            cli_run({"align", "--fixed", (d / "data/pair_00005_fixed.img1").string(), "--moving",
                     (d / "data/pair_00005_moving.img1").string(), "--ckpt", (d / "ck.bin").string(), "--out",
                     (d / "aligned.img1").string()},
                    &align_out) == 0 &&
            cli_run({"evaluate", "--data", data, "--ckpt", (d / "ck.bin").string(), "--out",
                     (d / "eval.jsonl").string(), "--no-timing"}) == 0;
        std::ofstream(d / "align.txt") << align_out;
        return ok;
    };
    if (!once(dir / "det_a") || !once(dir / "det_b")) return {false, "pipeline failed"};
    std::string differing;
    for (const auto& f : files) {
        if (!fs::exists(dir / "det_a" / f) || slurp(dir / "det_a" / f) != slurp(dir / "det_b" / f)) {
            differing += " " + f;
        }
    }
    return {differing.empty(), differing.empty() ? std::to_string(files.size()) + " outputs byte-identical"
                                                 : "differs:" + differing};
}

Outcome checkpoint_chain(const DeskRun& run, const fs::path& dir)
{
    if (!run.trained) return {false, "no trained checkpoint"};
    const auto net = nn::load_checkpoint(run.ckpt);
    const auto copy = dir / "roundtrip.bin";
    nn::save_checkpoint(net, copy);
    const bool exact = slurp(copy) == slurp(run.ckpt) && nn::load_checkpoint(copy) == net;
    std::string align_out;
    const bool chain = cli_run({"align", "--fixed", (dir / "test/pair_00000_fixed.img1").string(), "--moving",
                                (dir / "test/pair_00000_moving.img1").string(), "--ckpt", run.ckpt.string()},
                               &align_out) == 0 &&
                       align_out.find("rho") != std::string::npos && fs::exists(run.eval);
    return {exact && chain, std::string(exact ? "bit-exact" : "NOT bit-exact") + ", train -> align -> evaluate " +
                                (chain ? "ok" : "failed")};
}

} // namespace

int main(int argc, char** argv)
{
    const fs::path dir = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "rlalign_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);

    int failures = 0;
    auto report = [&](int n, const std::string& title, const std::function<Outcome()>& fn) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << title << " (" << o.detail << ")"
                  << std::endl;
    };

    report(1, "metric oracles", metric_oracles);
    report(2, "gradient checks", gradient_checks);
    report(3, "reward telescoping", telescoping);
    report(4, "chain MDP convergence", chain_mdp);
    DeskRun desk;
    try {
        desk = desk_training(dir);
    } catch (const std::exception& e) {
        std::cerr << "desk run failed: " << e.what() << "\n";
    }
    report(5, "desk learning", [&] { return desk_learning(desk); });
    report(6, "baseline recovery", baseline_recovery);
    report(7, "agent vs baseline comparison", [&] { return agent_vs_baseline(desk, dir); });
    report(8, "schedule anchors", schedule_anchors);
    report(9, "determinism", [&] { return determinism(dir); });
    report(10, "checkpoint round trip and CLI chain", [&] { return checkpoint_chain(desk, dir); });
    return failures == 0 ? 0 : 1;
}
