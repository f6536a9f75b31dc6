#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "rlalign/evalkit.hpp"

using namespace rlalign;

namespace {

EpisodeReport report(const std::string& id, double rho, std::optional<double> score = std::nullopt)
{
    EpisodeReport r;
    r.pair_id = id;
    r.method = "m";
    r.rho = rho;
    r.nmi = rho / 2;
    r.score = score;
    r.final_t = {0.5, -1.25, 0.125};
    r.truth_t = RigidTransform2D{1, 2, 3};
    r.initial_d = 0.3;
    r.final_d = 0.1;
    r.steps = 7;
    return r;
}

} // namespace

TEST_CASE("summary statistics of a known sample")
{
    const std::vector<double> v{1, 2, 3, 4};
    const auto s = summarize(v);
    CHECK(s.mean == doctest::Approx(2.5));
    CHECK(s.std == doctest::Approx(std::sqrt(1.25)));
    CHECK(s.q25 == doctest::Approx(1.75));
    CHECK(s.median == doctest::Approx(2.5));
    CHECK(s.q75 == doctest::Approx(3.25));
    const std::vector<double> one{7};
    const auto t = summarize(one);
    CHECK(t.std == 0.0);
    CHECK(t.q25 == 7.0);
    CHECK(t.q75 == 7.0);
    CHECK_THROWS_AS(summarize(std::vector<double>{}), InputError);
}

TEST_CASE("summaries ignore input order")
{
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    std::vector<double> v(37);
    for (auto& x : v) x = n(rng);
    const auto a = summarize(v);
    std::shuffle(v.begin(), v.end(), rng);
    const auto b = summarize(v);
    CHECK(a.median == b.median);
    CHECK(a.q25 == b.q25);
    CHECK(a.mean == doctest::Approx(b.mean));
    CHECK(a.q25 <= a.median);
    CHECK(a.median <= a.q75);
}

TEST_CASE("report lines round-trip")
{
    const auto r = report("p1", 0.75, 3.5);
    const auto back = parse_report_line(report_line(r));
    CHECK(back.pair_id == "p1");
    CHECK(back.rho == r.rho);
    CHECK(back.score == r.score);
    CHECK(back.final_t == r.final_t);
    CHECK(back.truth_t == r.truth_t);
    CHECK(report_line(back) == report_line(r));
    const auto none = parse_report_line(report_line(report("p2", 0.1)));
    CHECK(!none.score);
    CHECK_THROWS_AS(parse_report_line("{not json"), FormatError);
}

TEST_CASE("null scores are skipped by the score summary")
{
    std::vector<EpisodeReport> rs{report("a", 0.5), report("b", 0.7, 2.0)};
    CHECK(summarize(rs, ReportMetric::Score).mean == 2.0);
    CHECK(metric_values(rs, ReportMetric::Rho).size() == 2);
}

TEST_CASE("comparison requires matching pair sets")
{
    MethodReports a{"agent", {report("a", 0.5, 1.0), report("b", 0.6, 1.0)}};
    MethodReports b{"baseline", {report("b", 0.4), report("a", 0.3)}};
    const std::vector<MethodReports> ok{a, b};
    const Comparison c = compare(ok);
    CHECK(c.methods == std::vector<std::string>{"agent", "baseline"});
    const std::string text = render_comparison_text(c);
    CHECK(text.find("agent") != std::string::npos);
    CHECK(text.find("baseline") != std::string::npos);
    const std::string csv = render_comparison_csv(c);
    CHECK(csv.rfind("method,nmi_mean,nmi_std,rho_mean,rho_std", 0) == 0);
    CHECK(csv.find("\nagent,0.275,0.025,0.550,0.050") != std::string::npos);

    MethodReports d{"other", {report("a", 0.5), report("c", 0.1)}};
    const std::vector<MethodReports> bad{a, d};
    try {
        compare(bad);
        FAIL("expected InputError");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("missing from 'other'") != std::string::npos);
    }
    const std::vector<MethodReports> single{a};
    CHECK_THROWS_AS(compare(single), InputError);
}

TEST_CASE("summary CSV and text agree")
{
    std::vector<EpisodeReport> rs{report("a", 0.5, 1.0), report("b", 0.7, 2.0), report("c", 0.9, 4.0)};
    const std::string csv = render_summary_csv(rs);
    const std::string text = render_summary_text(rs);
    CHECK(csv.find("m,rho,0.700") != std::string::npos);
    CHECK(text.find("0.700") != std::string::npos);
    for (const char* metric : {"nmi", "rho", "score", "time", "final_d"}) {
        CHECK(csv.find(std::string(",") + metric + ",") != std::string::npos);
    }
}

TEST_CASE("agent and baseline evaluation are deterministic and order preserving")
{
    GenDataOptions gen;
    gen.pairs = 4;
    gen.seed = 31;
    const auto pairs = generate_samples(gen);
    EnvConfig env;
    env.max_steps = 5;
    AgentConfig acfg;
    const nn::QNetwork<float> net(registration_spec(acfg, 84, 84, env.history_n), 3);
    EvalOptions opt;
    opt.record_timing = false;
    const auto a = evaluate_agent(pairs, net, env, "agent", opt);
    opt.workers = 3;
    const auto b = evaluate_agent(pairs, net, env, "agent", opt);
    REQUIRE(a.size() == pairs.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].pair_id == pairs[i].pair_id);
        CHECK(report_line(a[i]) == report_line(b[i]));
    }
    BaselineConfig bcfg;
    bcfg.starts = 1;
    bcfg.max_evals = 30;
    const auto c = evaluate_baseline(pairs, bcfg, env, "baseline", opt);
    CHECK(c.size() == pairs.size());
    CHECK(!c[0].score);

    EnvConfig two_frames = env;
    two_frames.history_n = 2;
    CHECK_THROWS_AS(evaluate_agent(pairs, net, two_frames, "agent", opt), FormatError);
}

TEST_CASE("report files round-trip")
{
    const auto path = std::filesystem::temp_directory_path() / "rlalign_reports_test.jsonl";
    std::vector<EpisodeReport> rs{report("a", 0.5, 1.0), report("b", 0.7)};
    write_reports(path, rs);
    const auto back = read_reports(path);
    REQUIRE(back.size() == 2);
    CHECK(report_line(back[1]) == report_line(rs[1]));
    CHECK_THROWS_AS(read_reports("/nonexistent/x.jsonl"), IoError);
}
