#include "rlalign/evalkit.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rlalign/agent.hpp"
#include "rlalign/image_io.hpp"

namespace rlalign {

using nlohmann::json;

const char* to_string(ReportMetric m) noexcept
{
    switch (m) {
    case ReportMetric::Nmi: return "nmi";
    case ReportMetric::Rho: return "rho";
    case ReportMetric::Score: return "score";
    case ReportMetric::Time: return "time";
    case ReportMetric::Steps: return "steps";
    case ReportMetric::InitialD: return "initial_d";
    case ReportMetric::FinalD: return "final_d";
    }
    return "?";
}

double quantile_sorted(std::span<const double> sorted, double p)
{
    if (sorted.empty()) throw InputError("quantile of an empty list");
    if (!(p >= 0.0 && p <= 1.0)) throw InputError("quantile level must lie in [0,1]");
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

StatSummary summarize(std::span<const double> values)
{
    if (values.empty()) throw InputError("cannot summarize an empty list");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    // Sum the sorted copy so the result does not depend on input order.
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    StatSummary s;
    s.mean = mean;
    s.std = std::sqrt(ss / static_cast<double>(v.size()));
    s.q25 = quantile_sorted(v, 0.25);
    s.median = quantile_sorted(v, 0.5);
    s.q75 = quantile_sorted(v, 0.75);
    return s;
}

std::vector<double> metric_values(std::span<const EpisodeReport> reports, ReportMetric metric)
{
    std::vector<double> out;
    out.reserve(reports.size());
    for (const auto& r : reports) {
        switch (metric) {
        case ReportMetric::Nmi: out.push_back(r.nmi); break;
        case ReportMetric::Rho: out.push_back(r.rho); break;
        case ReportMetric::Score:
            if (r.score) out.push_back(*r.score);
            break;
        case ReportMetric::Time: out.push_back(r.wall_s); break;
        case ReportMetric::Steps: out.push_back(r.steps); break;
        case ReportMetric::InitialD: out.push_back(r.initial_d); break;
        case ReportMetric::FinalD: out.push_back(r.final_d); break;
        }
    }
    return out;
}

StatSummary summarize(std::span<const EpisodeReport> reports, ReportMetric metric)
{
    const auto v = metric_values(reports, metric);
    return summarize(std::span<const double>(v));
}

namespace {

json transform_json(const RigidTransform2D& t)
{
    return {{"tx", t.tx}, {"ty", t.ty}, {"theta", t.theta}};
}

RigidTransform2D transform_from(const json& j)
{
    return {j.at("tx").get<double>(), j.at("ty").get<double>(), j.at("theta").get<double>()};
}

} // namespace

std::string report_line(const EpisodeReport& r)
{
    json j;
    j["pair_id"] = r.pair_id;
    j["method"] = r.method;
    j["nmi"] = r.nmi;
    j["rho"] = r.rho;
    j["score"] = r.score ? json(*r.score) : json(nullptr);
    j["steps"] = r.steps;
    j["wall_s"] = r.wall_s;
    j["final_t"] = transform_json(r.final_t);
    j["truth_t"] = r.truth_t ? transform_json(*r.truth_t) : json(nullptr);
    j["initial_d"] = r.initial_d;
    j["final_d"] = r.final_d;
    j["reached_goal"] = r.reached_goal;
    return j.dump();
}

EpisodeReport parse_report_line(const std::string& line)
{
    EpisodeReport r;
    try {
        const json j = json::parse(line);
        r.pair_id = j.at("pair_id").get<std::string>();
        r.method = j.at("method").get<std::string>();
        r.nmi = j.at("nmi").get<double>();
        r.rho = j.at("rho").get<double>();
        if (!j.at("score").is_null()) r.score = j["score"].get<double>();
        r.steps = j.at("steps").get<int>();
        r.wall_s = j.at("wall_s").get<double>();
        r.final_t = transform_from(j.at("final_t"));
        if (!j.at("truth_t").is_null()) r.truth_t = transform_from(j["truth_t"]);
        r.initial_d = j.value("initial_d", 0.0);
        r.final_d = j.value("final_d", 0.0);
        r.reached_goal = j.value("reached_goal", false);
    } catch (const json::exception& ex) {
        throw FormatError(std::string("malformed report line: ") + ex.what());
    }
    return r;
}

void write_reports(const std::filesystem::path& path, std::span<const EpisodeReport> reports)
{
    std::string s;
    for (const auto& r : reports) s += report_line(r) + "\n";
    write_file_bytes(path, std::vector<unsigned char>(s.begin(), s.end()));
}

std::vector<EpisodeReport> read_reports(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report file " + path.string());
    std::vector<EpisodeReport> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(parse_report_line(line));
    }
    return out;
}

namespace {

// Runs job(i) for i in [0, n) on up to `workers` threads. The first
// exception (lowest index) is rethrown after all threads finish.
template <class Job>
void parallel_for(std::size_t n, int workers, Job&& job)
{
    const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::size_t err_index = n;
    std::exception_ptr err;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    job(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (i < err_index) {
                        err_index = i;
                        err = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

} // namespace

std::vector<EpisodeReport> evaluate_agent(std::span<const PairSample> pairs, const nn::QNetwork<float>& net,
                                          const EnvConfig& env, const std::string& method, const EvalOptions& opt)
{
    const auto& spec = net.spec();
    if (spec.input_c != env.history_n) throw FormatError("checkpoint history depth does not match env history_n");
    const std::vector<int> allowed = env.allowed_actions();
    std::vector<EpisodeReport> out(pairs.size());
    parallel_for(pairs.size(), opt.workers, [&](std::size_t i) {
        const PairSample& p = pairs[i];
        if (p.fixed.height() != spec.input_h || p.fixed.width() != spec.input_w) {
            throw FormatError("pair " + p.pair_id + " does not match the network input size");
        }
        const RegistrationEnv e(p.fixed, p.moving, env, p.truth);
        Policy greedy = [&](const EnvState& s) {
            const Observation* one[] = {&s.stack};
            const auto q = net.infer(pack_observations(one));
            return greedy_action(q.data, allowed);
        };
        EpisodeReport r = run_episode(e, greedy, opt.nmi_bins, opt.record_timing);
        r.pair_id = p.pair_id;
        r.method = method;
        out[i] = std::move(r);
    });
    return out;
}

std::vector<EpisodeReport> evaluate_baseline(std::span<const PairSample> pairs, const BaselineConfig& cfg,
                                             const EnvConfig& env, const std::string& method,
                                             const EvalOptions& opt)
{
    cfg.validate();
    std::vector<EpisodeReport> out(pairs.size());
    parallel_for(pairs.size(), opt.workers, [&](std::size_t i) {
        const PairSample& p = pairs[i];
        const auto t0 = std::chrono::steady_clock::now();
        const BaselineResult res = register_rigid(p.fixed, p.moving, cfg);
        const auto t1 = std::chrono::steady_clock::now();
        const Image2D view = warp_window(p.moving, res.transform, p.fixed.height(), p.fixed.width());
        const Image2D start = warp_window(p.moving, RigidTransform2D::identity(), p.fixed.height(), p.fixed.width());
        EpisodeReport r;
        r.pair_id = p.pair_id;
        r.method = method;
        r.nmi = nmi(p.fixed, view, opt.nmi_bins);
        r.rho = correlation(p.fixed, view);
        r.steps = res.evals;
        r.wall_s = opt.record_timing ? std::chrono::duration<double>(t1 - t0).count() : 0.0;
        r.final_t = res.transform;
        r.truth_t = p.truth;
        r.initial_d = dissimilarity(p.fixed, start, env.similarity);
        r.final_d = dissimilarity(p.fixed, view, env.similarity);
        r.reached_goal = r.final_d <= env.epsilon_dist;
        out[i] = std::move(r);
    });
    return out;
}

namespace {

constexpr ReportMetric kSummaryMetrics[] = {ReportMetric::Nmi, ReportMetric::Rho, ReportMetric::Score,
                                            ReportMetric::Time, ReportMetric::FinalD};

std::string fixed3(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string method_of(std::span<const EpisodeReport> reports)
{
    return reports.empty() ? std::string() : reports.front().method;
}

std::string pad(const std::string& s, std::size_t width, bool right = false)
{
    if (s.size() >= width) return s;
    const std::string fill(width - s.size(), ' ');
    return right ? fill + s : s + fill;
}

} // namespace

std::string render_summary_csv(std::span<const EpisodeReport> reports)
{
    std::string out = "method,metric,mean,std,q25,median,q75\n";
    const std::string method = method_of(reports);
    for (ReportMetric m : kSummaryMetrics) {
        const auto v = metric_values(reports, m);
        if (v.empty()) continue;
        const StatSummary s = summarize(std::span<const double>(v));
        out += method + "," + to_string(m) + "," + fixed3(s.mean) + "," + fixed3(s.std) + "," + fixed3(s.q25) + "," +
               fixed3(s.median) + "," + fixed3(s.q75) + "\n";
    }
    return out;
}

std::string render_summary_text(std::span<const EpisodeReport> reports)
{
    const std::string method = method_of(reports);
    std::ostringstream os;
    os << "method: " << method << "  pairs: " << reports.size() << "\n";
    os << pad("metric", 10) << pad("mean", 10, true) << pad("std", 10, true) << pad("q25", 10, true)
       << pad("median", 10, true) << pad("q75", 10, true) << "\n";
    for (ReportMetric m : kSummaryMetrics) {
        const auto v = metric_values(reports, m);
        if (v.empty()) continue;
        const StatSummary s = summarize(std::span<const double>(v));
        os << pad(to_string(m), 10) << pad(fixed3(s.mean), 10, true) << pad(fixed3(s.std), 10, true)
           << pad(fixed3(s.q25), 10, true) << pad(fixed3(s.median), 10, true) << pad(fixed3(s.q75), 10, true)
           << "\n";
    }
    return os.str();
}

Comparison compare(std::span<const MethodReports> sets)
{
    if (sets.size() < 2) throw InputError("comparison needs at least two report sets");
    auto ids_of = [](const MethodReports& m) {
        std::set<std::string> ids;
        for (const auto& r : m.reports) ids.insert(r.pair_id);
        return ids;
    };
    const auto reference = ids_of(sets.front());
    if (reference.empty()) throw InputError("report set '" + sets.front().method + "' is empty");
    for (std::size_t i = 1; i < sets.size(); ++i) {
        const auto ids = ids_of(sets[i]);
        for (const auto& id : reference) {
            if (!ids.count(id)) throw InputError("pair_id '" + id + "' missing from '" + sets[i].method + "'");
        }
        for (const auto& id : ids) {
            if (!reference.count(id)) throw InputError("pair_id '" + id + "' missing from '" + sets[0].method + "'");
        }
    }

    Comparison c;
    c.metrics = {ReportMetric::Nmi, ReportMetric::Rho, ReportMetric::Score, ReportMetric::Time};
    for (const auto& s : sets) {
        c.methods.push_back(s.method);
        std::vector<StatSummary> row;
        std::vector<bool> has;
        for (ReportMetric m : c.metrics) {
            const auto v = metric_values(s.reports, m);
            has.push_back(!v.empty());
            row.push_back(v.empty() ? StatSummary{} : summarize(std::span<const double>(v)));
        }
        c.cells.push_back(std::move(row));
        c.present.push_back(std::move(has));
    }
    return c;
}

std::string render_comparison_text(const Comparison& c)
{
    std::size_t name_w = 6;
    for (const auto& m : c.methods) name_w = std::max(name_w, m.size());
    std::ostringstream os;
    os << pad("method", name_w + 2);
    for (ReportMetric m : c.metrics) os << pad(to_string(m), 18, true);
    os << "\n";
    for (std::size_t i = 0; i < c.methods.size(); ++i) {
        os << pad(c.methods[i], name_w + 2);
        for (std::size_t k = 0; k < c.metrics.size(); ++k) {
            const std::string cell = c.present[i][k]
                                         ? fixed3(c.cells[i][k].mean) + " +- " + fixed3(c.cells[i][k].std)
                                         : std::string("n/a");
            os << pad(cell, 18, true);
        }
        os << "\n";
    }
    return os.str();
}

std::string render_comparison_csv(const Comparison& c)
{
    std::string out = "method";
    for (ReportMetric m : c.metrics) out += std::string(",") + to_string(m) + "_mean," + to_string(m) + "_std";
    out += "\n";
    for (std::size_t i = 0; i < c.methods.size(); ++i) {
        out += c.methods[i];
        for (std::size_t k = 0; k < c.metrics.size(); ++k) {
            if (c.present[i][k]) {
                out += "," + fixed3(c.cells[i][k].mean) + "," + fixed3(c.cells[i][k].std);
            } else {
                out += ",,";
            }
        }
        out += "\n";
    }
    return out;
}

} // namespace rlalign
