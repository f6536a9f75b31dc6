#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rlalign/baseline.hpp"
#include "rlalign/env.hpp"
#include "rlalign/neural.hpp"

namespace rlalign {

// Mean, population std and linearly interpolated quartiles.
struct StatSummary {
    double mean = 0.0;
    double std = 0.0;
    double q25 = 0.0;
    double median = 0.0;
    double q75 = 0.0;
};

enum class ReportMetric { Nmi, Rho, Score, Time, Steps, InitialD, FinalD };

const char* to_string(ReportMetric m) noexcept;

// Quantile at p in [0,1] by interpolating at position p*(n-1) of the
// sorted values.
double quantile_sorted(std::span<const double> sorted, double p);
StatSummary summarize(std::span<const double> values);
// Reports without a value for the metric (null score) are skipped.
StatSummary summarize(std::span<const EpisodeReport> reports, ReportMetric metric);
std::vector<double> metric_values(std::span<const EpisodeReport> reports, ReportMetric metric);

std::string report_line(const EpisodeReport& r);
EpisodeReport parse_report_line(const std::string& line);
void write_reports(const std::filesystem::path& path, std::span<const EpisodeReport> reports);
std::vector<EpisodeReport> read_reports(const std::filesystem::path& path);

struct EvalOptions {
    int workers = 1;
    bool record_timing = true;
    int nmi_bins = 32;
};

// One greedy episode per pair, in input order.
std::vector<EpisodeReport> evaluate_agent(std::span<const PairSample> pairs, const nn::QNetwork<float>& net,
                                          const EnvConfig& env, const std::string& method,
                                          const EvalOptions& opt = {});

// Baseline registration per pair. Wall time covers the search only.
std::vector<EpisodeReport> evaluate_baseline(std::span<const PairSample> pairs, const BaselineConfig& cfg,
                                             const EnvConfig& env, const std::string& method,
                                             const EvalOptions& opt = {});

// Summary table rows (nmi, rho, score, time, final_d) as CSV with header
// method,metric,mean,std,q25,median,q75.
std::string render_summary_csv(std::span<const EpisodeReport> reports);
std::string render_summary_text(std::span<const EpisodeReport> reports);

struct MethodReports {
    std::string method;
    std::vector<EpisodeReport> reports;
};

struct Comparison {
    std::vector<std::string> methods;
    std::vector<ReportMetric> metrics;
    // cells[method][metric]; `present` false when the metric has no values.
    std::vector<std::vector<StatSummary>> cells;
    std::vector<std::vector<bool>> present;
};

// Needs at least two report sets over identical pair_id sets.
Comparison compare(std::span<const MethodReports> sets);
std::string render_comparison_text(const Comparison& c);
std::string render_comparison_csv(const Comparison& c);

} // namespace rlalign
