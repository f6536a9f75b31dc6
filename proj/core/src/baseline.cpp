#include "rlalign/baseline.hpp"

#include <algorithm>
#include <string>

namespace rlalign {

const char* to_string(BaselineMetric m) noexcept
{
    switch (m) {
    case BaselineMetric::Nmi: return "nmi";
    case BaselineMetric::Correlation: return "correlation";
    case BaselineMetric::Dissimilarity: return "dissimilarity";
    }
    return "?";
}

BaselineMetric parse_baseline_metric(std::string_view name)
{
    if (name == "nmi") return BaselineMetric::Nmi;
    if (name == "correlation") return BaselineMetric::Correlation;
    if (name == "dissimilarity") return BaselineMetric::Dissimilarity;
    throw ConfigError("unknown baseline metric '" + std::string(name) + "' (nmi|correlation|dissimilarity)");
}

void BaselineConfig::validate() const
{
    if (starts < 1 || starts > 27) throw ConfigError("baseline starts must lie in [1, 27]");
    if (max_evals < 1) throw ConfigError("baseline max_evals must be >= 1");
    for (double s : initial_step) {
        if (!(s > 0.0)) throw ConfigError("baseline initial steps must be positive");
    }
    if (!(shrink > 0.0 && shrink < 1.0)) throw ConfigError("baseline shrink must lie in (0,1)");
    if (!(tol > 0.0)) throw ConfigError("baseline tol must be positive");
    if (!(start_extent >= 0.0)) throw ConfigError("baseline start_extent must be non-negative");
    if (!(param_bound > 0.0)) throw ConfigError("baseline param_bound must be positive");
    if (nmi_bins < 2) throw ConfigError("nmi_bins must be >= 2");
    similarity.validate();
}

std::vector<RigidTransform2D> baseline_starts(const BaselineConfig& cfg)
{
    const double g = cfg.start_extent;
    const double offsets[3] = {0.0, -g, g};
    std::vector<RigidTransform2D> out;
    for (double th : offsets) {
        if (cfg.translations_only && th != 0.0) break;
        for (double ty : offsets) {
            for (double tx : offsets) out.push_back({tx, ty, th});
        }
    }
    if (static_cast<int>(out.size()) > cfg.starts) out.resize(static_cast<std::size_t>(cfg.starts));
    return out;
}

double baseline_metric(const Image2D& fixed, const Image2D& moving, const RigidTransform2D& t,
                       const BaselineConfig& cfg)
{
    const Image2D view = warp_window(moving, t, fixed.height(), fixed.width());
    switch (cfg.metric) {
    case BaselineMetric::Nmi: return nmi(fixed, view, cfg.nmi_bins);
    case BaselineMetric::Correlation: return correlation(fixed, view);
    case BaselineMetric::Dissimilarity: return dissimilarity(fixed, view, cfg.similarity);
    }
    return 0.0;
}

namespace {

double& component(RigidTransform2D& t, int i)
{
    return i == 0 ? t.tx : (i == 1 ? t.ty : t.theta);
}

} // namespace

BaselineResult register_rigid(const Image2D& fixed, const Image2D& moving, const BaselineConfig& cfg)
{
    cfg.validate();
    if (fixed.empty()) throw DimensionError("baseline needs a non-empty fixed image");
    const int mh = moving.height() - fixed.height();
    const int mw = moving.width() - fixed.width();
    if (mh < 0 || mw < 0 || mh % 2 != 0 || mw % 2 != 0) {
        throw DimensionError("moving image must match fixed or exceed it by an even margin");
    }

    // Internally maximize; dissimilarity is negated.
    const double sign = cfg.metric == BaselineMetric::Dissimilarity ? -1.0 : 1.0;
    auto score = [&](const RigidTransform2D& t) { return sign * baseline_metric(fixed, moving, t, cfg); };
    const int params = cfg.translations_only ? 2 : 3;

    BaselineResult best;
    double best_score = 0.0;
    int total_evals = 0;
    const auto starts = baseline_starts(cfg);
    for (std::size_t si = 0; si < starts.size(); ++si) {
        RigidTransform2D x = starts[si];
        double fx = score(x);
        int evals = 1;
        std::array<double, 3> step = cfg.initial_step;
        while (evals < cfg.max_evals) {
            RigidTransform2D cand = x;
            double f_cand = fx;
            bool improved = false;
            for (int p = 0; p < params && evals < cfg.max_evals; ++p) {
                for (double dir : {1.0, -1.0}) {
                    if (evals >= cfg.max_evals) break;
                    RigidTransform2D y = x;
                    double& v = component(y, p);
                    v = std::clamp(v + dir * step[static_cast<std::size_t>(p)], -cfg.param_bound, cfg.param_bound);
                    const double fy = score(y);
                    ++evals;
                    if (fy > f_cand) {
                        cand = y;
                        f_cand = fy;
                        improved = true;
                    }
                }
            }
            if (improved) {
                x = cand;
                fx = f_cand;
                continue;
            }
            for (double& s : step) s *= cfg.shrink;
            double largest = 0.0;
            for (int p = 0; p < params; ++p) largest = std::max(largest, step[static_cast<std::size_t>(p)]);
            if (largest < cfg.tol) break;
        }
        total_evals += evals;
        if (si == 0 || fx > best_score) {
            best_score = fx;
            best.transform = x;
            best.best_start = static_cast<int>(si);
        }
    }
    best.metric = sign * best_score;
    best.evals = total_evals;
    return best;
}

} // namespace rlalign
