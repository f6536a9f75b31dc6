#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "rlalign/image.hpp"
#include "rlalign/similarity.hpp"

namespace rlalign {

enum class BaselineMetric { Nmi, Correlation, Dissimilarity };

const char* to_string(BaselineMetric m) noexcept;
BaselineMetric parse_baseline_metric(std::string_view name);

struct BaselineConfig {
    BaselineMetric metric = BaselineMetric::Nmi;
    int starts = 9;
    // Metric evaluations allowed per start.
    int max_evals = 400;
    std::array<double, 3> initial_step = {2.0, 2.0, 2.0};
    double shrink = 0.5;
    double tol = 0.05;
    // Starting grid spans [-start_extent, start_extent] per parameter.
    double start_extent = 2.5;
    double param_bound = 10.0;
    bool translations_only = false;
    int nmi_bins = 32;
    SimilarityConfig similarity;

    void validate() const;
};

struct BaselineResult {
    RigidTransform2D transform;
    double metric = 0.0;
    int evals = 0;
    int best_start = 0;
};

// Start points in order: identity, the eight other (tx, ty) grid nodes at
// theta 0, then the 3x3 grids at +extent and -extent degrees. Up to 27.
std::vector<RigidTransform2D> baseline_starts(const BaselineConfig& cfg);

// Metric of `fixed` against the centered window of `moving` warped by `t`.
double baseline_metric(const Image2D& fixed, const Image2D& moving, const RigidTransform2D& t,
                       const BaselineConfig& cfg);

// Multi-start compass search for the transform that best aligns `moving`
// onto `fixed`. `moving` may exceed `fixed` by an even margin.
BaselineResult register_rigid(const Image2D& fixed, const Image2D& moving, const BaselineConfig& cfg);

} // namespace rlalign
