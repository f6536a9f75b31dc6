#pragma once

#include "rlalign/image.hpp"

namespace rlalign {

struct SimilarityConfig {
    double ssim_c1 = 0.01 * 0.01;
    double ssim_c2 = 0.03 * 0.03;
    int nmi_bins = 32;

    void validate() const;
};

// Whole-image Pearson correlation. Zero when either image has zero variance.
double correlation(const Image2D& x, const Image2D& y);

// Single global SSIM from whole-image means, variances and covariance.
double ssim(const Image2D& x, const Image2D& y, const SimilarityConfig& cfg = {});

// 1 - (rho + SSIM) / 2, in [0, 2].
double dissimilarity(const Image2D& x, const Image2D& y, const SimilarityConfig& cfg = {});

// 2 I(X;Y) / (H(X) + H(Y)) from an equal-width joint histogram over [0,1].
// Two degenerate (zero-entropy) marginals give 1.
double nmi(const Image2D& x, const Image2D& y, int bins = 32);

// First and second moments shared by correlation, SSIM and the dissimilarity.
struct PairMoments {
    double mean_x = 0.0;
    double mean_y = 0.0;
    double var_x = 0.0;  // population variance
    double var_y = 0.0;
    double cov_xy = 0.0;
};

PairMoments pair_moments(const Image2D& x, const Image2D& y);
double correlation_from(const PairMoments& m);
double ssim_from(const PairMoments& m, const SimilarityConfig& cfg);

} // namespace rlalign
