#include "rlalign/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace rlalign {

void SimilarityConfig::validate() const
{
    if (!(ssim_c1 > 0.0) || !(ssim_c2 > 0.0)) throw ConfigError("SSIM stabilizers must be positive");
    if (nmi_bins < 2) throw ConfigError("NMI needs at least 2 bins");
}

PairMoments pair_moments(const Image2D& x, const Image2D& y)
{
    if (!x.same_shape(y)) throw DimensionError("similarity: shape mismatch");
    const auto px = x.pixels();
    const auto py = y.pixels();
    const std::size_t n = px.size();
    if (n == 0) throw DimensionError("similarity: empty images");

    double sx = 0.0;
    double sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += px[i];
        sy += py[i];
    }
    PairMoments m;
    m.mean_x = sx / static_cast<double>(n);
    m.mean_y = sy / static_cast<double>(n);
    double vx = 0.0;
    double vy = 0.0;
    double cxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = px[i] - m.mean_x;
        const double dy = py[i] - m.mean_y;
        vx += dx * dx;
        vy += dy * dy;
        cxy += dx * dy;
    }
    m.var_x = vx / static_cast<double>(n);
    m.var_y = vy / static_cast<double>(n);
    m.cov_xy = cxy / static_cast<double>(n);
    return m;
}

double correlation_from(const PairMoments& m)
{
    if (m.var_x <= 0.0 || m.var_y <= 0.0) return 0.0;
    const double r = m.cov_xy / std::sqrt(m.var_x * m.var_y);
    return std::clamp(r, -1.0, 1.0);
}

double ssim_from(const PairMoments& m, const SimilarityConfig& cfg)
{
    const double num = (2.0 * m.mean_x * m.mean_y + cfg.ssim_c1) * (2.0 * m.cov_xy + cfg.ssim_c2);
    const double den = (m.mean_x * m.mean_x + m.mean_y * m.mean_y + cfg.ssim_c1) *
                       (m.var_x + m.var_y + cfg.ssim_c2);
    return num / den;
}

double correlation(const Image2D& x, const Image2D& y)
{
    if (x.same_shape(y) && x.size() < 2) throw DimensionError("correlation: needs at least 2 pixels");
    return correlation_from(pair_moments(x, y));
}

double ssim(const Image2D& x, const Image2D& y, const SimilarityConfig& cfg)
{
    cfg.validate();
    return ssim_from(pair_moments(x, y), cfg);
}

double dissimilarity(const Image2D& x, const Image2D& y, const SimilarityConfig& cfg)
{
    cfg.validate();
    const PairMoments m = pair_moments(x, y);
    return 1.0 - (correlation_from(m) + ssim_from(m, cfg)) / 2.0;
}

namespace {

int bin_of(float v, int bins)
{
    if (!(v > 0.0f)) return 0;
    const int b = static_cast<int>(static_cast<double>(v) * bins);
    return b >= bins ? bins - 1 : b;
}

double entropy_term(double p)
{
    return p > 0.0 ? -p * std::log(p) : 0.0;
}

} // namespace

double nmi(const Image2D& x, const Image2D& y, int bins)
{
    if (bins < 2) throw ConfigError("NMI needs at least 2 bins");
    if (!x.same_shape(y)) throw DimensionError("nmi: shape mismatch");
    const auto px = x.pixels();
    const auto py = y.pixels();
    const std::size_t n = px.size();
    if (n == 0) throw DimensionError("nmi: empty images");

    const auto nb = static_cast<std::size_t>(bins);
    std::vector<double> joint(nb * nb, 0.0);
    std::vector<double> hx(nb, 0.0);
    std::vector<double> hy(nb, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto bx = static_cast<std::size_t>(bin_of(px[i], bins));
        const auto by = static_cast<std::size_t>(bin_of(py[i], bins));
        joint[bx * nb + by] += 1.0;
        hx[bx] += 1.0;
        hy[by] += 1.0;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    double ent_x = 0.0;
    double ent_y = 0.0;
    double ent_xy = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
        ent_x += entropy_term(hx[b] * inv_n);
        ent_y += entropy_term(hy[b] * inv_n);
    }
    for (double c : joint) ent_xy += entropy_term(c * inv_n);

    const double denom = ent_x + ent_y;
    if (denom <= 0.0) return 1.0;
    const double mutual = ent_x + ent_y - ent_xy;
    return 2.0 * mutual / denom;
}

} // namespace rlalign
