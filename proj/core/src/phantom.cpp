#include "rlalign/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rlalign {

void PhantomConfig::validate() const
{
    if (height < 8 || width < 8) throw ConfigError("phantom must be at least 8x8");
    if (layer_count < 2) throw ConfigError("phantom needs layer_count >= 2");
    if (static_cast<int>(layer_contrasts.size()) != layer_count) {
        throw ConfigError("layer_contrasts must list one intensity per layer");
    }
    for (double c : layer_contrasts) {
        if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("layer intensities must lie in [0,1]");
    }
    if (!(background >= 0.0 && background <= 1.0)) throw ConfigError("background must lie in [0,1]");
    if (!(speckle_looks > 0.0)) throw ConfigError("speckle_looks must be positive");
    if (!(layer_amplitude >= 0.0)) throw ConfigError("layer_amplitude must be non-negative");
    if (!(edge_softness > 0.0)) throw ConfigError("edge_softness must be positive");
    if (!(texture_strength >= 0.0 && texture_strength < 1.0)) throw ConfigError("texture_strength must lie in [0,1)");
    if (!(texture_sigma > 0.0)) throw ConfigError("texture_sigma must be positive");
    if (vessel_count < 0) throw ConfigError("vessel_count must be non-negative");
    if (!(vessel_depth >= 0.0 && vessel_depth <= 1.0)) throw ConfigError("vessel_depth must lie in [0,1]");
    if (!(retina_top >= 0.0 && retina_top < retina_bottom && retina_bottom <= 1.0)) {
        throw ConfigError("retina_top/retina_bottom must satisfy 0 <= top < bottom <= 1");
    }
}

std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b) noexcept
{
    auto mix = [](std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    };
    return mix(mix(a) ^ (b + 0x632BE59BD9B4E019ull));
}

namespace {

struct Undulation {
    double amplitude[3];
    double wavelength[3];
    double phase[3];

    double at(double x) const
    {
        double v = 0.0;
        for (int j = 0; j < 3; ++j) {
            v += amplitude[j] * std::sin(2.0 * std::numbers::pi * x / wavelength[j] + phase[j]);
        }
        return v;
    }
};

Undulation random_undulation(double total_amplitude, double min_wl, double max_wl, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Undulation u{};
    double weights[3];
    double sum = 0.0;
    for (double& w : weights) {
        w = 0.2 + unit(rng);
        sum += w;
    }
    for (int j = 0; j < 3; ++j) {
        u.amplitude[j] = total_amplitude * weights[j] / sum;
        u.wavelength[j] = min_wl + (max_wl - min_wl) * unit(rng);
        u.phase[j] = 2.0 * std::numbers::pi * unit(rng);
    }
    return u;
}

// Unit-variance Gaussian field with separable Gaussian smoothing.
std::vector<double> smooth_field(int h, int w, double sigma, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> f(static_cast<std::size_t>(h) * w);
    for (double& v : f) v = normal(rng);

    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        ksum += kernel[static_cast<std::size_t>(i + radius)];
    }
    for (double& k : kernel) k /= ksum;

    std::vector<double> tmp(f.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xx = std::clamp(x + i, 0, w - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] * f[static_cast<std::size_t>(y) * w + xx];
            }
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yy = std::clamp(y + i, 0, h - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(yy) * w + x];
            }
            f[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    double mean = 0.0;
    for (double v : f) mean += v;
    mean /= static_cast<double>(f.size());
    double var = 0.0;
    for (double v : f) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(f.size()));
    for (double& v : f) v = sd > 0.0 ? (v - mean) / sd : 0.0;
    return f;
}

} // namespace

RawImage generate_structure(const PhantomConfig& cfg)
{
    cfg.validate();
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x5354525543545552ull));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const int boundaries = cfg.layer_count + 1;
    const double top = cfg.retina_top * cfg.height;
    const double bottom = cfg.retina_bottom * cfg.height;
    const double spacing = (bottom - top) / cfg.layer_count;

    // Shared curvature plus a weaker per-boundary wobble.
    const Undulation shared = random_undulation(cfg.layer_amplitude, 40.0, 160.0, rng);
    std::vector<double> base(boundaries);
    std::vector<Undulation> own;
    own.reserve(boundaries);
    for (int k = 0; k < boundaries; ++k) {
        const double jitter = (k == 0 || k == boundaries - 1) ? 0.0 : (unit(rng) - 0.5) * 0.3 * spacing;
        base[k] = top + k * spacing + jitter;
        own.push_back(random_undulation(0.25 * cfg.layer_amplitude, 30.0, 120.0, rng));
    }

    std::vector<double> levels;
    levels.reserve(boundaries + 1);
    levels.push_back(cfg.background);
    levels.insert(levels.end(), cfg.layer_contrasts.begin(), cfg.layer_contrasts.end());
    levels.push_back(cfg.background);

    RawImage out(cfg.height, cfg.width);
    std::vector<double> edge(boundaries);
    for (int x = 0; x < cfg.width; ++x) {
        const double g = shared.at(x);
        for (int k = 0; k < boundaries; ++k) {
            edge[k] = base[k] + g + own[k].at(x);
            if (k > 0) edge[k] = std::max(edge[k], edge[k - 1] + 2.0);
        }
        for (int y = 0; y < cfg.height; ++y) {
            double v = levels[0];
            for (int k = 0; k < boundaries; ++k) {
                const double s = 1.0 / (1.0 + std::exp(-(y - edge[k]) / cfg.edge_softness));
                v += (levels[k + 1] - levels[k]) * s;
            }
            out(y, x) = v;
        }
    }

    if (cfg.vessel_count > 0) {
        const double top_edge = top;
        for (int k = 0; k < cfg.vessel_count; ++k) {
            const double cx = unit(rng) * cfg.width;
            const double half_width = 1.5 + 3.0 * unit(rng);
            for (int x = 0; x < cfg.width; ++x) {
                const double u = (x - cx) / half_width;
                const double atten = 1.0 - cfg.vessel_depth * std::exp(-0.5 * u * u * 4.0);
                if (atten > 0.999) continue;
                // Shadows fall below the vessel, which sits near the top boundary.
                for (int y = static_cast<int>(std::max(0.0, top_edge + 4.0)); y < cfg.height; ++y) out(y, x) *= atten;
            }
        }
    }

    if (cfg.texture_strength > 0.0) {
        const auto field = smooth_field(cfg.height, cfg.width, cfg.texture_sigma, rng);
        auto px = out.pixels();
        for (std::size_t i = 0; i < px.size(); ++i) {
            px[i] = std::max(0.0, px[i] * (1.0 + cfg.texture_strength * field[i]));
        }
    }
    return out;
}

Image2D apply_speckle(const RawImage& clean, double looks, std::uint64_t seed)
{
    if (!(looks > 0.0)) throw ConfigError("speckle looks must be positive");
    std::mt19937_64 rng(seed);
    std::gamma_distribution<double> gamma(looks, 1.0 / looks);
    RawImage noisy(clean.height(), clean.width());
    auto src = clean.pixels();
    auto dst = noisy.pixels();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = std::clamp(src[i] * gamma(rng), 0.0, 1.0);
    }
    return normalize(noisy);
}

Image2D generate_bscan(const PhantomConfig& cfg)
{
    return apply_speckle(generate_structure(cfg), cfg.speckle_looks,
                         derive_seed(cfg.seed, 0x535045434B4C4530ull));
}

MotionSample sample_motion(double range, bool translations_only, std::mt19937_64& rng)
{
    if (!(range >= 0.0)) throw ConfigError("motion range must be non-negative");
    if (range == 0.0) return {RigidTransform2D::identity()};
    std::uniform_real_distribution<double> u(-range, range);
    MotionSample s;
    s.transform.tx = u(rng);
    s.transform.ty = u(rng);
    s.transform.theta = translations_only ? 0.0 : u(rng);
    return s;
}

std::pair<int, int> sample_window(const Image2D& img, int size, int spacing_y, int spacing_x,
                                  std::mt19937_64& rng)
{
    if (size < 1 || spacing_y < 1 || spacing_x < 1) throw ConfigError("window size and spacing must be positive");
    if (img.height() < size || img.width() < size) throw BoundsError("image smaller than sampling window");
    const int half = size / 2;

    double total = 0.0;
    std::vector<double> row_mean(static_cast<std::size_t>(img.height()), 0.0);
    for (int r = 0; r < img.height(); ++r) {
        double s = 0.0;
        for (int c = 0; c < img.width(); ++c) s += img(r, c);
        row_mean[static_cast<std::size_t>(r)] = s / img.width();
        total += s;
    }
    const double mean = total / (static_cast<double>(img.height()) * img.width());

    std::vector<int> rows;
    std::vector<int> bright_rows;
    for (int cy = half; cy - half + size <= img.height(); cy += spacing_y) {
        rows.push_back(cy);
        if (row_mean[static_cast<std::size_t>(cy)] > mean) bright_rows.push_back(cy);
    }
    const auto& candidates = bright_rows.empty() ? rows : bright_rows;
    const int x_slots = (img.width() - size) / spacing_x + 1;

    std::uniform_int_distribution<std::size_t> pick_row(0, candidates.size() - 1);
    std::uniform_int_distribution<int> pick_col(0, x_slots - 1);
    const int cy = candidates[pick_row(rng)];
    const int cx = half + spacing_x * pick_col(rng);
    return {cx, cy};
}

void PairConfig::validate() const
{
    if (window < 4) throw ConfigError("pair window must be at least 4 pixels");
    if (context_margin < 0) throw ConfigError("context_margin must be non-negative");
    const double limit = stress ? 10.0 : 5.0;
    if (!(range >= 0.0 && range <= limit)) {
        throw ConfigError("motion range must lie in [0, " + std::to_string(static_cast<int>(limit)) + "]");
    }
    if (spacing_y < 1 || spacing_x < 1) throw ConfigError("window spacing must be positive");
}

PhantomPair generate_pair(const PhantomConfig& cfg, const PairConfig& pair, std::uint64_t rng_seed)
{
    cfg.validate();
    pair.validate();

    PhantomConfig anatomy = cfg;
    anatomy.seed = derive_seed(cfg.seed, rng_seed);
    const RawImage clean = generate_structure(anatomy);
    const Image2D fixed_full = apply_speckle(clean, cfg.speckle_looks, derive_seed(anatomy.seed, 1));
    const Image2D variant_full = apply_speckle(clean, cfg.speckle_looks, derive_seed(anatomy.seed, 2));

    std::mt19937_64 rng(derive_seed(anatomy.seed, 3));
    PhantomPair out;
    out.truth = sample_motion(pair.range, pair.translations_only, rng).transform;

    // Source patch large enough that warping it never exposes zero fill in
    // the moving view: rotation about the center sweeps at most
    // half-diagonal * angle, translation adds the range. Sized from the
    // configured range so the sampling lattice does not depend on truth.
    const int view = pair.moving_size();
    const double max_angle = pair.translations_only ? 0.0 : pair.range * std::numbers::pi / 180.0;
    const int reach = static_cast<int>(std::ceil(pair.range + view * 0.7072 * max_angle)) + 2;
    const int source = view + 2 * reach;
    if (source > cfg.height || source > cfg.width) {
        throw ConfigError("phantom too small for window, context margin and motion range");
    }
    const auto [cx, cy] = sample_window(fixed_full, source, pair.spacing_y, pair.spacing_x, rng);
    out.center_x = cx;
    out.center_y = cy;

    // Both crops share the center (cx - 0.5, cy - 0.5) for even sizes, so
    // the warp pivots coincide.
    out.fixed = crop(fixed_full, cx, cy, pair.window);
    const Image2D patch = crop(variant_full, cx, cy, source);
    out.moving = warp_window(patch, out.truth, view, view);
    return out;
}

} // namespace rlalign
