#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "rlalign/image.hpp"

namespace rlalign {

// Layered-retina B-scan phantom. Rows are depth, columns are A-scans.
struct PhantomConfig {
    int height = 224;
    int width = 256;
    int layer_count = 6;
    double layer_amplitude = 6.0;  // boundary undulation, pixels
    std::vector<double> layer_contrasts = {0.75, 0.35, 0.55, 0.25, 0.45, 0.90};
    double background = 0.08;
    double retina_top = 0.18;     // fraction of height where the first boundary sits
    double retina_bottom = 0.86;  // fraction of height where the last boundary sits
    double edge_softness = 1.2;   // logistic width of a boundary, pixels
    double speckle_looks = 200.0;  // gamma shape; mean-1 multiplicative noise
    // Persistent tissue micro-texture: multiplicative (1 + strength * z) with
    // z a unit-variance Gaussian field blurred by `texture_sigma` pixels.
    double texture_strength = 0.5;
    double texture_sigma = 3.0;
    // Vertical shadows cast by superficial vessels.
    int vessel_count = 6;
    double vessel_depth = 0.5;  // fractional attenuation at the shadow core
    std::uint64_t seed = 1;

    void validate() const;
};

// Noise-free intensity field of the phantom (not normalized).
RawImage generate_structure(const PhantomConfig& cfg);

// Multiplies by mean-1 gamma noise of shape `looks`, clips to [0,1] and
// min/max normalizes.
Image2D apply_speckle(const RawImage& clean, double looks, std::uint64_t seed);

// Speckled, normalized B-scan; a pure function of cfg (including cfg.seed).
Image2D generate_bscan(const PhantomConfig& cfg);

// Deterministic 64-bit seed mixing (SplitMix64 finalizer over both inputs).
std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b) noexcept;

// Simulation box for the misalignment of one pair.
struct MotionSample {
    RigidTransform2D transform;
};

// Each component uniform in [-range, range]; theta fixed at 0 when
// translations_only is set.
MotionSample sample_motion(double range, bool translations_only, std::mt19937_64& rng);

// Window center on the (spacing_y, spacing_x) lattice anchored at size/2,
// restricted to rows whose mean exceeds the image mean when any such
// lattice row exists. The size x size window always fits.
std::pair<int, int> sample_window(const Image2D& img, int size, int spacing_y, int spacing_x,
                                  std::mt19937_64& rng);

struct PairConfig {
    int window = 84;
    // Extra context around the moving window so the agent's own warps
    // never pull zero fill into view. 0 gives same-size fixed/moving.
    int context_margin = 24;
    double range = 5.0;
    bool translations_only = false;
    // Permits ranges up to 10 for out-of-distribution stress evaluation.
    bool stress = false;
    int spacing_y = 4;
    int spacing_x = 2;

    int moving_size() const noexcept { return window + 2 * context_margin; }
    void validate() const;
};

struct PhantomPair {
    Image2D fixed;   // window x window
    Image2D moving;  // moving_size() x moving_size(), centered on the fixed window
    RigidTransform2D truth;
    int center_x = 0;
    int center_y = 0;
};

// Fixed window and a moving view of the same anatomy with an independent
// speckle realization, misaligned by `truth`. warp_window(moving,
// invert(truth), window, window) re-aligns it with fixed.
PhantomPair generate_pair(const PhantomConfig& cfg, const PairConfig& pair, std::uint64_t rng_seed);

} // namespace rlalign
