#include <doctest.h>

#include <cmath>
#include <random>

#include "rlalign/dataset.hpp"
#include "rlalign/phantom.hpp"
#include "rlalign/similarity.hpp"

using namespace rlalign;

TEST_CASE("bscan is normalized and a pure function of the config")
{
    PhantomConfig cfg;
    cfg.height = 96;
    cfg.width = 96;
    const Image2D a = generate_bscan(cfg);
    const Image2D b = generate_bscan(cfg);
    CHECK(a == b);
    float lo = 1.0f, hi = 0.0f;
    for (float v : a.pixels()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo == 0.0f);
    CHECK(hi == 1.0f);
    cfg.seed = 2;
    CHECK(!(generate_bscan(cfg) == a));
}

TEST_CASE("layered structure: retina rows are brighter than background rows")
{
    PhantomConfig cfg;
    const RawImage s = generate_structure(cfg);
    auto row_mean = [&](int r) {
        double acc = 0.0;
        for (int c = 0; c < s.width(); ++c) acc += s(r, c);
        return acc / s.width();
    };
    CHECK(row_mean(2) < row_mean(cfg.height / 2));
}

TEST_CASE("speckle has unit mean before clipping")
{
    const RawImage flat(128, 128, 0.4);
    const Image2D noisy = apply_speckle(flat, 50.0, 3);
    // After min/max normalization only relative structure survives; the
    // coefficient of variation of gamma(L) is 1/sqrt(L).
    double mean = 0.0;
    for (float v : noisy.pixels()) mean += v;
    mean /= static_cast<double>(noisy.size());
    double var = 0.0;
    for (float v : noisy.pixels()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(noisy.size());
    CHECK(mean > 0.2);
    CHECK(mean < 0.8);
    CHECK(var > 0.0);
}

TEST_CASE("motion sampling respects the range and the translations-only switch")
{
    std::mt19937_64 rng(5);
    for (int i = 0; i < 1000; ++i) {
        const auto t = sample_motion(3.0, i % 2 == 0, rng).transform;
        CHECK(std::abs(t.tx) <= 3.0);
        CHECK(std::abs(t.ty) <= 3.0);
        CHECK(std::abs(t.theta) <= 3.0);
        if (i % 2 == 0) CHECK(t.theta == 0.0);
    }
    CHECK(sample_motion(0.0, false, rng).transform.is_identity());
    CHECK_THROWS_AS(sample_motion(-1.0, false, rng), ConfigError);
}

TEST_CASE("pair range validation")
{
    PairConfig p;
    p.range = 6.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.stress = true;
    CHECK_NOTHROW(p.validate());
    p.range = 10.5;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("window sampling stays on the lattice and inside the image")
{
    PhantomConfig cfg;
    const Image2D img = generate_bscan(cfg);
    std::mt19937_64 rng(9);
    for (int i = 0; i < 200; ++i) {
        const auto [cx, cy] = sample_window(img, 84, 4, 2, rng);
        CHECK((cy - 42) % 4 == 0);
        CHECK((cx - 42) % 2 == 0);
        CHECK(cx - 42 >= 0);
        CHECK(cy - 42 >= 0);
        CHECK(cx + 42 <= img.width());
        CHECK(cy + 42 <= img.height());
    }
}

TEST_CASE("correcting a generated pair improves similarity")
{
    GenDataOptions opt;
    opt.pairs = 12;
    opt.seed = 21;
    opt.pair.range = 3.0;
    const auto pairs = generate_samples(opt);
    int better = 0;
    for (const auto& p : pairs) {
        REQUIRE(p.fixed.height() == 84);
        REQUIRE(p.moving.height() == opt.pair.moving_size());
        const double before = dissimilarity(p.fixed, warp_window(p.moving, {}, 84, 84));
        const double after = dissimilarity(p.fixed, warp_window(p.moving, invert(*p.truth), 84, 84));
        if (after < before) ++better;
        CHECK(after < 0.05);
    }
    CHECK(better >= 11);
}

TEST_CASE("zero context margin gives same-size fixed and moving")
{
    GenDataOptions opt;
    opt.pairs = 2;
    opt.pair.context_margin = 0;
    for (const auto& p : generate_samples(opt)) CHECK(p.moving.same_shape(p.fixed));
}

TEST_CASE("noise-free pairs with identity motion are identical up to speckle draw")
{
    GenDataOptions opt;
    opt.pairs = 1;
    opt.pair.range = 0.0;
    opt.pair.context_margin = 0;
    opt.phantom.speckle_looks = 1e9;
    const auto p = generate_samples(opt).front();
    CHECK(dissimilarity(p.fixed, p.moving) < 1e-3);
}
