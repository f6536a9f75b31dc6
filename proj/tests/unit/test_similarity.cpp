#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "rlalign/similarity.hpp"

using namespace rlalign;

TEST_CASE("metrics match brute-force definitions on random pairs")
{
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 50; ++i) {
        const auto [x, y] = testing::random_pair(16, 16, rng);
        CHECK(std::abs(correlation(x, y) - testing::brute_correlation(x, y)) < 1e-9);
        CHECK(std::abs(ssim(x, y) - testing::brute_ssim(x, y)) < 1e-9);
        CHECK(std::abs(dissimilarity(x, y) - testing::brute_dissimilarity(x, y)) < 1e-9);
        CHECK(std::abs(nmi(x, y) - testing::brute_nmi(x, y)) < 1e-9);
    }
}

TEST_CASE("identical images are maximally similar")
{
    std::mt19937_64 rng(3);
    const Image2D x = testing::random_image(16, 16, rng);
    CHECK(correlation(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(dissimilarity(x, x) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(nmi(x, x) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constant images give zero correlation and NMI of one")
{
    const Image2D c(8, 8, 0.3f);
    std::mt19937_64 rng(8);
    const Image2D x = testing::random_image(8, 8, rng);
    CHECK(correlation(c, x) == 0.0);
    CHECK(nmi(c, c) == 1.0);
}

TEST_CASE("metric properties hold on random pairs")
{
    std::mt19937_64 rng(99);
    for (int i = 0; i < 100; ++i) {
        const auto [x, y] = testing::random_pair(12, 12, rng);
        const double r = correlation(x, y);
        CHECK(r >= -1.0);
        CHECK(r <= 1.0);
        CHECK(correlation(x, y) == doctest::Approx(correlation(y, x)).epsilon(1e-12));
        CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-12));
        const double m = nmi(x, y);
        CHECK(m >= -1e-12);
        CHECK(m <= 1.0 + 1e-12);
        CHECK(nmi(x, y) == doctest::Approx(nmi(y, x)).epsilon(1e-12));
        const double d = dissimilarity(x, y);
        CHECK(d >= 0.0);
        CHECK(d <= 2.0);
    }
}

TEST_CASE("correlation is invariant to positive affine intensity maps")
{
    std::mt19937_64 rng(12);
    const auto [x, y] = testing::random_pair(16, 16, rng);
    Image2D y2 = y;
    for (auto& v : y2.pixels()) v = 0.5f * v + 0.1f;
    CHECK(correlation(x, y2) == doctest::Approx(correlation(x, y)).epsilon(1e-5));
}

TEST_CASE("shape mismatch and bad config are rejected")
{
    CHECK_THROWS_AS(correlation(Image2D(3, 3), Image2D(3, 4)), DimensionError);
    CHECK_THROWS_AS(nmi(Image2D(3, 3), Image2D(3, 3), 1), ConfigError);
    SimilarityConfig bad;
    bad.ssim_c1 = 0.0;
    CHECK_THROWS_AS(ssim(Image2D(3, 3), Image2D(3, 3), bad), ConfigError);
}
