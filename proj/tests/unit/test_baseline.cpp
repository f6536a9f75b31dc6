#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rlalign/baseline.hpp"

using namespace rlalign;

TEST_CASE("start grid")
{
    BaselineConfig cfg;
    auto starts = baseline_starts(cfg);
    REQUIRE(starts.size() == 9);
    CHECK(starts[0] == RigidTransform2D::identity());
    for (const auto& s : starts) {
        CHECK(s.theta == 0.0);
        CHECK(std::abs(s.tx) <= 2.5);
    }
    cfg.starts = 27;
    starts = baseline_starts(cfg);
    CHECK(starts.size() == 27);
    CHECK(std::abs(starts[9].theta) == 2.5);
    cfg.starts = 28;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(parse_baseline_metric("nmi") == BaselineMetric::Nmi);
    CHECK_THROWS_AS(parse_baseline_metric("mse"), ConfigError);
}

TEST_CASE("identical images stay at the identity")
{
    const auto pairs = generate_samples(testing::small_pairs(1, 21));
    BaselineConfig cfg;
    cfg.starts = 1;
    const auto r = register_rigid(pairs[0].fixed, pairs[0].fixed, cfg);
    CHECK(r.transform.tx == 0.0);
    CHECK(r.transform.ty == 0.0);
    CHECK(r.transform.theta == 0.0);
}

TEST_CASE("noise-free pairs are recovered")
{
    auto opt = testing::small_pairs(12, 22);
    opt.phantom.speckle_looks = 1e9;
    const auto pairs = generate_samples(opt);
    for (BaselineMetric m : {BaselineMetric::Nmi, BaselineMetric::Correlation}) {
        BaselineConfig cfg;
        cfg.metric = m;
        int good = 0;
        for (const auto& p : pairs) {
            const auto r = register_rigid(p.fixed, p.moving, cfg);
            const auto want = invert(*p.truth);
            if (std::abs(r.transform.tx - want.tx) <= 0.5 && std::abs(r.transform.ty - want.ty) <= 0.5 &&
                std::abs(r.transform.theta - want.theta) <= 0.5) {
                ++good;
            }
        }
        CAPTURE(to_string(m));
        CHECK(good >= 11);
    }
}

TEST_CASE("the result never scores worse than the identity and respects the budget")
{
    const auto pairs = generate_samples(testing::small_pairs(6, 23));
    BaselineConfig cfg;
    cfg.starts = 3;
    cfg.max_evals = 50;
    for (const auto& p : pairs) {
        const auto r = register_rigid(p.fixed, p.moving, cfg);
        CHECK(r.metric >= baseline_metric(p.fixed, p.moving, RigidTransform2D::identity(), cfg) - 1e-12);
        CHECK(r.evals <= cfg.starts * cfg.max_evals);
        CHECK(r.metric == doctest::Approx(baseline_metric(p.fixed, p.moving, r.transform, cfg)));
        CHECK(std::abs(r.transform.tx) <= cfg.param_bound);
    }
}

TEST_CASE("translations-only search never rotates")
{
    const auto pairs = generate_samples(testing::small_pairs(3, 24));
    BaselineConfig cfg;
    cfg.translations_only = true;
    for (const auto& p : pairs) CHECK(register_rigid(p.fixed, p.moving, cfg).transform.theta == 0.0);
}

TEST_CASE("incompatible sizes are rejected")
{
    const Image2D a(16, 16);
    const Image2D b(17, 17);
    CHECK_THROWS_AS(register_rigid(a, b, BaselineConfig{}), DimensionError);
}
