#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rlalign/image.hpp"
#include "rlalign/image_io.hpp"

using namespace rlalign;

TEST_CASE("identity warp is bit-exact")
{
    std::mt19937_64 rng(1);
    const Image2D img = testing::random_image(17, 23, rng);
    CHECK(warp(img, RigidTransform2D::identity()) == img);
}

TEST_CASE("integer translation shifts pixels and zero-fills")
{
    Image2D img(5, 6);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 6; ++c) img(r, c) = static_cast<float>(r * 6 + c) / 30.0f;
    const Image2D out = warp(img, {2.0, 1.0, 0.0});
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 6; ++c) {
            const float expected = (r - 1 >= 0 && c - 2 >= 0) ? img(r - 1, c - 2) : 0.0f;
            CHECK(out(r, c) == doctest::Approx(expected).epsilon(1e-6));
        }
    }
}

TEST_CASE("compose and invert obey the group laws")
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int i = 0; i < 200; ++i) {
        const RigidTransform2D a{u(rng), u(rng), u(rng)};
        const RigidTransform2D b{u(rng), u(rng), u(rng)};
        const auto id = compose(a, invert(a));
        CHECK(std::abs(id.tx) < 1e-9);
        CHECK(std::abs(id.ty) < 1e-9);
        CHECK(std::abs(id.theta) < 1e-9);
        const auto ab = compose(a, b);
        const auto back = compose(ab, invert(b));
        CHECK(back.tx == doctest::Approx(a.tx).epsilon(1e-9));
        CHECK(back.ty == doctest::Approx(a.ty).epsilon(1e-9));
        CHECK(back.theta == doctest::Approx(a.theta).epsilon(1e-9));
    }
}

TEST_CASE("warp by a composition matches sequential warps away from the border")
{
    // Smooth image so bilinear resampling error stays small.
    Image2D img(41, 41);
    for (int r = 0; r < 41; ++r)
        for (int c = 0; c < 41; ++c) img(r, c) = static_cast<float>(0.5 + 0.25 * std::sin(r * 0.2) * std::cos(c * 0.15));
    const RigidTransform2D a{1.5, -0.5, 3.0};
    const RigidTransform2D b{-1.0, 2.0, -2.0};
    const Image2D twice = warp(warp(img, a), b);
    const Image2D once = warp(img, compose(a, b));
    for (int r = 10; r < 31; ++r)
        for (int c = 10; c < 31; ++c) CHECK(std::abs(twice(r, c) - once(r, c)) < 0.01);
}

TEST_CASE("warp_window equals the centered crop of the full warp")
{
    std::mt19937_64 rng(5);
    const Image2D img = testing::random_image(30, 30, rng);
    const RigidTransform2D t{1.25, -2.5, 4.0};
    const Image2D full = warp(img, t);
    const Image2D win = warp_window(img, t, 20, 20);
    const Image2D ref = crop_center(full, 20, 20);
    REQUIRE(win.same_shape(ref));
    for (std::size_t i = 0; i < win.size(); ++i) CHECK(win.pixels()[i] == doctest::Approx(ref.pixels()[i]).epsilon(1e-6));
    CHECK_THROWS_AS(warp_window(img, t, 19, 20), DimensionError);
}

TEST_CASE("crop bounds and diff shapes")
{
    Image2D img(10, 10, 0.5f);
    CHECK(crop(img, 5, 5, 4).height() == 4);
    CHECK_THROWS_AS(crop(img, 1, 1, 4), BoundsError);
    CHECK_THROWS_AS(diff(Image2D(3, 3), Image2D(3, 4)), DimensionError);
}

TEST_CASE("normalize maps onto [0,1] and rejects non-finite data")
{
    RawImage raw(2, 2, std::vector<double>{-3.0, 1.0, 5.0, 1.0});
    const Image2D n = normalize(raw);
    CHECK(n(0, 0) == 0.0f);
    CHECK(n(1, 0) == 1.0f);
    CHECK(n(0, 1) == doctest::Approx(0.5));
    CHECK(normalize(RawImage(3, 3, 7.0)) == Image2D(3, 3, 0.0f));
    RawImage bad(1, 2, std::vector<double>{0.0, std::nan("")});
    CHECK_THROWS_AS(normalize(bad), DataError);
}

TEST_CASE("resize keeps corners on a corner-aligned grid")
{
    std::mt19937_64 rng(6);
    const Image2D img = testing::random_image(9, 13, rng);
    const Image2D big = resize(img, 17, 25);
    CHECK(big(0, 0) == doctest::Approx(img(0, 0)));
    CHECK(big(16, 24) == doctest::Approx(img(8, 12)));
    CHECK(resize(img, 9, 13) == img);
}

TEST_CASE("IMG1 round trip is bit-exact and malformed files are rejected")
{
    std::mt19937_64 rng(7);
    const Image2D img = testing::random_image(11, 7, rng);
    const auto bytes = encode_img1(img);
    CHECK(decode_img1(bytes) == img);
    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(decode_img1(truncated), FormatError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_img1(bad_magic), FormatError);
}

TEST_CASE("PGM reading scales by 255")
{
    const auto dir = std::filesystem::temp_directory_path() / "rlalign_pgm_test";
    std::filesystem::create_directories(dir);
    Image2D img(2, 3);
    for (int i = 0; i < 6; ++i) img.pixels()[static_cast<std::size_t>(i)] = static_cast<float>(i * 51) / 255.0f;
    write_pgm(dir / "a.pgm", img);
    const Image2D back = read_image(dir / "a.pgm");
    CHECK(back == img);
    CHECK_THROWS_AS(read_image(dir / "missing.img1"), IoError);
}
