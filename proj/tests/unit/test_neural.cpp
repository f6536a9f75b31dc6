#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rlalign/neural.hpp"

using namespace rlalign;
using namespace rlalign::nn;

namespace {

void expect_gradients_match(const NetSpec& spec, int batch, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    QNetwork<double> net(spec, seed);
    const auto input = testing::random_input(spec, batch, rng);
    std::uniform_int_distribution<int> act(0, spec.actions - 1);
    std::normal_distribution<double> tgt(0.0, 1.0);
    std::vector<int> actions(static_cast<std::size_t>(batch));
    std::vector<double> targets(static_cast<std::size_t>(batch));
    for (int i = 0; i < batch; ++i) {
        actions[static_cast<std::size_t>(i)] = act(rng);
        targets[static_cast<std::size_t>(i)] = tgt(rng);
    }
    const auto res = testing::gradient_check(net, input, actions, targets);
    INFO("worst |analytic - numeric| = " << res.worst_abs << " in " << res.worst_param);
    CHECK(res.checked > 0);
    CHECK(res.failed == 0);
}

} // namespace

TEST_CASE("registration network shape and parameter count")
{
    const NetSpec spec = NetSpec::registration();
    CHECK(spec.conv_output_sizes_h() == std::vector<int>{40, 18, 8, 3});
    CHECK(spec.flattened_features() == 64);
    CHECK(spec.trainable_parameter_count() == 135857);
    QNetwork<float> net(spec, 1);
    CHECK(net.trainable_parameter_count() == 135857);
    Tensor<float> x({2, 84, 84, 4}, 0.1f);
    const auto q = net.forward(x, Mode::Eval);
    CHECK(q.shape == std::vector<int>{2, 6});
}

TEST_CASE("gradient check: dense layer alone")
{
    expect_gradients_match(NetSpec::mlp(7, 5, 3), 4, 1);
}

TEST_CASE("gradient check: single convolution")
{
    NetSpec s;
    s.input_h = 6;
    s.input_w = 6;
    s.input_c = 2;
    s.convs = {{3, 3, 1, false}};
    s.max_pool = false;
    s.fc_units = 5;
    s.head = HeadKind::Plain;
    s.actions = 3;
    expect_gradients_match(s, 3, 2);
}

TEST_CASE("gradient check: strided convolution with batch norm")
{
    NetSpec s;
    s.input_h = 9;
    s.input_w = 9;
    s.input_c = 2;
    s.convs = {{3, 3, 2, true}};
    s.max_pool = false;
    s.fc_units = 4;
    s.head = HeadKind::Plain;
    s.actions = 2;
    expect_gradients_match(s, 4, 3);
}

TEST_CASE("gradient check: max pooling")
{
    NetSpec s;
    s.input_h = 6;
    s.input_w = 6;
    s.input_c = 1;
    s.convs = {{3, 3, 1, false}};
    s.max_pool = true;
    s.fc_units = 4;
    s.head = HeadKind::Plain;
    s.actions = 2;
    expect_gradients_match(s, 3, 4);
}

TEST_CASE("gradient check: each head")
{
    for (HeadKind h : {HeadKind::Plain, HeadKind::Dueling, HeadKind::DuelingMean}) {
        CAPTURE(to_string(h));
        NetSpec s = NetSpec::mlp(6, 8, 6);
        s.head = h;
        expect_gradients_match(s, 4, 5);
    }
}

TEST_CASE("gradient check: full shrunken network")
{
    for (HeadKind h : {HeadKind::Plain, HeadKind::Dueling, HeadKind::DuelingMean}) {
        CAPTURE(to_string(h));
        expect_gradients_match(testing::shrunken_spec(h), 4, 6);
    }
}

TEST_CASE("infer matches eval-mode forward and is const")
{
    NetSpec spec = testing::shrunken_spec();
    QNetwork<float> net(spec, 3);
    Tensor<float> x({3, 8, 8, 2});
    std::mt19937_64 rng(1);
    std::normal_distribution<float> n;
    for (auto& v : x.data) v = n(rng);
    const auto a = net.infer(x);
    const auto b = net.forward(x, Mode::Eval);
    CHECK(a == b);
}

TEST_CASE("train mode updates running statistics, eval mode does not")
{
    QNetwork<float> net(testing::shrunken_spec(), 3);
    Tensor<float> x({4, 8, 8, 2}, 0.5f);
    const auto before = net.param("conv2.bn.running_mean").value;
    net.forward(x, Mode::Eval);
    CHECK(net.param("conv2.bn.running_mean").value == before);
    x.data[0] = 3.0f;
    net.forward(x, Mode::Train);
    CHECK(!(net.param("conv2.bn.running_mean").value == before));
}

TEST_CASE("zero learning rate leaves parameters bit-identical")
{
    QNetwork<float> net(testing::shrunken_spec(), 4);
    const auto snapshot = net.params();
    Tensor<float> x({2, 8, 8, 2}, 0.25f);
    std::vector<int> actions{0, 5};
    std::vector<float> targets{1.0f, -1.0f};
    for (int i = 0; i < 3; ++i) {
        net.backward(x, std::span<const int>(actions), std::span<const float>(targets));
        net.adam_step(0.0);
    }
    for (std::size_t i = 0; i < snapshot.size(); ++i) {
        if (snapshot[i].trainable) CHECK(net.params()[i].value == snapshot[i].value);
    }
}

TEST_CASE("adam update matches a hand-computed first step")
{
    std::vector<double> p{1.0, -2.0};
    const std::vector<double> g{0.5, -0.25};
    std::vector<double> m(2, 0.0), v(2, 0.0);
    adam_update<double>(p, g, m, v, 1, 0.1, {});
    // Bias-corrected first step moves each weight by ~lr * sign(g).
    CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-9));
    CHECK(p[1] == doctest::Approx(-2.0 + 0.1 * 0.25 / (0.25 + 1e-8)).epsilon(1e-9));
}

TEST_CASE("training reduces the loss on a fixed batch")
{
    QNetwork<float> net(testing::shrunken_spec(), 8);
    Tensor<float> x({8, 8, 8, 2});
    std::mt19937_64 rng(2);
    std::normal_distribution<float> n;
    for (auto& v : x.data) v = n(rng);
    std::vector<int> actions{0, 1, 2, 3, 4, 5, 0, 1};
    std::vector<float> targets{1, -1, 0.5f, 2, -0.5f, 1, 0, 0.25f};
    const float first = net.backward(x, std::span<const int>(actions), std::span<const float>(targets));
    float last = first;
    for (int i = 0; i < 200; ++i) {
        last = net.backward(x, std::span<const int>(actions), std::span<const float>(targets));
        net.adam_step(1e-2);
    }
    CHECK(last < 0.1f * first);
}

TEST_CASE("copies are independent and casting round-trips")
{
    QNetwork<float> a(testing::shrunken_spec(), 9);
    QNetwork<float> b = a;
    CHECK(a == b);
    b.params()[0].value[0] += 1.0f;
    CHECK(!(a == b));
    const QNetwork<float> back = a.cast<double>().cast<float>();
    CHECK(back == a);
}

TEST_CASE("input shape mismatch and bad specs are rejected")
{
    QNetwork<float> net(testing::shrunken_spec(), 1);
    CHECK_THROWS_AS(net.forward(Tensor<float>({1, 8, 8, 3}), Mode::Eval), DimensionError);
    NetSpec bad = NetSpec::registration();
    bad.input_h = 20;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("non-finite activations raise a numeric error")
{
    QNetwork<float> net(NetSpec::mlp(3, 4, 2), 1);
    Tensor<float> x({1, 1, 1, 3}, 1.0f);
    x.data[1] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(net.forward(x, Mode::Eval), NumericError);
}
