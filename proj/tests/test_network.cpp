#include <gtest/gtest.h>

#include <cmath>

#include "arim/fcn/adam.hpp"
#include "arim/fcn/network.hpp"
#include "arim/profile.hpp"
#include "gradcheck.hpp"

using namespace arim::fcn;

namespace {

std::vector<std::size_t> conv_widths(const FcnArchitecture& a) {
    std::vector<std::size_t> w;
    for (const auto& l : a.layers)
        if (l.kind == LayerKind::conv) w.push_back(l.conv.out_channels);
    return w;
}

std::vector<std::size_t> pool_outputs(const FcnArchitecture& a) {
    std::vector<std::size_t> h;
    const auto trace = a.height_trace();
    for (std::size_t l = 0; l < a.layers.size(); ++l)
        if (a.layers[l].kind == LayerKind::pool) h.push_back(trace[l + 1]);
    return h;
}

}  // namespace

TEST(Architecture, ShallowFullLayout) {
    const auto a = make_architecture(ArchName::shallow, 154, 2048);
    EXPECT_EQ(a.layer_count(), 15u);
    EXPECT_EQ(conv_widths(a), (std::vector<std::size_t>{8, 8, 8, 16, 16, 16, 32, 32, 32, 64, 64, 1}));
    EXPECT_EQ(pool_outputs(a), (std::vector<std::size_t>{77, 39, 20}));
    const auto& last = a.layers.back().conv;
    EXPECT_EQ(last.kernel_h, 20u);
    EXPECT_EQ(last.kernel_w, 5u);
    EXPECT_EQ(last.vertical, VerticalPadding::valid);
    EXPECT_EQ(last.activation, Activation::none);
    EXPECT_EQ(a.height_trace().back(), 1u);
}

TEST(Architecture, DeepFullLayout) {
    const auto a = make_architecture(ArchName::deep, 1024, 2048);
    EXPECT_EQ(a.layer_count(), 21u);
    EXPECT_EQ(conv_widths(a),
              (std::vector<std::size_t>{8, 8, 8, 8, 16, 16, 16, 16, 32, 32, 64, 64, 128, 128, 1}));
    EXPECT_EQ(pool_outputs(a), (std::vector<std::size_t>{512, 256, 128, 64, 32, 16}));
    EXPECT_EQ(a.layers.back().conv.kernel_h, 16u);
    EXPECT_EQ(a.height_trace().back(), 1u);
}

TEST(Architecture, EveryKernelIsFiveWideAndFiveTallExceptCollapse) {
    for (auto name : {ArchName::shallow, ArchName::deep}) {
        const auto a = make_architecture(name, name == ArchName::shallow ? 154 : 1024, 2048);
        for (std::size_t l = 0; l + 1 < a.layers.size(); ++l) {
            if (a.layers[l].kind != LayerKind::conv) continue;
            EXPECT_EQ(a.layers[l].conv.kernel_w, 5u);
            EXPECT_EQ(a.layers[l].conv.kernel_h, 5u);
            EXPECT_EQ(a.layers[l].conv.activation, Activation::relu);
        }
    }
}

TEST(Architecture, ChannelDivisorScalesWidths) {
    const auto a = make_architecture(ArchName::deep, 64, 512, 4);
    EXPECT_EQ(conv_widths(a), (std::vector<std::size_t>{2, 2, 2, 2, 4, 4, 4, 4, 8, 8, 16, 16, 32, 32, 1}));
    EXPECT_EQ(a.layer_count(), 21u);
}

TEST(Architecture, NamesParse) {
    EXPECT_EQ(parse_arch("deep"), ArchName::deep);
    EXPECT_EQ(to_string(ArchName::shallow), "shallow");
    EXPECT_THROW(parse_arch("medium"), std::invalid_argument);
}

TEST(Network, FullShallowMapsToOneRow) {
    Network<float> net(make_architecture(ArchName::shallow, 154, 2048));
    net.initialize(1);
    const auto out = net.forward(Tensor<float>(1, 154, 2048));
    EXPECT_EQ(out.shape_string(), "1x1x2048");
}

TEST(Network, DeskShapesMapToOneRow) {
    const auto desk = arim::ScaleProfile::desk();
    for (auto [name, cfg] : {std::pair{ArchName::shallow, desk.shallow_stft}, std::pair{ArchName::deep, desk.deep_stft}}) {
        Network<float> net(make_architecture(name, cfg.frame_count(256), 512, desk.channel_divisor));
        net.initialize(2);
        EXPECT_EQ(net.forward(Tensor<float>(1, cfg.frame_count(256), 512, 0.5f)).shape_string(), "1x1x512");
    }
}

TEST(Network, RejectsWrongInputShape) {
    Network<float> net(make_architecture(ArchName::shallow, 39, 512));
    EXPECT_THROW(net.forward(Tensor<float>(1, 40, 512)), std::invalid_argument);
}

TEST(Network, HeUniformInitialization) {
    Network<double> a(make_architecture(ArchName::shallow, 39, 64, 4)), b = a, c = a;
    a.initialize(7);
    b.initialize(7);
    c.initialize(8);
    EXPECT_EQ(a, b);
    EXPECT_NE(a.parameters()[0], c.parameters()[0]);
    const auto& arch = a.architecture();
    for (std::size_t l = 0; l < arch.layers.size(); ++l) {
        if (arch.layers[l].kind != LayerKind::conv) continue;
        const auto& s = arch.layers[l].conv;
        const double bound = std::sqrt(6.0 / static_cast<double>(s.in_channels * s.kernel_h * s.kernel_w));
        for (double w : a.weights(l)) EXPECT_LE(std::abs(w), bound);
        for (double v : a.biases(l)) EXPECT_EQ(v, 0.0);
    }
}

TEST(Network, ForwardIsPure) {
    Network<float> net(make_architecture(ArchName::deep, 64, 32, 4));
    net.initialize(3);
    arim::Rng rng(1);
    Tensor<float> x(1, 64, 32);
    for (auto& v : x.data) v = static_cast<float>(rng.uniform());
    const auto before = net;
    EXPECT_EQ(net.forward(x), net.forward(x));
    EXPECT_EQ(net, before);
}

TEST(Network, BackwardNeedsCachedForward) {
    Network<double> net(make_architecture(ArchName::shallow, 10, 8));
    Workspace<double> ws;
    std::vector<double> g(net.parameter_count());
    EXPECT_THROW(net.backward(ws, Tensor<double>(1, 1, 8), g), std::logic_error);
    net.forward(Tensor<double>(1, 10, 8), ws);
    net.backward(ws, Tensor<double>(1, 1, 8), g);
    EXPECT_THROW(net.backward(ws, Tensor<double>(1, 1, 8), g), std::logic_error);
}

TEST(Network, ZeroWeightsZeroInputZeroTargetGivesZeroGradients) {
    Network<double> net(make_architecture(ArchName::shallow, 12, 16));
    Workspace<double> ws;
    const auto& out = net.forward(Tensor<double>(1, 12, 16), ws);
    Tensor<double> g(1, 1, 16);
    std::vector<double> target(16, 0.0);
    mse_loss<double>(out.data, target, g.data);
    std::vector<double> grads(net.parameter_count(), 0.0);
    net.backward(ws, g, grads);
    for (double v : grads) EXPECT_EQ(v, 0.0);
}

TEST(Network, DeepStackGradientMatchesFiniteDifferencesOnSampledParameters) {
    // Whole deep architecture at a tiny size; a sample of parameters is probed.
    Network<double> net(make_architecture(ArchName::deep, 16, 6, 8));
    arim::Rng rng(11);
    for (auto& p : net.parameters()) p = rng.uniform(-0.4, 0.4);
    Tensor<double> x(1, 16, 6);
    for (auto& v : x.data) v = rng.uniform(0.0, 1.0);
    std::vector<double> target(6);
    for (auto& v : target) v = rng.uniform();
    Workspace<double> ws;
    const auto& out = net.forward(x, ws);
    Tensor<double> g(1, 1, 6);
    mse_loss<double>(out.data, target, g.data);
    std::vector<double> grads(net.parameter_count(), 0.0);
    net.backward(ws, g, grads);

    std::vector<double> flat(net.parameters().begin(), net.parameters().end());
    auto loss = [&] {
        std::copy(flat.begin(), flat.end(), net.parameters().begin());
        return mse_loss<double>(net.forward(x).data, target);
    };
    std::size_t probed = 0, agreeing = 0;
    for (std::size_t i = 0; i < flat.size(); i += 7) {
        const double numeric = oracle::central_difference(flat, i, 1e-6, loss);
        ++probed;
        agreeing += oracle::rel_error(grads[i], numeric) < 1e-4 || std::abs(grads[i] - numeric) < 1e-9;
    }
    // Random ReLU stacks can sit on a kink for a handful of probes.
    EXPECT_GE(static_cast<double>(agreeing), 0.97 * static_cast<double>(probed));
}

TEST(Adam, HandEvaluatedFirstStep) {
    std::vector<double> w{1.0};
    const std::vector<double> g{1.0};
    AdamConfig c;
    c.learning_rate = 0.1;
    c.weight_decay = 0.0;
    AdamState s;
    adam_step<double>(w, g, c, s, 1);
    EXPECT_NEAR(w[0], 1.0 - 0.1 * (1.0 / (1.0 + 1e-8)), 1e-15);
    EXPECT_NEAR(w[0], 0.9, 1e-8);
}

TEST(Adam, ZeroGradientWithoutDecayLeavesParameters) {
    std::vector<float> w{0.5f, -2.0f};
    const std::vector<float> g{0.0f, 0.0f};
    AdamConfig c;
    c.weight_decay = 0.0;
    AdamState s;
    for (std::uint64_t t = 1; t <= 5; ++t) adam_step<float>(w, g, c, s, t);
    EXPECT_EQ(w, (std::vector<float>{0.5f, -2.0f}));
}

TEST(Adam, WeightDecayEntersAsGradientTerm) {
    // With g = 0 and decay wd the effective gradient is wd * w, so the first
    // bias-corrected step moves w by -lr * sign(w).
    std::vector<double> w{2.0};
    const std::vector<double> g{0.0};
    AdamConfig c;
    c.learning_rate = 0.01;
    c.weight_decay = 0.5;
    c.epsilon = 0.0;
    AdamState s;
    adam_step<double>(w, g, c, s, 1);
    EXPECT_NEAR(w[0], 1.99, 1e-12);
}

TEST(Adam, DeterministicAndValidated) {
    std::vector<float> a{1, 2, 3}, b{1, 2, 3};
    const std::vector<float> g{0.1f, -0.2f, 0.3f};
    AdamState sa, sb;
    AdamConfig c;
    for (std::uint64_t t = 1; t <= 3; ++t) {
        adam_step<float>(a, g, c, sa, t);
        adam_step<float>(b, g, c, sb, t);
    }
    EXPECT_EQ(a, b);
    EXPECT_THROW(adam_step<float>(a, g, c, sa, 0), std::invalid_argument);
}
