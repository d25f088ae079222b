#include <cmath>

#include <gtest/gtest.h>

#include <semrsa/error.hpp>
#include <semrsa/random.hpp>
#include <semrsa/rcnn.hpp>

#include "test_support.hpp"

using namespace semrsa;
using semrsa::testing::TempDir;

namespace {

FeatureMap random_image(int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    FeatureMap m(c, h, w);
    for (double& v : m.data) v = rng.uniform();
    return m;
}

ConvKernel random_kernel(int o, int i, int k, std::uint64_t seed) {
    Rng rng(seed);
    ConvKernel kern(o, i, k);
    for (double& w : kern.weights) w = rng.normal();
    return kern;
}

FeatureMap naive_conv(const FeatureMap& in, const ConvKernel& k, int stride) {
    const int pad = k.size / 2;
    FeatureMap out(k.out_channels, in.height / stride, in.width / stride);
    for (int o = 0; o < k.out_channels; ++o)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) {
                double acc = 0;
                for (int i = 0; i < k.in_channels; ++i)
                    for (int ky = 0; ky < k.size; ++ky)
                        for (int kx = 0; kx < k.size; ++kx) {
                            const int sy = y * stride + ky - pad, sx = x * stride + kx - pad;
                            if (sy >= 0 && sy < in.height && sx >= 0 && sx < in.width)
                                acc += k.at(o, i, ky, kx) * in.at(i, sy, sx);
                        }
                out.at(o, y, x) = acc;
            }
    return out;
}

RcnnSpec small_spec(int timesteps = 4) {
    RcnnSpec s;
    s.input_height = 8;
    s.input_width = 8;
    s.timesteps = timesteps;
    s.readout_dim = 5;
    s.layers = {{3, 3, 1, 0, 0}, {4, 3, 2, 0, 0}, {4, 3, 2, 0, 0}};
    s.finalize();
    return s;
}

double max_diff(const FeatureMap& a, const FeatureMap& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace

TEST(Conv2d, MatchesNaiveReference) {
    for (int stride : {1, 2})
        for (int k : {1, 3, 5}) {
            const FeatureMap in = random_image(3, 8, 12, 7u + stride * 10u + k);
            const ConvKernel kern = random_kernel(4, 3, k, 99u + k);
            EXPECT_LT(max_diff(conv2d(in, kern, stride), naive_conv(in, kern, stride)), 1e-12);
        }
}

TEST(Conv2d, ChannelMismatchThrows) {
    EXPECT_THROW(conv2d(random_image(2, 4, 4, 1), random_kernel(1, 3, 3, 1), 1), DimensionError);
    EXPECT_THROW(conv2d(random_image(3, 5, 4, 1), random_kernel(1, 3, 3, 1), 2), DimensionError);
}

TEST(Spec, DeskDefaultShapes) {
    const RcnnSpec s = RcnnSpec::desk_default();
    ASSERT_EQ(s.layers.size(), 10u);
    EXPECT_EQ(s.layers[0].height, 64);
    EXPECT_EQ(s.layers[1].height, 32);
    EXPECT_EQ(s.layers[7].height, 4);
    EXPECT_EQ(s.layers[9].height, 4);
    EXPECT_EQ(s.flat_size(9), 128u * 16u);
    EXPECT_EQ(s.timesteps, 6);
    EXPECT_EQ(s.readout_dim, 512);
}

TEST(Spec, Validation) {
    RcnnSpec s = small_spec();
    s.layers[1].downsample = 3;
    EXPECT_THROW(s.finalize(), ValidationError);
    s = small_spec();
    s.layers[0].kernel = 2;
    EXPECT_THROW(s.finalize(), ValidationError);
    s = small_spec();
    s.nonlinearity = "tanh";
    EXPECT_THROW(s.finalize(), ValidationError);
}

TEST(Forward, ShapesAndRelu) {
    const RcnnSpec s = small_spec();
    const RcnnWeights w = random_weights(s, 3, 0.3);
    const ActivationSet a = forward(random_image(3, 8, 8, 4), w, s);
    ASSERT_EQ(a.activations.size(), 3u);
    for (std::size_t l = 0; l < 3; ++l) {
        ASSERT_EQ(a.activations[l].size(), 4u);
        for (const auto& fm : a.activations[l]) {
            EXPECT_EQ(fm.channels, s.layers[l].channels);
            EXPECT_EQ(fm.height, s.layers[l].height);
            for (double v : fm.data) EXPECT_GE(v, 0.0);
        }
    }
    EXPECT_EQ(a.embedding_prediction.size(), 5);
}

TEST(Forward, FirstTimestepIgnoresRecurrentWeights) {
    const RcnnSpec s = small_spec();
    const RcnnWeights w = random_weights(s, 5, 0.5);
    RcnnWeights other = w;
    for (auto& L : other.layers) {
        for (double& x : L.lateral.weights) x = 3.0 * x + 0.7;
        if (L.top_down)
            for (double& x : L.top_down->weights) x = -2.0 * x + 0.1;
    }
    const FeatureMap img = random_image(3, 8, 8, 6);
    const ActivationSet a = forward(img, w, s), b = forward(img, other, s);
    for (std::size_t l = 0; l < 3; ++l) EXPECT_EQ(a.activations[l][0].data, b.activations[l][0].data);
    EXPECT_NE(a.activations[0][1].data, b.activations[0][1].data);
}

TEST(Forward, ZeroRecurrenceIsTimeConstant) {
    const RcnnSpec s = small_spec(6);
    const RcnnWeights w = feedforward_variant(random_weights(s, 8, 0.5));
    const ActivationSet a = forward(random_image(3, 8, 8, 9), w, s);
    for (std::size_t l = 0; l < 3; ++l)
        for (int t = 1; t < 6; ++t) EXPECT_EQ(a.activations[l][t].data, a.activations[l][0].data);
    EXPECT_EQ(readout_at(a, w, 1), readout_at(a, w, 6));
}

TEST(Forward, TinyNetworkMatchesHandUnrolled) {
    // Two single-channel layers, 1x1 kernels, 2x2 input, two timesteps.
    RcnnSpec s;
    s.input_height = 2;
    s.input_width = 2;
    s.input_channels = 1;
    s.timesteps = 2;
    s.readout_dim = 2;
    s.layers = {{1, 1, 1, 0, 0}, {1, 1, 1, 0, 0}};
    s.finalize();
    const double w1 = 0.8, b1 = -0.1, l1 = 0.5, td1 = -0.3, w2 = 1.5, b2 = 0.05, l2 = 0.25;
    RcnnWeights w;
    w.layers.resize(2);
    w.layers[0].bottom_up = ConvKernel(1, 1, 1);
    w.layers[0].bottom_up.weights = {w1};
    w.layers[0].bias = {b1};
    w.layers[0].lateral = ConvKernel(1, 1, 1);
    w.layers[0].lateral.weights = {l1};
    w.layers[0].top_down = ConvKernel(1, 1, 1);
    w.layers[0].top_down->weights = {td1};
    w.layers[1].bottom_up = ConvKernel(1, 1, 1);
    w.layers[1].bottom_up.weights = {w2};
    w.layers[1].bias = {b2};
    w.layers[1].lateral = ConvKernel(1, 1, 1);
    w.layers[1].lateral.weights = {l2};
    w.readout = RowMatrix(2, 4);
    w.readout << 1, 2, 3, 4, -1, 0.5, 0, 2;
    w.readout_bias = Vector(2);
    w.readout_bias << 0.1, -0.2;

    FeatureMap img(1, 2, 2);
    img.data = {0.0, 0.2, 0.6, 1.0};
    const ActivationSet a = forward(img, w, s);
    auto relu = [](double v) { return v > 0 ? v : 0.0; };
    Vector flat(4);
    for (int p = 0; p < 4; ++p) {
        const double x = img.data[p];
        const double a1_1 = relu(w1 * x + b1);
        const double a2_1 = relu(w2 * a1_1 + b2);
        const double a1_2 = relu(w1 * x + b1 + l1 * a1_1 + td1 * a2_1);
        const double a2_2 = relu(w2 * a1_2 + b2 + l2 * a2_1);
        EXPECT_NEAR(a.activations[0][0].data[p], a1_1, 1e-15);
        EXPECT_NEAR(a.activations[1][0].data[p], a2_1, 1e-15);
        EXPECT_NEAR(a.activations[0][1].data[p], a1_2, 1e-15);
        EXPECT_NEAR(a.activations[1][1].data[p], a2_2, 1e-15);
        flat(p) = a2_2;
    }
    const Vector expect = w.readout * flat + w.readout_bias;
    EXPECT_LT((a.embedding_prediction - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, TopDownIsUpsampledFromCoarserLayer) {
    // Layer 2 halves the resolution; its top-down signal must reach every
    // layer-1 pixel of the corresponding 2x2 block.
    RcnnSpec s;
    s.input_height = 4;
    s.input_width = 4;
    s.input_channels = 1;
    s.timesteps = 2;
    s.readout_dim = 1;
    s.layers = {{1, 1, 1, 0, 0}, {1, 1, 2, 0, 0}};
    s.finalize();
    RcnnWeights w;
    w.layers.resize(2);
    w.layers[0].bottom_up = ConvKernel(1, 1, 1);
    w.layers[0].bottom_up.weights = {1.0};
    w.layers[0].bias = {0.0};
    w.layers[0].lateral = ConvKernel(1, 1, 1);
    w.layers[0].top_down = ConvKernel(1, 1, 1);
    w.layers[0].top_down->weights = {1.0};
    w.layers[1].bottom_up = ConvKernel(1, 1, 1);
    w.layers[1].bottom_up.weights = {1.0};
    w.layers[1].bias = {0.0};
    w.layers[1].lateral = ConvKernel(1, 1, 1);
    w.readout = RowMatrix::Ones(1, 4);
    w.readout_bias = Vector::Zero(1);
    FeatureMap img(1, 4, 4);
    for (int i = 0; i < 16; ++i) img.data[i] = i / 16.0;
    const ActivationSet a = forward(img, w, s);
    const auto& a2 = a.activations[1][0];  // stride-2 sampling of the input
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            EXPECT_DOUBLE_EQ(a.activations[0][1].at(0, y, x), img.at(0, y, x) + a2.at(0, y / 2, x / 2));
}

TEST(Forward, InputValidation) {
    const RcnnSpec s = small_spec();
    const RcnnWeights w = random_weights(s, 1);
    FeatureMap img = random_image(3, 8, 8, 2);
    EXPECT_THROW(forward(random_image(3, 4, 8, 2), w, s), ValidationError);
    img.data[5] = 1.5;
    EXPECT_THROW(forward(img, w, s), ValidationError);
    RcnnWeights bad = w;
    bad.layers[1].lateral = ConvKernel(2, 2, 3);
    EXPECT_THROW(forward(random_image(3, 8, 8, 2), bad, s), ValidationError);
}

TEST(Forward, OverflowReportsLayerAndTimestep) {
    const RcnnSpec s = small_spec();
    RcnnWeights w = random_weights(s, 1);
    for (double& x : w.layers[0].bottom_up.weights) x = 1e300;
    for (double& x : w.layers[1].bottom_up.weights) x = 1e300;
    FeatureMap img(3, 8, 8);
    for (double& v : img.data) v = 1.0;
    try {
        forward(img, w, s);
        FAIL() << "expected a numeric error";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("layer2"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("timestep 1"), std::string::npos);
    }
}

TEST(CosineLoss, IdentityAndOpposite) {
    const std::vector<double> a{1, 2, 3}, b{-1, -2, -3};
    EXPECT_EQ(cosine_loss(a, a), 0.0);
    EXPECT_DOUBLE_EQ(cosine_loss(a, b), 2.0);
}

TEST(LayerRdms, MatchesPerImageForward) {
    const RcnnSpec s = small_spec(3);
    const RcnnWeights w = random_weights(s, 12, 0.4);
    std::vector<FeatureMap> images;
    for (int i = 0; i < 6; ++i) images.push_back(random_image(3, 8, 8, 100u + i));
    const auto rdms = layer_rdms(images, {}, w, s, {1, 3}, {1, 3});
    ASSERT_EQ(rdms.size(), 4u);
    EXPECT_EQ(rdms[1].layer, 1);
    EXPECT_EQ(rdms[1].timestep, 3);
    RowMatrix p(6, static_cast<Eigen::Index>(s.flat_size(2)));
    for (int i = 0; i < 6; ++i) {
        const auto a = forward(images[i], w, s);
        for (std::size_t j = 0; j < s.flat_size(2); ++j) p(i, j) = a.activations[2][2].data[j];
    }
    const Rdm expect = build_rdm(p, Metric::cosine);
    EXPECT_EQ(rdms[3].rdm.values(), expect.values());
    EXPECT_THROW(layer_rdms(images, {}, w, s, {4}, {1}), ValidationError);
    EXPECT_THROW(layer_rdms(images, {}, w, s, {1}, {4}), ValidationError);
}

TEST(WeightFormat, RoundTripAndShapeCheck) {
    TempDir dir;
    const RcnnSpec s = small_spec();
    const RcnnWeights w = random_weights(s, 21, 0.2);
    write_spec(dir / "net.json", s);
    write_weights(dir / "net.rcw", w, s);
    const RcnnSpec s2 = read_spec(dir / "net.json");
    EXPECT_EQ(spec_to_json(s2), spec_to_json(s));
    const RcnnWeights r = read_weights(dir / "net.rcw", s2);
    for (std::size_t l = 0; l < 3; ++l)
        for (std::size_t i = 0; i < w.layers[l].bottom_up.weights.size(); ++i)
            EXPECT_EQ(r.layers[l].bottom_up.weights[i], static_cast<double>(static_cast<float>(w.layers[l].bottom_up.weights[i])));
    EXPECT_FALSE(r.layers[2].top_down.has_value());
    RcnnSpec wider = s;
    wider.layers[0].channels = 5;
    wider.finalize();
    EXPECT_THROW(read_weights(dir / "net.rcw", wider), ValidationError);
}

TEST(Ppm, RoundTrip) {
    TempDir dir;
    FeatureMap img(3, 4, 5);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(i % 256) / 255.0;
    write_ppm(dir / "a.ppm", img);
    const FeatureMap r = read_ppm(dir / "a.ppm");
    EXPECT_EQ(r.channels, 3);
    EXPECT_EQ(r.height, 4);
    EXPECT_EQ(r.width, 5);
    EXPECT_LT(max_diff(r, img), 1e-12);
}
