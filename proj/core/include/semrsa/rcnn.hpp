#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semrsa/diagnostics.hpp"
#include "semrsa/matrix.hpp"
#include "semrsa/rdm.hpp"

namespace semrsa {

/// Channel-major (c, y, x) feature map.
struct FeatureMap {
    int channels = 0, height = 0, width = 0;
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(int c, int h, int w) : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, 0.0) {}

    double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    double at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    std::size_t size() const noexcept { return data.size(); }
};

struct LayerSpec {
    int channels = 0;
    int kernel = 3;
    int downsample = 1;  // stride of the bottom-up convolution
    int height = 0;      // derived
    int width = 0;       // derived
};

struct RcnnSpec {
    int input_height = 64;
    int input_width = 64;
    int input_channels = 3;
    int timesteps = 6;
    int readout_dim = 512;
    std::string nonlinearity = "relu";
    std::vector<LayerSpec> layers;

    /// Fills derived layer dims; throws on a non-integer downsampling.
    void finalize();
    std::size_t flat_size(std::size_t layer) const;

    /// Ten layers on a 64x64x3 input, 3x3 kernels, stride 2 at layers 2/4/6/8.
    static RcnnSpec desk_default();
};

/// out x in x k x k convolution kernel.
struct ConvKernel {
    int out_channels = 0, in_channels = 0, size = 0;
    std::vector<double> weights;

    ConvKernel() = default;
    ConvKernel(int out_c, int in_c, int k)
        : out_channels(out_c), in_channels(in_c), size(k), weights(static_cast<std::size_t>(out_c) * in_c * k * k, 0.0) {}

    double& at(int o, int i, int ky, int kx) { return weights[((static_cast<std::size_t>(o) * in_channels + i) * size + ky) * size + kx]; }
    double at(int o, int i, int ky, int kx) const { return weights[((static_cast<std::size_t>(o) * in_channels + i) * size + ky) * size + kx]; }
    bool is_zero() const noexcept;
};

struct LayerWeights {
    ConvKernel bottom_up;
    std::vector<double> bias;
    ConvKernel lateral;
    std::optional<ConvKernel> top_down;  // absent on the last layer
};

struct RcnnWeights {
    std::vector<LayerWeights> layers;
    RowMatrix readout;  // readout_dim x flat(last layer)
    Vector readout_bias;

    void validate(const RcnnSpec& spec) const;
};

struct ActivationSet {
    std::vector<std::vector<FeatureMap>> activations;  // [layer][timestep - 1]
    Vector embedding_prediction;                       // readout at the final timestep
};

/// Same-padded convolution with the given stride; output dims are input / stride.
FeatureMap conv2d(const FeatureMap& input, const ConvKernel& kernel, int stride);
FeatureMap upsample_nearest(const FeatureMap& input, int factor);

/// a_l(t) = relu(BU_l(a_{l-1}(t)) + b_l + LAT_l(a_l(t-1)) + TD_l(a_{l+1}(t-1)))
/// with zero initial state; the top-down input is convolved at the upper
/// layer's resolution and then upsampled.
ActivationSet forward(const FeatureMap& image, const RcnnWeights& weights, const RcnnSpec& spec);

/// Readout of layer L at a given timestep (1-based).
Vector readout_at(const ActivationSet& acts, const RcnnWeights& weights, int timestep);

double cosine_loss(std::span<const double> prediction, std::span<const double> target,
                   Diagnostics* diag = nullptr);

/// Copy with lateral and top-down kernels zeroed.
RcnnWeights feedforward_variant(const RcnnWeights& weights);

struct LayerRdm {
    int layer = 0;     // 1-based
    int timestep = 0;  // 1-based
    Rdm rdm;
};

/// Cosine RDMs over images for every requested (layer, timestep), layer-major.
std::vector<LayerRdm> layer_rdms(const std::vector<FeatureMap>& images, const std::vector<ConditionId>& ids,
                                 const RcnnWeights& weights, const RcnnSpec& spec, const std::vector<int>& layers,
                                 const std::vector<int>& timesteps, Diagnostics* diag = nullptr);

/// Gaussian initialization scaled by fan-in; recurrent kernels get `recurrent_scale`.
RcnnWeights random_weights(const RcnnSpec& spec, std::uint64_t seed, double recurrent_scale = 0.1);

/// RCS1 JSON spec file.
nlohmann::json spec_to_json(const RcnnSpec& spec);
RcnnSpec spec_from_json(const nlohmann::json& j);
void write_spec(const std::filesystem::path& path, const RcnnSpec& spec);
RcnnSpec read_spec(const std::filesystem::path& path);

/// RCW1: JSON manifest {magic, tensors: [{name, shape, offset}]} with byte
/// offsets into the float32 blob that follows. Tensor names:
/// layer<l>.bottom_up.weight [out,in,k,k], layer<l>.bottom_up.bias [out],
/// layer<l>.lateral.weight, layer<l>.top_down.weight [C_l, C_{l+1}, k, k],
/// readout.weight [readout_dim, flat], readout.bias [readout_dim].
void write_weights(const std::filesystem::path& path, const RcnnWeights& weights, const RcnnSpec& spec);
RcnnWeights read_weights(const std::filesystem::path& path, const RcnnSpec& spec);

/// Binary PPM (P6) image scaled to [0, 1].
FeatureMap read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const FeatureMap& image);

}  // namespace semrsa
