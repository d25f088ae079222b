#include "semrsa/rcnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "semrsa/binary_format.hpp"
#include "semrsa/error.hpp"
#include "semrsa/random.hpp"

namespace semrsa {

namespace {

constexpr const char* kModule = "rcnn_inference";

void add_into(FeatureMap& acc, const FeatureMap& term) {
    for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += term.data[i];
}

std::string layer_name(std::size_t l) { return "layer" + std::to_string(l + 1); }

void check_kernel(const ConvKernel& k, int out_c, int in_c, int size, const std::string& what) {
    if (k.out_channels != out_c || k.in_channels != in_c || k.size != size ||
        k.weights.size() != static_cast<std::size_t>(out_c) * in_c * size * size)
        throw ValidationError(kModule, what + " has a shape inconsistent with the network spec");
    for (double w : k.weights)
        if (!std::isfinite(w)) throw ValidationError(kModule, what + " has a non-finite weight");
}

void fill_gaussian(std::vector<double>& values, Rng& rng, double sd) {
    for (double& v : values) v = sd * rng.normal();
}

}  // namespace

void RcnnSpec::finalize() {
    if (layers.empty()) throw ValidationError(kModule, "spec has no layers");
    if (input_height <= 0 || input_width <= 0 || input_channels <= 0)
        throw ValidationError(kModule, "input dims must be positive");
    if (timesteps < 1) throw ValidationError(kModule, "timesteps must be at least 1");
    if (readout_dim < 1) throw ValidationError(kModule, "readout_dim must be at least 1");
    if (nonlinearity != "relu") throw ValidationError(kModule, "only the relu nonlinearity is supported");
    int h = input_height, w = input_width;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& L = layers[l];
        if (L.channels < 1) throw ValidationError(kModule, layer_name(l) + " needs at least one channel");
        if (L.kernel < 1 || L.kernel % 2 == 0) throw ValidationError(kModule, layer_name(l) + " kernel must be odd");
        if (L.downsample < 1 || h % L.downsample != 0 || w % L.downsample != 0)
            throw ValidationError(kModule, layer_name(l) + " downsampling does not divide its input dims");
        h /= L.downsample;
        w /= L.downsample;
        L.height = h;
        L.width = w;
    }
}

std::size_t RcnnSpec::flat_size(std::size_t layer) const {
    const auto& L = layers.at(layer);
    return static_cast<std::size_t>(L.channels) * L.height * L.width;
}

RcnnSpec RcnnSpec::desk_default() {
    RcnnSpec spec;
    const int channels[10] = {16, 16, 32, 32, 64, 64, 96, 96, 128, 128};
    for (int l = 0; l < 10; ++l) {
        const int stride = (l == 1 || l == 3 || l == 5 || l == 7) ? 2 : 1;
        spec.layers.push_back({channels[l], 3, stride, 0, 0});
    }
    spec.finalize();
    return spec;
}

bool ConvKernel::is_zero() const noexcept {
    return std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; });
}

void RcnnWeights::validate(const RcnnSpec& spec) const {
    if (layers.size() != spec.layers.size()) throw ValidationError(kModule, "weights and spec differ in layer count");
    int in_c = spec.input_channels;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& L = spec.layers[l];
        const auto& W = layers[l];
        check_kernel(W.bottom_up, L.channels, in_c, L.kernel, layer_name(l) + ".bottom_up");
        if (W.bias.size() != static_cast<std::size_t>(L.channels))
            throw ValidationError(kModule, layer_name(l) + ".bottom_up.bias has the wrong length");
        check_kernel(W.lateral, L.channels, L.channels, L.kernel, layer_name(l) + ".lateral");
        if (l + 1 < layers.size()) {
            if (!W.top_down) throw ValidationError(kModule, layer_name(l) + " lacks a top-down kernel");
            check_kernel(*W.top_down, L.channels, spec.layers[l + 1].channels, L.kernel, layer_name(l) + ".top_down");
        } else if (W.top_down) {
            throw ValidationError(kModule, "the last layer cannot have a top-down kernel");
        }
        in_c = L.channels;
    }
    if (readout.rows() != spec.readout_dim ||
        static_cast<std::size_t>(readout.cols()) != spec.flat_size(spec.layers.size() - 1) ||
        readout_bias.size() != spec.readout_dim)
        throw ValidationError(kModule, "readout shape inconsistent with the network spec");
    if (!readout.allFinite() || !readout_bias.allFinite()) throw ValidationError(kModule, "readout has a non-finite weight");
}

FeatureMap conv2d(const FeatureMap& input, const ConvKernel& kernel, int stride) {
    if (kernel.in_channels != input.channels) throw DimensionError(kModule, "convolution input channel mismatch");
    if (input.height % stride != 0 || input.width % stride != 0)
        throw DimensionError(kModule, "stride does not divide the input dims");
    const int oh = input.height / stride, ow = input.width / stride;
    const int k = kernel.size, pad = k / 2;
    FeatureMap out(kernel.out_channels, oh, ow);
    for (int o = 0; o < kernel.out_channels; ++o) {
        double* dst = out.data.data() + static_cast<std::size_t>(o) * oh * ow;
        for (int i = 0; i < input.channels; ++i) {
            const double* src = input.data.data() + static_cast<std::size_t>(i) * input.height * input.width;
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const double w = kernel.at(o, i, ky, kx);
                    if (w == 0.0) continue;
                    for (int y = 0; y < oh; ++y) {
                        const int sy = y * stride + ky - pad;
                        if (sy < 0 || sy >= input.height) continue;
                        const double* srow = src + static_cast<std::size_t>(sy) * input.width;
                        double* drow = dst + static_cast<std::size_t>(y) * ow;
                        for (int x = 0; x < ow; ++x) {
                            const int sx = x * stride + kx - pad;
                            if (sx < 0 || sx >= input.width) continue;
                            drow[x] += w * srow[sx];
                        }
                    }
                }
        }
    }
    return out;
}

FeatureMap upsample_nearest(const FeatureMap& input, int factor) {
    if (factor == 1) return input;
    FeatureMap out(input.channels, input.height * factor, input.width * factor);
    for (int c = 0; c < out.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) out.at(c, y, x) = input.at(c, y / factor, x / factor);
    return out;
}

ActivationSet forward(const FeatureMap& image, const RcnnWeights& weights, const RcnnSpec& spec) {
    if (image.channels != spec.input_channels || image.height != spec.input_height || image.width != spec.input_width)
        throw ValidationError(kModule, "image dims do not match the network input dims");
    for (double v : image.data)
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(kModule, "image pixels must lie in [0, 1]");
    weights.validate(spec);
    const std::size_t L = spec.layers.size();
    const int T = spec.timesteps;
    ActivationSet acts;
    acts.activations.assign(L, {});

    std::vector<bool> lateral_active(L), top_down_active(L);
    for (std::size_t l = 0; l < L; ++l) {
        lateral_active[l] = !weights.layers[l].lateral.is_zero();
        top_down_active[l] = weights.layers[l].top_down && !weights.layers[l].top_down->is_zero();
    }

    for (int t = 1; t <= T; ++t) {
        for (std::size_t l = 0; l < L; ++l) {
            const auto& W = weights.layers[l];
            const FeatureMap& below = l == 0 ? image : acts.activations[l - 1][static_cast<std::size_t>(t - 1)];
            FeatureMap pre = conv2d(below, W.bottom_up, spec.layers[l].downsample);
            for (int c = 0; c < pre.channels; ++c) {
                double* p = pre.data.data() + static_cast<std::size_t>(c) * pre.height * pre.width;
                for (int i = 0; i < pre.height * pre.width; ++i) p[i] += W.bias[static_cast<std::size_t>(c)];
            }
            // State at t - 1 is zero for t = 1, so recurrent terms only enter afterwards.
            if (t > 1) {
                if (lateral_active[l]) add_into(pre, conv2d(acts.activations[l][static_cast<std::size_t>(t - 2)], W.lateral, 1));
                if (top_down_active[l]) {
                    const FeatureMap td = conv2d(acts.activations[l + 1][static_cast<std::size_t>(t - 2)], *W.top_down, 1);
                    add_into(pre, upsample_nearest(td, spec.layers[l + 1].downsample));
                }
            }
            for (double& v : pre.data) {
                if (!std::isfinite(v))
                    throw NumericError(kModule, "non-finite activation at " + layer_name(l) + ", timestep " + std::to_string(t));
                v = v > 0.0 ? v : 0.0;
            }
            acts.activations[l].push_back(std::move(pre));
        }
    }
    acts.embedding_prediction = readout_at(acts, weights, T);
    return acts;
}

Vector readout_at(const ActivationSet& acts, const RcnnWeights& weights, int timestep) {
    const auto& top = acts.activations.back().at(static_cast<std::size_t>(timestep - 1));
    const Eigen::Map<const Vector> flat(top.data.data(), static_cast<Eigen::Index>(top.data.size()));
    Vector out = weights.readout * flat + weights.readout_bias;
    if (!out.allFinite()) throw NumericError(kModule, "non-finite readout at timestep " + std::to_string(timestep));
    return out;
}

double cosine_loss(std::span<const double> prediction, std::span<const double> target, Diagnostics* diag) {
    return cosine_distance(prediction, target, diag);
}

RcnnWeights feedforward_variant(const RcnnWeights& weights) {
    RcnnWeights out = weights;
    for (auto& L : out.layers) {
        std::fill(L.lateral.weights.begin(), L.lateral.weights.end(), 0.0);
        if (L.top_down) std::fill(L.top_down->weights.begin(), L.top_down->weights.end(), 0.0);
    }
    return out;
}

std::vector<LayerRdm> layer_rdms(const std::vector<FeatureMap>& images, const std::vector<ConditionId>& ids,
                                 const RcnnWeights& weights, const RcnnSpec& spec, const std::vector<int>& layers,
                                 const std::vector<int>& timesteps, Diagnostics* diag) {
    if (images.size() < 2) throw ValidationError(kModule, "layer_rdms needs at least 2 images");
    if (!ids.empty() && ids.size() != images.size()) throw DimensionError(kModule, "image id count differs from image count");
    for (int l : layers)
        if (l < 1 || l > static_cast<int>(spec.layers.size())) throw ValidationError(kModule, "layer " + std::to_string(l) + " out of range");
    for (int t : timesteps)
        if (t < 1 || t > spec.timesteps) throw ValidationError(kModule, "timestep " + std::to_string(t) + " out of range");
    weights.validate(spec);

    std::vector<RowMatrix> patterns;
    for (int l : layers)
        for (std::size_t t = 0; t < timesteps.size(); ++t)
            patterns.emplace_back(static_cast<Eigen::Index>(images.size()),
                                  static_cast<Eigen::Index>(spec.flat_size(static_cast<std::size_t>(l - 1))));

    const auto n = static_cast<std::ptrdiff_t>(images.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            const ActivationSet acts = forward(images[static_cast<std::size_t>(i)], weights, spec);
            std::size_t slot = 0;
            for (int l : layers)
                for (int t : timesteps) {
                    const auto& fm = acts.activations[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(t - 1)];
                    patterns[slot++].row(i) = Eigen::Map<const Eigen::RowVectorXd>(fm.data.data(), static_cast<Eigen::Index>(fm.data.size()));
                }
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<LayerRdm> out;
    std::size_t slot = 0;
    for (int l : layers)
        for (int t : timesteps) out.push_back({l, t, build_rdm(patterns[slot++], Metric::cosine, ids, diag)});
    return out;
}

RcnnWeights random_weights(const RcnnSpec& spec, std::uint64_t seed, double recurrent_scale) {
    Rng rng(seed);
    RcnnWeights w;
    int in_c = spec.input_channels;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& L = spec.layers[l];
        LayerWeights lw;
        lw.bottom_up = ConvKernel(L.channels, in_c, L.kernel);
        fill_gaussian(lw.bottom_up.weights, rng, std::sqrt(2.0 / (in_c * L.kernel * L.kernel)));
        lw.bias.assign(static_cast<std::size_t>(L.channels), 0.0);
        fill_gaussian(lw.bias, rng, 0.01);
        lw.lateral = ConvKernel(L.channels, L.channels, L.kernel);
        fill_gaussian(lw.lateral.weights, rng, recurrent_scale * std::sqrt(2.0 / (L.channels * L.kernel * L.kernel)));
        if (l + 1 < spec.layers.size()) {
            const int up_c = spec.layers[l + 1].channels;
            lw.top_down = ConvKernel(L.channels, up_c, L.kernel);
            fill_gaussian(lw.top_down->weights, rng, recurrent_scale * std::sqrt(2.0 / (up_c * L.kernel * L.kernel)));
        }
        w.layers.push_back(std::move(lw));
        in_c = L.channels;
    }
    const auto flat = static_cast<Eigen::Index>(spec.flat_size(spec.layers.size() - 1));
    w.readout.resize(spec.readout_dim, flat);
    for (Eigen::Index i = 0; i < w.readout.size(); ++i) w.readout.data()[i] = rng.normal() / std::sqrt(static_cast<double>(flat));
    w.readout_bias = Vector::Zero(spec.readout_dim);
    return w;
}

nlohmann::json spec_to_json(const RcnnSpec& spec) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& L : spec.layers)
        layers.push_back({{"channels", L.channels}, {"kernel", L.kernel}, {"downsample", L.downsample},
                          {"height", L.height}, {"width", L.width}});
    return {{"magic", "RCS1"},
            {"input", {{"height", spec.input_height}, {"width", spec.input_width}, {"channels", spec.input_channels}}},
            {"timesteps", spec.timesteps},
            {"readout_dim", spec.readout_dim},
            {"nonlinearity", spec.nonlinearity},
            {"layers", layers}};
}

RcnnSpec spec_from_json(const nlohmann::json& j) {
    if (j.value("magic", std::string{}) != "RCS1") throw ValidationError(kModule, "expected magic RCS1");
    RcnnSpec spec;
    try {
        const auto& in = j.at("input");
        spec.input_height = in.at("height").get<int>();
        spec.input_width = in.at("width").get<int>();
        spec.input_channels = in.value("channels", 3);
        spec.timesteps = j.value("timesteps", 6);
        spec.readout_dim = j.value("readout_dim", 512);
        spec.nonlinearity = j.value("nonlinearity", std::string("relu"));
        for (const auto& L : j.at("layers"))
            spec.layers.push_back({L.at("channels").get<int>(), L.value("kernel", 3), L.value("downsample", 1), 0, 0});
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(kModule, std::string("malformed RCS1 spec: ") + e.what());
    }
    spec.finalize();
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& L = j["layers"][l];
        if ((L.contains("height") && L["height"].get<int>() != spec.layers[l].height) ||
            (L.contains("width") && L["width"].get<int>() != spec.layers[l].width))
            throw ValidationError(kModule, layer_name(l) + " dims disagree with the downsampling chain");
    }
    return spec;
}

void write_spec(const std::filesystem::path& path, const RcnnSpec& spec) {
    auto out = format::open_output(path, "RCS1");
    out << spec_to_json(spec).dump(2) << '\n';
}

RcnnSpec read_spec(const std::filesystem::path& path) {
    auto in = format::open_input(path, "RCS1");
    try {
        return spec_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(kModule, std::string("RCS1 is not JSON: ") + e.what());
    }
}

void write_weights(const std::filesystem::path& path, const RcnnWeights& weights, const RcnnSpec& spec) {
    weights.validate(spec);
    struct Entry {
        std::string name;
        std::vector<int> shape;
        const double* data;
        std::size_t count;
    };
    std::vector<Entry> entries;
    auto kernel_entry = [&](const std::string& name, const ConvKernel& k) {
        entries.push_back({name, {k.out_channels, k.in_channels, k.size, k.size}, k.weights.data(), k.weights.size()});
    };
    for (std::size_t l = 0; l < weights.layers.size(); ++l) {
        const auto& W = weights.layers[l];
        kernel_entry(layer_name(l) + ".bottom_up.weight", W.bottom_up);
        entries.push_back({layer_name(l) + ".bottom_up.bias", {static_cast<int>(W.bias.size())}, W.bias.data(), W.bias.size()});
        kernel_entry(layer_name(l) + ".lateral.weight", W.lateral);
        if (W.top_down) kernel_entry(layer_name(l) + ".top_down.weight", *W.top_down);
    }
    entries.push_back({"readout.weight", {static_cast<int>(weights.readout.rows()), static_cast<int>(weights.readout.cols())},
                       weights.readout.data(), static_cast<std::size_t>(weights.readout.size())});
    entries.push_back({"readout.bias", {static_cast<int>(weights.readout_bias.size())}, weights.readout_bias.data(),
                       static_cast<std::size_t>(weights.readout_bias.size())});

    nlohmann::json tensors = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& e : entries) {
        tensors.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", offset}});
        offset += e.count * sizeof(float);
    }
    auto out = format::open_output(path, "RCW1");
    format::write_header(out, {{"magic", "RCW1"}, {"dtype", "float32"}, {"bytes", offset}, {"tensors", tensors}});
    for (const auto& e : entries) format::write_f32(out, std::span<const double>(e.data, e.count));
}

RcnnWeights read_weights(const std::filesystem::path& path, const RcnnSpec& spec) {
    auto in = format::open_input(path, "RCW1");
    const auto header = format::read_header(in, "RCW1", path.string());
    const auto bytes = format::field<std::size_t>(header, "bytes", "RCW1");
    const auto blob = format::read_f32(in, bytes / sizeof(float), "RCW1 " + path.string());

    std::map<std::string, std::pair<std::vector<int>, std::size_t>> index;
    for (const auto& t : format::field<nlohmann::json>(header, "tensors", "RCW1"))
        index[t.at("name").get<std::string>()] = {t.at("shape").get<std::vector<int>>(), t.at("offset").get<std::size_t>()};

    auto fetch = [&](const std::string& name, const std::vector<int>& shape) {
        const auto it = index.find(name);
        if (it == index.end()) throw ValidationError(kModule, "RCW1 lacks tensor " + name);
        if (it->second.first != shape) throw ValidationError(kModule, "RCW1 tensor " + name + " has an unexpected shape");
        std::size_t count = 1;
        for (int s : shape) count *= static_cast<std::size_t>(s);
        const std::size_t first = it->second.second / sizeof(float);
        if (it->second.second % sizeof(float) != 0 || first + count > blob.size())
            throw ValidationError(kModule, "RCW1 tensor " + name + " lies outside the blob");
        return std::vector<double>(blob.begin() + static_cast<std::ptrdiff_t>(first),
                                   blob.begin() + static_cast<std::ptrdiff_t>(first + count));
    };
    auto fetch_kernel = [&](const std::string& name, int out_c, int in_c, int k) {
        ConvKernel kernel(out_c, in_c, k);
        kernel.weights = fetch(name, {out_c, in_c, k, k});
        return kernel;
    };

    RcnnWeights w;
    int in_c = spec.input_channels;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& L = spec.layers[l];
        LayerWeights lw;
        lw.bottom_up = fetch_kernel(layer_name(l) + ".bottom_up.weight", L.channels, in_c, L.kernel);
        lw.bias = fetch(layer_name(l) + ".bottom_up.bias", {L.channels});
        lw.lateral = fetch_kernel(layer_name(l) + ".lateral.weight", L.channels, L.channels, L.kernel);
        if (l + 1 < spec.layers.size())
            lw.top_down = fetch_kernel(layer_name(l) + ".top_down.weight", L.channels, spec.layers[l + 1].channels, L.kernel);
        w.layers.push_back(std::move(lw));
        in_c = L.channels;
    }
    const int flat = static_cast<int>(spec.flat_size(spec.layers.size() - 1));
    const auto ro = fetch("readout.weight", {spec.readout_dim, flat});
    w.readout = Eigen::Map<const RowMatrix>(ro.data(), spec.readout_dim, flat);
    const auto rb = fetch("readout.bias", {spec.readout_dim});
    w.readout_bias = Eigen::Map<const Vector>(rb.data(), spec.readout_dim);
    w.validate(spec);
    return w;
}

FeatureMap read_ppm(const std::filesystem::path& path) {
    auto in = format::open_input(path, "PPM");
    std::string magic;
    in >> magic;
    if (magic != "P6") throw ValidationError(kModule, path.string() + " is not a binary PPM (P6)");
    auto next_int = [&]() {
        in >> std::ws;
        while (in.peek() == '#') {
            std::string comment;
            std::getline(in, comment);
            in >> std::ws;
        }
        int v = 0;
        if (!(in >> v)) throw ValidationError(kModule, path.string() + ": malformed PPM header");
        return v;
    };
    const int width = next_int(), height = next_int(), maxval = next_int();
    if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255)
        throw ValidationError(kModule, path.string() + ": unsupported PPM dims or maxval");
    in.get();
    std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw IoError(kModule, path.string() + ": truncated PPM");
    FeatureMap image(3, height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c)
                image.at(c, y, x) = raw[(static_cast<std::size_t>(y) * width + x) * 3 + c] / static_cast<double>(maxval);
    return image;
}

void write_ppm(const std::filesystem::path& path, const FeatureMap& image) {
    if (image.channels != 3) throw ValidationError(kModule, "PPM output needs 3 channels");
    auto out = format::open_output(path, "PPM");
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
                out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
            }
}

}  // namespace semrsa
