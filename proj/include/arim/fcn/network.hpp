#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "arim/fcn/layers.hpp"
#include "arim/rng.hpp"

namespace arim::fcn {

enum class ArchName : std::uint8_t { shallow = 0, deep = 1 };

inline std::string to_string(ArchName a) { return a == ArchName::shallow ? "shallow" : "deep"; }

inline ArchName parse_arch(const std::string& s) {
    if (s == "shallow") return ArchName::shallow;
    if (s == "deep") return ArchName::deep;
    throw std::invalid_argument("unknown architecture '" + s + "' (expected shallow|deep)");
}

enum class LayerKind : std::uint8_t { conv, pool };

struct LayerSpec {
    LayerKind kind = LayerKind::conv;
    ConvLayerSpec conv;  // meaningful for conv layers only
    bool operator==(const LayerSpec&) const = default;
};

struct FcnArchitecture {
    ArchName name = ArchName::shallow;
    std::size_t input_height = 0;
    std::size_t width = 0;
    std::size_t channel_divisor = 1;
    std::vector<LayerSpec> layers;

    std::size_t layer_count() const { return layers.size(); }
    std::size_t conv_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.kind == LayerKind::conv;
        return n;
    }
    /// Activation height entering each layer, plus the final output height.
    std::vector<std::size_t> height_trace() const {
        std::vector<std::size_t> h{input_height};
        for (const auto& l : layers)
            h.push_back(l.kind == LayerKind::pool ? (h.back() + 1) / 2 : l.conv.output_height(h.back()));
        return h;
    }
    bool operator==(const FcnArchitecture&) const = default;
};

/// Block plans: shallow = 3 x (3 conv + pool) + 3 conv with widths 8/16/32/64;
/// deep = 6 x (2 conv + pool) + 3 conv with widths 8/8/16/16/32/64/128. The
/// last conv has one filter spanning the remaining height, collapsing the
/// map to 1 x width.
inline FcnArchitecture make_architecture(ArchName name, std::size_t input_height, std::size_t width,
                                         std::size_t channel_divisor = 1) {
    if (input_height == 0 || width == 0) throw std::invalid_argument("empty network input");
    if (channel_divisor == 0) throw std::invalid_argument("channel divisor must be positive");
    struct Block {
        std::size_t convs;
        std::size_t channels;
        bool pool;
    };
    std::vector<Block> blocks;
    if (name == ArchName::shallow) {
        blocks = {{3, 8, true}, {3, 16, true}, {3, 32, true}, {3, 64, false}};
    } else {
        blocks = {{2, 8, true},  {2, 8, true},  {2, 16, true}, {2, 16, true},
                  {2, 32, true}, {2, 64, true}, {3, 128, false}};
    }

    FcnArchitecture arch{name, input_height, width, channel_divisor, {}};
    std::size_t channels = 1;
    std::size_t height = input_height;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const std::size_t filters = std::max<std::size_t>(1, blocks[b].channels / channel_divisor);
        for (std::size_t c = 0; c < blocks[b].convs; ++c) {
            const bool last = b + 1 == blocks.size() && c + 1 == blocks[b].convs;
            ConvLayerSpec spec;
            spec.in_channels = channels;
            spec.out_channels = last ? 1 : filters;
            spec.kernel_w = 5;
            if (last) {
                spec.kernel_h = height;
                spec.vertical = VerticalPadding::valid;
                spec.activation = Activation::none;
            }
            arch.layers.push_back({LayerKind::conv, spec});
            channels = spec.out_channels;
        }
        if (blocks[b].pool) {
            arch.layers.push_back({LayerKind::pool, {}});
            height = (height + 1) / 2;
        }
    }
    return arch;
}

/// Cached forward state for one sample.
template <typename T>
struct Workspace {
    std::vector<Tensor<T>> activations;  // activations[l] is the input of layer l; back() the output
    std::vector<std::vector<std::uint32_t>> pool_argmax;
    bool has_forward = false;
};

/// Parameters of an architecture in one flat buffer: for each conv layer its
/// weights [out][in][kh][kw] followed by its biases.
template <typename T>
class Network {
public:
    Network() = default;
    explicit Network(FcnArchitecture arch) : arch_(std::move(arch)) {
        std::size_t offset = 0;
        for (const auto& l : arch_.layers) {
            offsets_.push_back(offset);
            if (l.kind == LayerKind::conv) offset += l.conv.weight_count() + l.conv.out_channels;
        }
        params_.assign(offset, T{0});
    }

    const FcnArchitecture& architecture() const { return arch_; }
    std::size_t parameter_count() const { return params_.size(); }
    std::span<T> parameters() { return params_; }
    std::span<const T> parameters() const { return params_; }

    std::span<const T> weights(std::size_t layer) const {
        return {params_.data() + offsets_.at(layer), arch_.layers.at(layer).conv.weight_count()};
    }
    std::span<const T> biases(std::size_t layer) const {
        const auto& c = arch_.layers.at(layer).conv;
        return {params_.data() + offsets_.at(layer) + c.weight_count(), c.out_channels};
    }
    std::size_t offset(std::size_t layer) const { return offsets_.at(layer); }

    /// He-style uniform init, U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)); biases zero.
    void initialize(std::uint64_t seed) {
        Rng rng(seed);
        for (std::size_t l = 0; l < arch_.layers.size(); ++l) {
            const auto& layer = arch_.layers[l];
            if (layer.kind != LayerKind::conv) continue;
            const auto& c = layer.conv;
            const double bound = std::sqrt(6.0 / static_cast<double>(c.in_channels * c.kernel_h * c.kernel_w));
            T* w = params_.data() + offsets_[l];
            for (std::size_t i = 0; i < c.weight_count(); ++i) w[i] = static_cast<T>(rng.uniform(-bound, bound));
            std::fill(w + c.weight_count(), w + c.weight_count() + c.out_channels, T{0});
        }
    }

    Tensor<T> forward(const Tensor<T>& input) const {
        Workspace<T> ws;
        forward(input, ws);
        return std::move(ws.activations.back());
    }

    const Tensor<T>& forward(const Tensor<T>& input, Workspace<T>& ws) const {
        if (input.channels != 1 || input.height != arch_.input_height || input.width != arch_.width)
            throw std::invalid_argument("network expects 1x" + std::to_string(arch_.input_height) + "x" +
                                        std::to_string(arch_.width) + " input, got " + input.shape_string());
        ws.activations.resize(arch_.layers.size() + 1);
        ws.pool_argmax.resize(arch_.layers.size());
        ws.activations[0] = input;
        for (std::size_t l = 0; l < arch_.layers.size(); ++l) {
            const auto& layer = arch_.layers[l];
            if (layer.kind == LayerKind::conv) {
                ws.activations[l + 1] = conv2d_forward<T>(ws.activations[l], layer.conv, weights(l), biases(l));
            } else {
                auto pooled = maxpool_2x1_forward(ws.activations[l]);
                ws.activations[l + 1] = std::move(pooled.output);
                ws.pool_argmax[l] = std::move(pooled.argmax);
            }
        }
        ws.has_forward = true;
        return ws.activations.back();
    }

    /// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
    /// Consumes the workspace's forward cache.
    void backward(Workspace<T>& ws, const Tensor<T>& grad_output, std::span<T> grads,
                  Tensor<T>* grad_input = nullptr) const {
        if (!ws.has_forward) throw std::logic_error("backward called without a cached forward pass");
        if (grads.size() != params_.size()) throw std::invalid_argument("gradient buffer has wrong size");
        if (!grad_output.same_shape(ws.activations.back()))
            throw std::invalid_argument("output gradient shape " + grad_output.shape_string() +
                                        " does not match network output " +
                                        ws.activations.back().shape_string());
        Tensor<T> g = grad_output;
        for (std::size_t l = arch_.layers.size(); l-- > 0;) {
            const auto& layer = arch_.layers[l];
            const bool need_input_grad = l > 0 || grad_input != nullptr;
            if (layer.kind == LayerKind::conv) {
                const auto& c = layer.conv;
                Tensor<T> gin;
                T* base = grads.data() + offsets_[l];
                conv2d_backward<T>(ws.activations[l], ws.activations[l + 1], g, c, weights(l),
                                   std::span<T>(base, c.weight_count()),
                                   std::span<T>(base + c.weight_count(), c.out_channels),
                                   need_input_grad ? &gin : nullptr);
                g = std::move(gin);
            } else {
                g = maxpool_2x1_backward<T>(ws.activations[l], ws.pool_argmax[l], g);
            }
        }
        if (grad_input) *grad_input = std::move(g);
        ws.has_forward = false;
    }

    bool operator==(const Network&) const = default;

private:
    FcnArchitecture arch_;
    std::vector<std::size_t> offsets_;
    std::vector<T> params_;
};

}  // namespace arim::fcn
