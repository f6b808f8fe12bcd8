#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace arim::fcn {

/// Dense C x H x W activation map, row-major.
template <typename T>
struct Tensor {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(std::size_t c, std::size_t h, std::size_t w, T fill = T{0})
        : channels(c), height(h), width(w), data(c * h * w, fill) {}

    std::size_t size() const { return data.size(); }
    T& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
    const T& at(std::size_t c, std::size_t y, std::size_t x) const {
        return data[(c * height + y) * width + x];
    }
    T* row(std::size_t c, std::size_t y) { return data.data() + (c * height + y) * width; }
    const T* row(std::size_t c, std::size_t y) const { return data.data() + (c * height + y) * width; }

    bool same_shape(const Tensor& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
    std::string shape_string() const {
        return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
    }
    bool operator==(const Tensor&) const = default;
};

enum class VerticalPadding : std::uint8_t { same, valid };
enum class Activation : std::uint8_t { relu, none };

/// Stride-1 cross-correlation. Horizontal padding is always "same"; the
/// final collapse layer is vertically "valid" with kernel_h equal to its
/// input height.
struct ConvLayerSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_h = 5;
    std::size_t kernel_w = 5;
    VerticalPadding vertical = VerticalPadding::same;
    Activation activation = Activation::relu;

    std::size_t weight_count() const { return out_channels * in_channels * kernel_h * kernel_w; }
    std::size_t pad_h() const { return vertical == VerticalPadding::same ? kernel_h / 2 : 0; }
    std::size_t pad_w() const { return kernel_w / 2; }
    std::size_t output_height(std::size_t in_h) const {
        if (vertical == VerticalPadding::same) return in_h;
        return in_h >= kernel_h ? in_h - kernel_h + 1 : 0;
    }
    bool operator==(const ConvLayerSpec&) const = default;
};

namespace detail {

/// out[x] += sum_k w[k] * in[x + k - pad] over the valid part of the row.
template <typename T>
inline void correlate_row_add(T* __restrict out, const T* __restrict in, const T* __restrict w,
                              std::size_t width, std::size_t kw) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kw / 2);
    const std::ptrdiff_t wid = static_cast<std::ptrdiff_t>(width);
    if (kw == 5 && wid > 4) {
        const T w0 = w[0], w1 = w[1], w2 = w[2], w3 = w[3], w4 = w[4];
#pragma omp simd
        for (std::ptrdiff_t x = 2; x < wid - 2; ++x)
            out[x] += w0 * in[x - 2] + w1 * in[x - 1] + w2 * in[x] + w3 * in[x + 1] + w4 * in[x + 2];
        for (std::ptrdiff_t x : {std::ptrdiff_t{0}, std::ptrdiff_t{1}, wid - 2, wid - 1}) {
            T acc{0};
            for (std::ptrdiff_t k = 0; k < 5; ++k) {
                const std::ptrdiff_t xi = x + k - 2;
                if (xi >= 0 && xi < wid) acc += w[k] * in[xi];
            }
            out[x] += acc;
        }
        return;
    }
    for (std::ptrdiff_t x = 0; x < wid; ++x) {
        T acc{0};
        for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(kw); ++k) {
            const std::ptrdiff_t xi = x + k - pad;
            if (xi >= 0 && xi < wid) acc += w[k] * in[xi];
        }
        out[x] += acc;
    }
}

/// gin[x] += sum_k w[k] * g[x - k + pad]  (transpose of correlate_row_add)
template <typename T>
inline void correlate_row_transpose_add(T* __restrict gin, const T* __restrict g,
                                        const T* __restrict w, std::size_t width, std::size_t kw) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kw / 2);
    const std::ptrdiff_t wid = static_cast<std::ptrdiff_t>(width);
    if (kw == 5 && wid > 4) {
        const T w0 = w[0], w1 = w[1], w2 = w[2], w3 = w[3], w4 = w[4];
#pragma omp simd
        for (std::ptrdiff_t x = 2; x < wid - 2; ++x)
            gin[x] += w0 * g[x + 2] + w1 * g[x + 1] + w2 * g[x] + w3 * g[x - 1] + w4 * g[x - 2];
        for (std::ptrdiff_t x : {std::ptrdiff_t{0}, std::ptrdiff_t{1}, wid - 2, wid - 1}) {
            T acc{0};
            for (std::ptrdiff_t k = 0; k < 5; ++k) {
                const std::ptrdiff_t xo = x - k + 2;
                if (xo >= 0 && xo < wid) acc += w[k] * g[xo];
            }
            gin[x] += acc;
        }
        return;
    }
    for (std::ptrdiff_t x = 0; x < wid; ++x) {
        T acc{0};
        for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(kw); ++k) {
            const std::ptrdiff_t xo = x - k + pad;
            if (xo >= 0 && xo < wid) acc += w[k] * g[xo];
        }
        gin[x] += acc;
    }
}

/// gw[k] += sum_x g[x] * in[x + k - pad]
template <typename T>
inline void correlate_row_weight_grad(T* __restrict gw, const T* __restrict g,
                                      const T* __restrict in, std::size_t width, std::size_t kw) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kw / 2);
    const std::ptrdiff_t wid = static_cast<std::ptrdiff_t>(width);
    if (kw == 5 && wid > 4) {
        T s0{0}, s1{0}, s2{0}, s3{0}, s4{0};
#pragma omp simd reduction(+ : s0, s1, s2, s3, s4)
        for (std::ptrdiff_t x = 2; x < wid - 2; ++x) {
            const T gx = g[x];
            s0 += gx * in[x - 2];
            s1 += gx * in[x - 1];
            s2 += gx * in[x];
            s3 += gx * in[x + 1];
            s4 += gx * in[x + 2];
        }
        T s[5] = {s0, s1, s2, s3, s4};
        for (std::ptrdiff_t x : {std::ptrdiff_t{0}, std::ptrdiff_t{1}, wid - 2, wid - 1}) {
            for (std::ptrdiff_t k = 0; k < 5; ++k) {
                const std::ptrdiff_t xi = x + k - 2;
                if (xi >= 0 && xi < wid) s[k] += g[x] * in[xi];
            }
        }
        for (int k = 0; k < 5; ++k) gw[k] += s[k];
        return;
    }
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(kw); ++k) {
        T acc{0};
        for (std::ptrdiff_t x = 0; x < wid; ++x) {
            const std::ptrdiff_t xi = x + k - pad;
            if (xi >= 0 && xi < wid) acc += g[x] * in[xi];
        }
        gw[k] += acc;
    }
}

}  // namespace detail

inline void check_conv_input(const ConvLayerSpec& spec, std::size_t channels, std::size_t height,
                             std::size_t weights, std::size_t biases) {
    if (channels != spec.in_channels)
        throw std::invalid_argument("conv expects " + std::to_string(spec.in_channels) +
                                    " input channels, got " + std::to_string(channels));
    if (spec.vertical == VerticalPadding::valid && height != spec.kernel_h)
        throw std::invalid_argument("collapse conv expects height " + std::to_string(spec.kernel_h) +
                                    ", got " + std::to_string(height));
    if (weights != spec.weight_count() || biases != spec.out_channels)
        throw std::invalid_argument("conv expects " + std::to_string(spec.weight_count()) +
                                    " weights and " + std::to_string(spec.out_channels) +
                                    " biases, got " + std::to_string(weights) + " and " +
                                    std::to_string(biases));
}

/// Weights are laid out [out][in][kh][kw]. ReLU, when specified, is applied
/// to the output in place.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvLayerSpec& spec,
                         std::span<const T> weights, std::span<const T> biases) {
    check_conv_input(spec, input.channels, input.height, weights.size(), biases.size());
    const std::size_t out_h = spec.output_height(input.height);
    const std::size_t pad_h = spec.pad_h();
    const std::size_t kh = spec.kernel_h, kw = spec.kernel_w, width = input.width;
    Tensor<T> out(spec.out_channels, out_h, width);
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
        for (std::size_t y = 0; y < out_h; ++y) {
            T* orow = out.row(o, y);
            std::fill(orow, orow + width, biases[o]);
            for (std::size_t i = 0; i < spec.in_channels; ++i) {
                const T* wk = weights.data() + ((o * spec.in_channels + i) * kh) * kw;
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) -
                                              static_cast<std::ptrdiff_t>(pad_h);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(input.height)) continue;
                    detail::correlate_row_add(orow, input.row(i, static_cast<std::size_t>(iy)),
                                              wk + ky * kw, width, kw);
                }
            }
            if (spec.activation == Activation::relu)
                for (std::size_t x = 0; x < width; ++x) orow[x] = std::max(orow[x], T{0});
        }
    }
    return out;
}

/// Backward pass of conv2d_forward. `output` is the forward result (post
/// activation) and is only used for the ReLU mask. Gradients are accumulated
/// into grad_weights / grad_biases; grad_input, if non-null, is overwritten.
template <typename T>
void conv2d_backward(const Tensor<T>& input, const Tensor<T>& output, const Tensor<T>& grad_output,
                     const ConvLayerSpec& spec, std::span<const T> weights,
                     std::span<T> grad_weights, std::span<T> grad_biases, Tensor<T>* grad_input) {
    check_conv_input(spec, input.channels, input.height, weights.size(), grad_biases.size());
    if (!grad_output.same_shape(output))
        throw std::invalid_argument("conv gradient shape " + grad_output.shape_string() +
                                    " does not match output " + output.shape_string());
    const std::size_t pad_h = spec.pad_h();
    const std::size_t kh = spec.kernel_h, kw = spec.kernel_w, width = input.width;

    Tensor<T> g = grad_output;
    if (spec.activation == Activation::relu)
        for (std::size_t n = 0; n < g.size(); ++n)
            if (!(output.data[n] > T{0})) g.data[n] = T{0};

    if (grad_input) *grad_input = Tensor<T>(input.channels, input.height, width);

    for (std::size_t o = 0; o < spec.out_channels; ++o) {
        for (std::size_t y = 0; y < g.height; ++y) {
            const T* grow = g.row(o, y);
            T bsum{0};
            for (std::size_t x = 0; x < width; ++x) bsum += grow[x];
            grad_biases[o] += bsum;
            for (std::size_t i = 0; i < spec.in_channels; ++i) {
                const std::size_t base = ((o * spec.in_channels + i) * kh) * kw;
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) -
                                              static_cast<std::ptrdiff_t>(pad_h);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(input.height)) continue;
                    const auto uy = static_cast<std::size_t>(iy);
                    detail::correlate_row_weight_grad(grad_weights.data() + base + ky * kw, grow,
                                                      input.row(i, uy), width, kw);
                    if (grad_input)
                        detail::correlate_row_transpose_add(grad_input->row(i, uy), grow,
                                                            weights.data() + base + ky * kw, width, kw);
                }
            }
        }
    }
}

inline constexpr std::uint32_t kPaddedRow = std::numeric_limits<std::uint32_t>::max();

template <typename T>
struct PoolResult {
    Tensor<T> output;
    std::vector<std::uint32_t> argmax;  // flat input index per output, kPaddedRow for the pad row
};

/// Vertical 2x1 max-pool. An odd height is zero-padded by one row first;
/// ties go to the upper (earlier) row.
template <typename T>
PoolResult<T> maxpool_2x1_forward(const Tensor<T>& input) {
    if (input.height == 0) throw std::invalid_argument("max-pool needs a non-empty input");
    const std::size_t out_h = (input.height + 1) / 2;
    PoolResult<T> r{Tensor<T>(input.channels, out_h, input.width), {}};
    r.argmax.resize(r.output.size());
    for (std::size_t c = 0; c < input.channels; ++c) {
        for (std::size_t y = 0; y < out_h; ++y) {
            const std::size_t top = 2 * y, bottom = 2 * y + 1;
            const T* a = input.row(c, top);
            const bool padded = bottom >= input.height;
            const T* b = padded ? nullptr : input.row(c, bottom);
            T* o = r.output.row(c, y);
            std::uint32_t* idx = r.argmax.data() + (c * out_h + y) * input.width;
            const auto top_base = static_cast<std::uint32_t>((c * input.height + top) * input.width);
            for (std::size_t x = 0; x < input.width; ++x) {
                const T bv = padded ? T{0} : b[x];
                if (a[x] >= bv) {
                    o[x] = a[x];
                    idx[x] = top_base + static_cast<std::uint32_t>(x);
                } else {
                    o[x] = bv;
                    idx[x] = padded ? kPaddedRow
                                    : top_base + static_cast<std::uint32_t>(input.width + x);
                }
            }
        }
    }
    return r;
}

/// Routes each upstream gradient to the input position that won the forward max.
template <typename T>
Tensor<T> maxpool_2x1_backward(const Tensor<T>& input_shape, std::span<const std::uint32_t> argmax,
                               const Tensor<T>& grad_output) {
    if (argmax.size() != grad_output.size())
        throw std::invalid_argument("pool argmax does not match gradient size");
    Tensor<T> grad(input_shape.channels, input_shape.height, input_shape.width);
    for (std::size_t n = 0; n < grad_output.size(); ++n)
        if (argmax[n] != kPaddedRow) grad.data[argmax[n]] += grad_output.data[n];
    return grad;
}

/// mean((pred - target)^2); grad (if non-null) receives scale * 2 (pred - target) / count.
template <typename T>
double mse_loss(std::span<const T> pred, std::span<const T> target, std::span<T> grad = {},
                double scale = 1.0) {
    if (pred.size() != target.size() || pred.empty())
        throw std::invalid_argument("mse needs equal, non-empty lengths");
    if (!grad.empty() && grad.size() != pred.size())
        throw std::invalid_argument("mse gradient buffer has wrong length");
    double sum = 0.0;
    const double count = static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        sum += d * d;
        if (!grad.empty()) grad[i] = static_cast<T>(scale * 2.0 * d / count);
    }
    return sum / count;
}

}  // namespace arim::fcn
