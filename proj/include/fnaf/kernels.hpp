#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace fnaf::kernels {

/// Planar activation tensor, layout [channel][row][col].
struct Tensor {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int channels, int height, int width, double fill = 0.0)
        : c(channels), h(height), w(width), v(static_cast<std::size_t>(channels) * height * width, fill) {}

    [[nodiscard]] std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
    double* channel(int ch) noexcept { return v.data() + ch * plane(); }
    [[nodiscard]] const double* channel(int ch) const noexcept { return v.data() + ch * plane(); }
};

/// Geometry of a same-padded, stride-1 2-D convolution.
/// Weights are laid out [cout][cin][k][k].
struct ConvShape {
    int cin = 1;
    int cout = 1;
    int k = 3;
    int h = 0;
    int w = 0;

    [[nodiscard]] std::size_t weight_count() const noexcept {
        return static_cast<std::size_t>(cout) * cin * k * k;
    }
};

// Straightforward per-output-pixel loops. Kept as the oracle the parallel
// kernels are tested and benchmarked against.
namespace reference {

void conv2d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);

/// grad_in may be empty to skip the input gradient. grad_weight and grad_bias accumulate.
void conv2d_backward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_in, std::span<double> grad_weight,
                     std::span<double> grad_bias);

} // namespace reference

// Row-vectorized kernels, OpenMP-parallel over channels. Each output element
// is owned by one thread and summed in a fixed order, so results do not
// depend on the thread count.
namespace parallel {

void conv2d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);

void conv2d_backward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_in, std::span<double> grad_weight,
                     std::span<double> grad_bias);

} // namespace parallel

void relu_inplace(Tensor& t);
/// grad *= (activation > 0)
void relu_backward(const Tensor& activation, Tensor& grad);

Tensor avg_pool2(const Tensor& in);
Tensor avg_pool2_backward(const Tensor& grad_out, int h, int w);

/// 2x2 max pooling; `argmax` receives the in-channel index of each winner, first maximum on ties.
Tensor max_pool2(const Tensor& in, std::vector<std::uint32_t>& argmax);
Tensor max_pool2_backward(const Tensor& grad_out, std::span<const std::uint32_t> argmax, int h, int w);

Tensor upsample2(const Tensor& in);
Tensor upsample2_backward(const Tensor& grad_out);

/// Channel concatenation [a; b].
Tensor concat(const Tensor& a, const Tensor& b);
void split(const Tensor& joined, int channels_a, Tensor& a, Tensor& b);

bool all_finite(const Tensor& t);

} // namespace fnaf::kernels
