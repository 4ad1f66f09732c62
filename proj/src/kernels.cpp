#include "fnaf/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace fnaf::kernels {

namespace reference {

void conv2d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
    const int pad = s.k / 2;
    for (int co = 0; co < s.cout; ++co)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
                double acc = bias[co];
                for (int ci = 0; ci < s.cin; ++ci)
                    for (int ky = 0; ky < s.k; ++ky)
                        for (int kx = 0; kx < s.k; ++kx) {
                            const int iy = y + ky - pad, ix = x + kx - pad;
                            if (iy < 0 || ix < 0 || iy >= s.h || ix >= s.w) continue;
                            acc += weight[((co * s.cin + ci) * s.k + ky) * s.k + kx] *
                                   in[(static_cast<std::size_t>(ci) * s.h + iy) * s.w + ix];
                        }
                out[(static_cast<std::size_t>(co) * s.h + y) * s.w + x] = acc;
            }
}

void conv2d_backward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_in, std::span<double> grad_weight,
                     std::span<double> grad_bias) {
    const int pad = s.k / 2;
    if (!grad_in.empty()) std::fill(grad_in.begin(), grad_in.end(), 0.0);
    for (int co = 0; co < s.cout; ++co)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
                const double g = grad_out[(static_cast<std::size_t>(co) * s.h + y) * s.w + x];
                grad_bias[co] += g;
                for (int ci = 0; ci < s.cin; ++ci)
                    for (int ky = 0; ky < s.k; ++ky)
                        for (int kx = 0; kx < s.k; ++kx) {
                            const int iy = y + ky - pad, ix = x + kx - pad;
                            if (iy < 0 || ix < 0 || iy >= s.h || ix >= s.w) continue;
                            const std::size_t wi = ((co * s.cin + ci) * s.k + ky) * s.k + kx;
                            const std::size_t ii = (static_cast<std::size_t>(ci) * s.h + iy) * s.w + ix;
                            grad_weight[wi] += g * in[ii];
                            if (!grad_in.empty()) grad_in[ii] += g * weight[wi];
                        }
            }
}

} // namespace reference

namespace parallel {

namespace {

// Valid index range [lo, hi) of output coordinate t such that t + d lies in [0, n).
inline void valid_range(int d, int n, int& lo, int& hi) {
    lo = std::max(0, -d);
    hi = std::min(n, n - d);
}

} // namespace

void conv2d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
    const int pad = s.k / 2;
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
#pragma omp parallel for schedule(static)
    for (int co = 0; co < s.cout; ++co) {
        double* o = out.data() + co * plane;
        std::fill(o, o + plane, bias[co]);
        for (int ci = 0; ci < s.cin; ++ci) {
            const double* src = in.data() + ci * plane;
            const double* wk = weight.data() + (static_cast<std::size_t>(co) * s.cin + ci) * s.k * s.k;
            for (int ky = 0; ky < s.k; ++ky) {
                const int dy = ky - pad;
                int y0, y1;
                valid_range(dy, s.h, y0, y1);
                for (int kx = 0; kx < s.k; ++kx) {
                    const int dx = kx - pad;
                    int x0, x1;
                    valid_range(dx, s.w, x0, x1);
                    const double wv = wk[ky * s.k + kx];
                    for (int y = y0; y < y1; ++y) {
                        double* orow = o + static_cast<std::size_t>(y) * s.w;
                        const double* irow = src + static_cast<std::size_t>(y + dy) * s.w + dx;
#pragma omp simd
                        for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                    }
                }
            }
        }
    }
}

void conv2d_backward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_in, std::span<double> grad_weight,
                     std::span<double> grad_bias) {
    const int pad = s.k / 2;
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;

#pragma omp parallel for schedule(static)
    for (int co = 0; co < s.cout; ++co) {
        const double* g = grad_out.data() + co * plane;
        double gb = 0.0;
        for (std::size_t i = 0; i < plane; ++i) gb += g[i];
        grad_bias[co] += gb;
        for (int ci = 0; ci < s.cin; ++ci) {
            const double* src = in.data() + ci * plane;
            double* gw = grad_weight.data() + (static_cast<std::size_t>(co) * s.cin + ci) * s.k * s.k;
            for (int ky = 0; ky < s.k; ++ky) {
                const int dy = ky - pad;
                int y0, y1;
                valid_range(dy, s.h, y0, y1);
                for (int kx = 0; kx < s.k; ++kx) {
                    const int dx = kx - pad;
                    int x0, x1;
                    valid_range(dx, s.w, x0, x1);
                    double acc = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const double* grow = g + static_cast<std::size_t>(y) * s.w;
                        const double* irow = src + static_cast<std::size_t>(y + dy) * s.w + dx;
                        double row_acc = 0.0;
#pragma omp simd reduction(+ : row_acc)
                        for (int x = x0; x < x1; ++x) row_acc += grow[x] * irow[x];
                        acc += row_acc;
                    }
                    gw[ky * s.k + kx] += acc;
                }
            }
        }
    }

    if (grad_in.empty()) return;
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < s.cin; ++ci) {
        double* gi = grad_in.data() + ci * plane;
        std::fill(gi, gi + plane, 0.0);
        for (int co = 0; co < s.cout; ++co) {
            const double* g = grad_out.data() + co * plane;
            const double* wk = weight.data() + (static_cast<std::size_t>(co) * s.cin + ci) * s.k * s.k;
            for (int ky = 0; ky < s.k; ++ky) {
                const int dy = ky - pad;
                int y0, y1;
                valid_range(dy, s.h, y0, y1);
                for (int kx = 0; kx < s.k; ++kx) {
                    const int dx = kx - pad;
                    int x0, x1;
                    valid_range(dx, s.w, x0, x1);
                    const double wv = wk[ky * s.k + kx];
                    for (int y = y0; y < y1; ++y) {
                        const double* grow = g + static_cast<std::size_t>(y) * s.w;
                        double* irow = gi + static_cast<std::size_t>(y + dy) * s.w + dx;
#pragma omp simd
                        for (int x = x0; x < x1; ++x) irow[x] += wv * grow[x];
                    }
                }
            }
        }
    }
}

} // namespace parallel

void relu_inplace(Tensor& t) {
    for (auto& v : t.v) v = v > 0.0 ? v : 0.0;
}

void relu_backward(const Tensor& activation, Tensor& grad) {
    for (std::size_t i = 0; i < grad.v.size(); ++i)
        if (!(activation.v[i] > 0.0)) grad.v[i] = 0.0;
}

Tensor avg_pool2(const Tensor& in) {
    Tensor out(in.c, in.h / 2, in.w / 2);
    for (int ch = 0; ch < in.c; ++ch) {
        const double* src = in.channel(ch);
        double* dst = out.channel(ch);
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x) {
                const double* p = src + static_cast<std::size_t>(2 * y) * in.w + 2 * x;
                dst[y * out.w + x] = 0.25 * (p[0] + p[1] + p[in.w] + p[in.w + 1]);
            }
    }
    return out;
}

Tensor max_pool2(const Tensor& in, std::vector<std::uint32_t>& argmax) {
    Tensor out(in.c, in.h / 2, in.w / 2);
    argmax.assign(out.v.size(), 0);
    for (int ch = 0; ch < in.c; ++ch) {
        const double* src = in.channel(ch);
        double* dst = out.channel(ch);
        std::uint32_t* arg = argmax.data() + static_cast<std::size_t>(ch) * out.plane();
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x) {
                const std::uint32_t base = static_cast<std::uint32_t>(2 * y * in.w + 2 * x);
                std::uint32_t best = base;
                for (const std::uint32_t k : {base + 1, base + in.w, base + in.w + 1})
                    if (src[k] > src[best]) best = k;
                dst[y * out.w + x] = src[best];
                arg[y * out.w + x] = best;
            }
    }
    return out;
}

Tensor max_pool2_backward(const Tensor& grad_out, std::span<const std::uint32_t> argmax, int h, int w) {
    Tensor g(grad_out.c, h, w);
    for (int ch = 0; ch < grad_out.c; ++ch) {
        const double* src = grad_out.channel(ch);
        double* dst = g.channel(ch);
        const std::uint32_t* arg = argmax.data() + static_cast<std::size_t>(ch) * grad_out.plane();
        for (std::size_t i = 0; i < grad_out.plane(); ++i) dst[arg[i]] += src[i];
    }
    return g;
}

Tensor avg_pool2_backward(const Tensor& grad_out, int h, int w) {
    Tensor g(grad_out.c, h, w);
    for (int ch = 0; ch < grad_out.c; ++ch) {
        const double* src = grad_out.channel(ch);
        double* dst = g.channel(ch);
        for (int y = 0; y < grad_out.h; ++y)
            for (int x = 0; x < grad_out.w; ++x) {
                const double v = 0.25 * src[y * grad_out.w + x];
                double* p = dst + static_cast<std::size_t>(2 * y) * w + 2 * x;
                p[0] = v;
                p[1] = v;
                p[w] = v;
                p[w + 1] = v;
            }
    }
    return g;
}

Tensor upsample2(const Tensor& in) {
    Tensor out(in.c, in.h * 2, in.w * 2);
    for (int ch = 0; ch < in.c; ++ch) {
        const double* src = in.channel(ch);
        double* dst = out.channel(ch);
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x) dst[y * out.w + x] = src[(y / 2) * in.w + x / 2];
    }
    return out;
}

Tensor upsample2_backward(const Tensor& grad_out) {
    Tensor g(grad_out.c, grad_out.h / 2, grad_out.w / 2);
    for (int ch = 0; ch < grad_out.c; ++ch) {
        const double* src = grad_out.channel(ch);
        double* dst = g.channel(ch);
        for (int y = 0; y < g.h; ++y)
            for (int x = 0; x < g.w; ++x) {
                const double* p = src + static_cast<std::size_t>(2 * y) * grad_out.w + 2 * x;
                dst[y * g.w + x] = p[0] + p[1] + p[grad_out.w] + p[grad_out.w + 1];
            }
    }
    return g;
}

Tensor concat(const Tensor& a, const Tensor& b) {
    Tensor out(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
    return out;
}

void split(const Tensor& joined, int channels_a, Tensor& a, Tensor& b) {
    a = Tensor(channels_a, joined.h, joined.w);
    b = Tensor(joined.c - channels_a, joined.h, joined.w);
    const auto na = static_cast<std::ptrdiff_t>(a.v.size());
    std::copy(joined.v.begin(), joined.v.begin() + na, a.v.begin());
    std::copy(joined.v.begin() + na, joined.v.end(), b.v.begin());
}

bool all_finite(const Tensor& t) {
    return std::all_of(t.v.begin(), t.v.end(), [](double v) { return std::isfinite(v); });
}

} // namespace fnaf::kernels
