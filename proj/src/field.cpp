#include "fnaf/field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include <fftw3.h>

namespace fnaf {

namespace {

constexpr const char* kModule = "field";

// FFTW planning is not thread-safe; execution on a cached plan is. Plans are
// built unaligned so any grid buffer can be passed to fftw_execute_dft.
fftw_plan plan_for(std::size_t rows, std::size_t cols, int sign) {
    static std::mutex mutex;
    static std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans;
    const std::lock_guard lock(mutex);
    auto& plan = plans[{rows, cols, sign}];
    if (!plan) {
        std::vector<Complex> scratch(rows * cols);
        auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
        plan = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), buf, buf,
                                sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (!plan) throw Error(ErrorKind::InvalidInput, kModule, "FFTW could not plan the transform");
    }
    return plan;
}

void validate_grid(const ComplexGrid& g) {
    if (g.rows() < 8 || g.cols() < 8)
        throw Error(ErrorKind::InvalidInput, kModule, "grid must be at least 8x8");
    if (!all_finite(g)) throw Error(ErrorKind::InvalidInput, kModule, "non-finite value in grid");
}

// shift = floor(n/2) realizes fftshift when applied as out[(i+shift)%n] = in[i];
// ifftshift uses shift = n - floor(n/2).
ComplexGrid circular_shift(const ComplexGrid& in, std::size_t shift_r, std::size_t shift_c) {
    const std::size_t rows = in.rows(), cols = in.cols();
    ComplexGrid out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t rr = (r + shift_r) % rows;
        for (std::size_t c = 0; c < cols; ++c) out(rr, (c + shift_c) % cols) = in(r, c);
    }
    return out;
}

ComplexGrid transform2(const ComplexGrid& input, int sign) {
    validate_grid(input);
    const std::size_t rows = input.rows(), cols = input.cols();
    ComplexGrid g = circular_shift(input, rows - rows / 2, cols - cols / 2);
    auto* buf = reinterpret_cast<fftw_complex*>(g.data().data());
    fftw_execute_dft(plan_for(rows, cols, sign), buf, buf);
    ComplexGrid out = circular_shift(g, rows / 2, cols / 2);
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows * cols));
    for (auto& v : out.data()) v *= scale;
    return out;
}

struct RegionSums {
    double err = 0.0;
    double energy = 0.0;
    std::size_t count = 0;
};

// One accumulation loop shared by the global and the masked NMSE so that a
// full mask reproduces the global value bit for bit.
RegionSums region_sums(const Image2D& recon, const Image2D& target, const RegionMask* region) {
    RegionSums s;
    const auto rv = recon.data();
    const auto tv = target.data();
    for (std::size_t i = 0; i < tv.size(); ++i) {
        if (region && !(*region)[i]) continue;
        const double d = rv[i] - tv[i];
        s.err += d * d;
        s.energy += tv[i] * tv[i];
        ++s.count;
    }
    return s;
}

struct WindowStats {
    double ux, uy, vx, vy, vxy;
};

} // namespace

ComplexGrid fft2c(const ComplexGrid& img) { return transform2(img, -1); }

ComplexGrid ifft2c(const ComplexGrid& ksp) { return transform2(ksp, +1); }

ComplexGrid to_complex(const Image2D& img) {
    ComplexGrid g(img.rows(), img.cols());
    for (std::size_t i = 0; i < img.size(); ++i) g[i] = Complex(img[i], 0.0);
    return g;
}

Image2D magnitude(const ComplexGrid& g) {
    Image2D out(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = std::abs(g[i]);
    return out;
}

Image2D real_part(const ComplexGrid& g) {
    Image2D out(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i].real();
    return out;
}

bool all_finite(const Image2D& img) {
    return std::all_of(img.data().begin(), img.data().end(), [](double v) { return std::isfinite(v); });
}

bool all_finite(const ComplexGrid& g) {
    return std::all_of(g.data().begin(), g.data().end(),
                       [](const Complex& v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); });
}

double max_value(const Image2D& img) {
    if (img.empty()) throw Error(ErrorKind::InvalidInput, kModule, "empty image");
    return *std::max_element(img.data().begin(), img.data().end());
}

double min_value(const Image2D& img) {
    if (img.empty()) throw Error(ErrorKind::InvalidInput, kModule, "empty image");
    return *std::min_element(img.data().begin(), img.data().end());
}

double mse(const Image2D& a, const Image2D& b) {
    require_same_shape(a, b, kModule);
    if (a.empty()) throw Error(ErrorKind::InvalidInput, kModule, "empty image");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

double nmse(const Image2D& recon, const Image2D& target) {
    require_same_shape(recon, target, kModule);
    const auto s = region_sums(recon, target, nullptr);
    if (s.energy == 0.0) throw Error(ErrorKind::UndefinedNmse, kModule, "target has zero energy");
    return s.err / s.energy;
}

double psnr(const Image2D& recon, const Image2D& target) {
    const double peak = max_value(target);
    const double m = mse(recon, target);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

namespace {

double ssim_impl(const Image2D& x, const Image2D& y, Image2D* grad) {
    require_same_shape(x, y, kModule);
    constexpr int w = kSsimWindow;
    if (x.rows() < static_cast<std::size_t>(w) || x.cols() < static_cast<std::size_t>(w))
        throw Error(ErrorKind::InvalidInput, kModule, "image smaller than the SSIM window");
    const double range = max_value(y);
    const double c1 = (kSsimK1 * range) * (kSsimK1 * range);
    const double c2 = (kSsimK2 * range) * (kSsimK2 * range);
    constexpr double np = w * w;
    constexpr double cov_norm = np / (np - 1.0);

    const std::size_t wr = x.rows() - w + 1, wc = x.cols() - w + 1;
    const std::size_t cols = x.cols();
    Image2D coef_a, coef_b, coef_c;
    if (grad) {
        coef_a = Image2D(wr, wc);
        coef_b = Image2D(wr, wc);
        coef_c = Image2D(wr, wc);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < wr; ++i) {
        for (std::size_t j = 0; j < wc; ++j) {
            double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
            for (int a = 0; a < w; ++a) {
                const double* xr = &x.data()[(i + a) * cols + j];
                const double* yr = &y.data()[(i + a) * cols + j];
                for (int b = 0; b < w; ++b) {
                    sx += xr[b];
                    sy += yr[b];
                    sxx += xr[b] * xr[b];
                    syy += yr[b] * yr[b];
                    sxy += xr[b] * yr[b];
                }
            }
            const double ux = sx / np, uy = sy / np;
            const double vx = cov_norm * (sxx / np - ux * ux);
            const double vy = cov_norm * (syy / np - uy * uy);
            const double vxy = cov_norm * (sxy / np - ux * uy);
            const double a1 = 2.0 * ux * uy + c1, a2 = 2.0 * vxy + c2;
            const double b1 = ux * ux + uy * uy + c1, b2 = vx + vy + c2;
            const double s = (a1 * a2) / (b1 * b2);
            total += s;
            if (grad) {
                const double ds_dux = 2.0 * uy * a2 / (b1 * b2) - s * 2.0 * ux / b1;
                const double ds_dvx = -s / b2;
                const double ds_dvxy = 2.0 * a1 / (b1 * b2);
                coef_a(i, j) = (ds_dux - 2.0 * cov_norm * ux * ds_dvx - cov_norm * uy * ds_dvxy) / np;
                coef_b(i, j) = 2.0 * cov_norm * ds_dvx / np;
                coef_c(i, j) = cov_norm * ds_dvxy / np;
            }
        }
    }
    const double n_windows = static_cast<double>(wr * wc);
    if (grad) {
        *grad = Image2D(x.rows(), x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const std::size_t i_lo = r >= static_cast<std::size_t>(w - 1) ? r - (w - 1) : 0;
            const std::size_t i_hi = std::min(r, wr - 1);
            for (std::size_t c = 0; c < cols; ++c) {
                const std::size_t j_lo = c >= static_cast<std::size_t>(w - 1) ? c - (w - 1) : 0;
                const std::size_t j_hi = std::min(c, wc - 1);
                double sa = 0, sb = 0, sc = 0;
                for (std::size_t i = i_lo; i <= i_hi; ++i)
                    for (std::size_t j = j_lo; j <= j_hi; ++j) {
                        sa += coef_a(i, j);
                        sb += coef_b(i, j);
                        sc += coef_c(i, j);
                    }
                (*grad)(r, c) = (sa + x(r, c) * sb + y(r, c) * sc) / n_windows;
            }
        }
    }
    return total / n_windows;
}

} // namespace

double ssim(const Image2D& recon, const Image2D& target) { return ssim_impl(recon, target, nullptr); }

double ssim_with_grad(const Image2D& recon, const Image2D& target, Image2D& grad) {
    return ssim_impl(recon, target, &grad);
}

ImageMetrics image_metrics(const Image2D& recon, const Image2D& target) {
    return {nmse(recon, target), psnr(recon, target), ssim(recon, target)};
}

double masked_nmse(const Image2D& recon, const Image2D& target, const RegionMask& region) {
    require_same_shape(recon, target, kModule);
    require_same_shape(recon, region, kModule);
    const auto s = region_sums(recon, target, &region);
    if (s.count == 0) throw Error(ErrorKind::EmptyRegion, kModule, "region has no true pixels");
    if (s.energy == 0.0) throw Error(ErrorKind::UndefinedNmse, kModule, "target has zero energy inside region");
    return s.err / s.energy;
}

double masked_nmse_with_grad(const Image2D& recon, const Image2D& target, const RegionMask& region,
                             Image2D& grad) {
    const double value = masked_nmse(recon, target, region);
    const auto s = region_sums(recon, target, &region);
    grad = Image2D(recon.rows(), recon.cols());
    const double scale = 2.0 / s.energy;
    for (std::size_t i = 0; i < recon.size(); ++i)
        if (region[i]) grad[i] = scale * (recon[i] - target[i]);
    return value;
}

} // namespace fnaf
