#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fnaf/field.hpp"
#include "fnaf/rng.hpp"

using namespace fnaf;

namespace {

ComplexGrid random_grid(std::size_t r, std::size_t c, Rng& rng) {
    ComplexGrid g(r, c);
    for (auto& v : g.data()) v = {rng.normal(), rng.normal()};
    return g;
}

Image2D random_image(std::size_t r, std::size_t c, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Image2D g(r, c);
    for (auto& v : g.data()) v = rng.uniform(lo, hi);
    return g;
}

double rel_err(const ComplexGrid& a, const ComplexGrid& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += std::norm(a[i] - b[i]);
        den += std::norm(b[i]);
    }
    return std::sqrt(num / std::max(den, 1e-300));
}

// Direct O(N^2) centered orthonormal DFT: index h = floor(n/2) is the origin on both sides.
ComplexGrid naive_fft2c(const ComplexGrid& x) {
    const std::size_t r = x.rows(), c = x.cols();
    const double hr = static_cast<double>(r / 2), hc = static_cast<double>(c / 2);
    ComplexGrid out(r, c);
    for (std::size_t u = 0; u < r; ++u)
        for (std::size_t v = 0; v < c; ++v) {
            Complex acc{0.0, 0.0};
            for (std::size_t m = 0; m < r; ++m)
                for (std::size_t n = 0; n < c; ++n) {
                    const double phase = -2.0 * std::numbers::pi *
                                         ((static_cast<double>(u) - hr) * (static_cast<double>(m) - hr) / r +
                                          (static_cast<double>(v) - hc) * (static_cast<double>(n) - hc) / c);
                    acc += x(m, n) * Complex(std::cos(phase), std::sin(phase));
                }
            out(u, v) = acc / std::sqrt(static_cast<double>(r * c));
        }
    return out;
}

// Window-by-window SSIM without shared sums.
double reference_ssim(const Image2D& x, const Image2D& y) {
    const int w = 7;
    const double np = w * w;
    double L = 0.0;
    for (double v : y.data()) L = std::max(L, v);
    const double c1 = std::pow(0.01 * L, 2), c2 = std::pow(0.03 * L, 2);
    double total = 0.0;
    int count = 0;
    for (std::size_t r = 0; r + w <= x.rows(); ++r)
        for (std::size_t c = 0; c + w <= x.cols(); ++c) {
            double mx = 0, my = 0;
            for (int i = 0; i < w; ++i)
                for (int j = 0; j < w; ++j) {
                    mx += x(r + i, c + j);
                    my += y(r + i, c + j);
                }
            mx /= np;
            my /= np;
            double vx = 0, vy = 0, cxy = 0;
            for (int i = 0; i < w; ++i)
                for (int j = 0; j < w; ++j) {
                    const double dx = x(r + i, c + j) - mx, dy = y(r + i, c + j) - my;
                    vx += dx * dx;
                    vy += dy * dy;
                    cxy += dx * dy;
                }
            vx /= np - 1;
            vy /= np - 1;
            cxy /= np - 1;
            total += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    return total / count;
}

} // namespace

TEST_SUITE("field") {

TEST_CASE("fft2c matches a direct DFT on even and odd shapes") {
    Rng rng(1);
    for (auto [r, c] : {std::pair{8, 8}, {9, 10}, {12, 15}, {16, 11}}) {
        const auto g = random_grid(r, c, rng);
        CHECK(rel_err(fft2c(g), naive_fft2c(g)) < 1e-10);
    }
}

TEST_CASE("roundtrip and Parseval on random shapes") {
    Rng rng(2);
    for (auto [r, c] : {std::pair{8, 8}, {9, 12}, {17, 31}, {64, 64}, {100, 60}, {128, 96}}) {
        const auto g = random_grid(r, c, rng);
        const auto k = fft2c(g);
        CHECK(rel_err(ifft2c(k), g) < 1e-12);
        CHECK(rel_err(fft2c(ifft2c(g)), g) < 1e-12);
        double e_img = 0, e_k = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            e_img += std::norm(g[i]);
            e_k += std::norm(k[i]);
        }
        CHECK(std::abs(e_img - e_k) / e_img < 1e-12);
    }
}

TEST_CASE("constant grid maps to a single central peak") {
    const std::size_t n = 16;
    const double value = 0.7;
    const auto k = fft2c(ComplexGrid(n, n, Complex(value, 0.0)));
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = 0; v < n; ++v) {
            const double expected = (u == n / 2 && v == n / 2) ? value * n : 0.0;
            CHECK(std::abs(k(u, v) - Complex(expected, 0.0)) < 1e-12);
        }
}

TEST_CASE("zero maps to zero and the transform is linear") {
    const auto z = fft2c(ComplexGrid(8, 8));
    for (auto v : z.data()) CHECK(v == Complex{0.0, 0.0});
    Rng rng(3);
    const auto g1 = random_grid(12, 10, rng), g2 = random_grid(12, 10, rng);
    const Complex a{1.5, -0.25};
    ComplexGrid combo(12, 10);
    for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = a * g1[i] + g2[i];
    const auto lhs = fft2c(combo), k1 = fft2c(g1), k2 = fft2c(g2);
    ComplexGrid rhs(12, 10);
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = a * k1[i] + k2[i];
    CHECK(rel_err(lhs, rhs) < 1e-12);
}

TEST_CASE("invalid transform inputs raise") {
    CHECK_THROWS_AS(fft2c(ComplexGrid(4, 8)), Error);
    ComplexGrid g(8, 8);
    g(3, 3) = {std::nan(""), 0.0};
    try {
        (void)fft2c(g);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidInput);
    }
}

TEST_CASE("image metrics trivial cases") {
    Rng rng(4);
    const auto t = random_image(16, 16, rng, 0.1, 1.0);
    const auto m = image_metrics(t, t);
    CHECK(m.nmse == 0.0);
    CHECK(m.ssim == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::isinf(m.psnr));
    Image2D twice = t;
    for (auto& v : twice.data()) v *= 2.0;
    CHECK(nmse(twice, t) == doctest::Approx(1.0).epsilon(1e-12));
    try {
        (void)nmse(t, Image2D(16, 16));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::UndefinedNmse);
    }
    CHECK_THROWS_AS((void)nmse(t, Image2D(16, 15, 1.0)), Error);
    CHECK_THROWS_AS((void)ssim(t, Image2D(15, 16, 1.0)), Error);
}

TEST_CASE("psnr uses the target maximum") {
    Image2D t(8, 8, 0.5), r(8, 8, 0.5);
    t(0, 0) = 1.0;
    r(0, 0) = 0.9;
    const double mse_v = 0.01 / 64.0;
    CHECK(psnr(r, t) == doctest::Approx(10.0 * std::log10(1.0 / mse_v)).epsilon(1e-12));
}

TEST_CASE("ssim matches an independent window-by-window implementation") {
    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        const auto t = random_image(20 + trial, 18, rng, 0.0, 1.0);
        auto x = t;
        for (auto& v : x.data()) v += 0.1 * rng.normal();
        CHECK(ssim(x, t) == doctest::Approx(reference_ssim(x, t)).epsilon(1e-9));
    }
}

TEST_CASE("ssim matches the frozen scikit-image value") {
    // structural_similarity(x, t, win_size=7, data_range=t.max(), use_sample_covariance=True, K1=0.01, K2=0.03)
    Image2D t(20, 24), x(20, 24);
    for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 24; ++j) {
            t(i, j) = 0.5 + 0.4 * std::sin(0.3 * i + 0.1 * j) * std::cos(0.7 * j);
            x(i, j) = t(i, j) + 0.05 * std::cos(1.3 * i * j + 0.2);
        }
    CHECK(ssim(x, t) == doctest::Approx(0.9824140019126656).epsilon(1e-10));
}

TEST_CASE("ssim gradient matches central differences") {
    Rng rng(6);
    const auto t = random_image(14, 13, rng, 0.0, 1.0);
    auto x = t;
    for (auto& v : x.data()) v += 0.2 * rng.normal();
    Image2D g;
    const double s = ssim_with_grad(x, t, g);
    CHECK(s == doctest::Approx(ssim(x, t)).epsilon(1e-14));
    const double h = 1e-5;
    for (int k = 0; k < 30; ++k) {
        const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long long>(x.size() - 1)));
        auto xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const double fd = (ssim(xp, t) - ssim(xm, t)) / (2 * h);
        CHECK(g[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-6));
    }
}

TEST_CASE("masked nmse cases") {
    Rng rng(7);
    const auto t = random_image(12, 12, rng, 0.1, 1.0);
    const auto r = random_image(12, 12, rng, 0.1, 1.0);
    RegionMask full(12, 12, 1);
    CHECK(masked_nmse(r, t, full) == nmse(r, t));
    RegionMask some(12, 12, 0);
    some(2, 3) = some(5, 5) = some(9, 1) = 1;
    CHECK(masked_nmse(t, t, some) == 0.0);

    Image2D one_t(8, 8, 0.0), one_r(8, 8, 0.0);
    one_t(4, 4) = 1.0;
    one_r(4, 4) = 0.5;
    RegionMask px(8, 8, 0);
    px(4, 4) = 1;
    CHECK(masked_nmse(one_r, one_t, px) == doctest::Approx(0.25));

    try {
        (void)masked_nmse(r, t, RegionMask(12, 12, 0));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::EmptyRegion);
    }
    CHECK_THROWS_AS((void)masked_nmse(r, t, RegionMask(12, 11, 1)), Error);
}

TEST_CASE("masked nmse gradient matches central differences") {
    Rng rng(8);
    const auto t = random_image(10, 10, rng, 0.1, 1.0);
    const auto r = random_image(10, 10, rng, 0.1, 1.0);
    RegionMask region(10, 10, 0);
    for (int i = 2; i < 7; ++i) region(i, 4) = region(i, 5) = 1;
    Image2D g;
    masked_nmse_with_grad(r, t, region, g);
    const double h = 1e-6;
    for (std::size_t i = 0; i < r.size(); ++i) {
        auto rp = r, rm = r;
        rp[i] += h;
        rm[i] -= h;
        const double fd = (masked_nmse(rp, t, region) - masked_nmse(rm, t, region)) / (2 * h);
        CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6).scale(1e-8));
    }
}

} // TEST_SUITE
