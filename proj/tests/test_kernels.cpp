#include <doctest.h>

#include <cmath>

#include "fnaf/kernels.hpp"
#include "fnaf/rng.hpp"

using namespace fnaf;
using namespace fnaf::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Tensor random_tensor(int c, int h, int w, Rng& rng) {
    Tensor t(c, h, w);
    t.v = random_vec(t.v.size(), rng);
    return t;
}

} // namespace

TEST_SUITE("kernels") {

TEST_CASE("parallel convolution matches the reference") {
    Rng rng(1);
    for (ConvShape s : {ConvShape{1, 8, 3, 16, 16}, ConvShape{8, 16, 3, 9, 7}, ConvShape{24, 8, 3, 12, 10},
                        ConvShape{8, 1, 1, 5, 6}, ConvShape{3, 4, 5, 11, 13}}) {
        const std::size_t in_n = static_cast<std::size_t>(s.cin) * s.h * s.w;
        const std::size_t out_n = static_cast<std::size_t>(s.cout) * s.h * s.w;
        const auto in = random_vec(in_n, rng), w = random_vec(s.weight_count(), rng),
                   b = random_vec(static_cast<std::size_t>(s.cout), rng), go = random_vec(out_n, rng);
        std::vector<double> out_r(out_n), out_p(out_n);
        reference::conv2d_forward(s, in, w, b, out_r);
        parallel::conv2d_forward(s, in, w, b, out_p);
        CHECK(max_abs_diff(out_r, out_p) < 1e-12);

        std::vector<double> gi_r(in_n), gi_p(in_n), gw_r(s.weight_count(), 0.5), gw_p(s.weight_count(), 0.5),
            gb_r(static_cast<std::size_t>(s.cout), 0.25), gb_p(static_cast<std::size_t>(s.cout), 0.25);
        reference::conv2d_backward(s, in, w, go, gi_r, gw_r, gb_r);
        parallel::conv2d_backward(s, in, w, go, gi_p, gw_p, gb_p);
        CHECK(max_abs_diff(gi_r, gi_p) < 1e-11);
        CHECK(max_abs_diff(gw_r, gw_p) < 1e-11);
        CHECK(max_abs_diff(gb_r, gb_p) < 1e-11);

        // Adjoint identity: <conv_nobias(x), g> == <x, grad_in(g)>.
        std::vector<double> zero_b(static_cast<std::size_t>(s.cout), 0.0), lin(out_n);
        reference::conv2d_forward(s, in, w, zero_b, lin);
        CHECK(dot(lin, go) == doctest::Approx(dot(in, gi_r)).epsilon(1e-10));
    }
}

TEST_CASE("weight gradient matches finite differences") {
    Rng rng(2);
    const ConvShape s{2, 3, 3, 6, 5};
    const std::size_t in_n = 2 * 30, out_n = 3 * 30;
    const auto in = random_vec(in_n, rng), b = random_vec(3, rng), go = random_vec(out_n, rng);
    auto w = random_vec(s.weight_count(), rng);
    std::vector<double> gw(s.weight_count(), 0.0), gb(3, 0.0);
    parallel::conv2d_backward(s, in, w, go, {}, gw, gb);
    const double h = 1e-6;
    for (std::size_t k = 0; k < w.size(); k += 5) {
        std::vector<double> op(out_n), om(out_n);
        const double keep = w[k];
        w[k] = keep + h;
        parallel::conv2d_forward(s, in, w, b, op);
        w[k] = keep - h;
        parallel::conv2d_forward(s, in, w, b, om);
        w[k] = keep;
        CHECK(gw[k] == doctest::Approx((dot(op, go) - dot(om, go)) / (2 * h)).epsilon(1e-7));
    }
}

TEST_CASE("pooling, upsampling and concat backward are adjoints") {
    Rng rng(3);
    const auto x = random_tensor(3, 8, 6, rng);
    const auto gp = random_tensor(3, 4, 3, rng);
    CHECK(dot(avg_pool2(x).v, gp.v) == doctest::Approx(dot(x.v, avg_pool2_backward(gp, 8, 6).v)).epsilon(1e-12));
    // Max pooling is linear for a fixed argmax, so the same identity holds.
    std::vector<std::uint32_t> arg;
    const auto mp = max_pool2(x, arg);
    CHECK(dot(mp.v, gp.v) == doctest::Approx(dot(x.v, max_pool2_backward(gp, arg, 8, 6).v)).epsilon(1e-12));
    for (std::size_t i = 0; i < mp.v.size(); ++i) CHECK(mp.v[i] == x.v[arg[i] + (i / mp.plane()) * x.plane()]);
    const auto gu = random_tensor(3, 8, 6, rng);
    CHECK(dot(upsample2(gp).v, gu.v) == doctest::Approx(dot(gp.v, upsample2_backward(gu).v)).epsilon(1e-12));

    const auto a = random_tensor(2, 4, 4, rng), b = random_tensor(3, 4, 4, rng);
    const auto j = concat(a, b);
    CHECK(j.c == 5);
    Tensor a2, b2;
    split(j, 2, a2, b2);
    CHECK(a2.v == a.v);
    CHECK(b2.v == b.v);
}

TEST_CASE("relu and its backward") {
    Tensor t(1, 1, 4);
    t.v = {-1.0, 0.0, 2.0, -3.0};
    relu_inplace(t);
    CHECK(t.v == std::vector<double>{0.0, 0.0, 2.0, 0.0});
    Tensor g(1, 1, 4, 1.0);
    relu_backward(t, g);
    CHECK(g.v == std::vector<double>{0.0, 0.0, 1.0, 0.0});
    CHECK(all_finite(t));
    t.v[0] = std::nan("");
    CHECK_FALSE(all_finite(t));
}

} // TEST_SUITE
