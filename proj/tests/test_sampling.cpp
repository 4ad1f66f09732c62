#include <doctest.h>

#include <cmath>

#include "fnaf/rng.hpp"
#include "fnaf/sampling.hpp"

using namespace fnaf;

namespace {

Image2D random_image(std::size_t r, std::size_t c, Rng& rng) {
    Image2D g(r, c);
    for (auto& v : g.data()) v = rng.uniform();
    return g;
}

double max_abs_diff(const ComplexGrid& a, const ComplexGrid& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST_SUITE("sampling") {

TEST_CASE("presets") {
    CHECK(MaskSpec::preset(4, 0).center_fraction == 0.08);
    CHECK(MaskSpec::preset(8, 0).center_fraction == 0.04);
    CHECK_THROWS_AS(MaskSpec::preset(5, 0), Error);
}

TEST_CASE("center band of 8 columns at 4x over 100 columns is always selected") {
    const auto [first, count] = center_band(100, 0.08);
    CHECK(count == 8);
    CHECK(first == 46);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto m = generate_mask({4, 0.08, seed}, 100);
        for (std::size_t c = first; c < first + count; ++c) CHECK(m.cols_selected[c] == 1);
        CHECK(m.center_band() == std::pair<std::size_t, std::size_t>{first, count});
    }
}

TEST_CASE("huge acceleration leaves only the center band") {
    const auto m = generate_mask({16, 0.08, 3}, 100);
    const auto [first, count] = center_band(100, 0.08);
    for (std::size_t c = 0; c < 100; ++c) CHECK(m.cols_selected[c] == (c >= first && c < first + count ? 1 : 0));
}

TEST_CASE("a center band more than twice the budget is a spec error") {
    try {
        (void)generate_mask({16, 0.3, 0}, 100);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Spec);
    }
}

TEST_CASE("Monte-Carlo selected fraction is 1/acceleration") {
    for (int acc : {4, 8}) {
        double total = 0.0;
        const int n = 2000;
        for (int s = 0; s < n; ++s) total += generate_mask(MaskSpec::preset(acc, static_cast<std::uint64_t>(s)), 320).selected_fraction();
        CHECK(std::abs(total / n - 1.0 / acc) < 0.01);
    }
}

TEST_CASE("masks are deterministic in (spec, cols)") {
    const auto a = generate_mask({4, 0.08, 77}, 128), b = generate_mask({4, 0.08, 77}, 128);
    CHECK(a.cols_selected == b.cols_selected);
    const auto c = generate_mask({4, 0.08, 78}, 128);
    CHECK(a.cols_selected != c.cols_selected);
}

TEST_CASE("all-true mask is the identity") {
    Rng rng(1);
    const auto y = random_image(32, 32, rng);
    const auto x = undersample(y, SamplingMask::all_true(32));
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(x[i] - y[i]) < 1e-12);
}

TEST_CASE("DC column alone recovers a constant image") {
    const Image2D y(16, 16, 0.6);
    SamplingMask m = SamplingMask::all_true(16);
    std::fill(m.cols_selected.begin(), m.cols_selected.end(), 0);
    m.cols_selected[8] = 1;
    const auto x = undersample(y, m);
    for (double v : x.data()) CHECK(std::abs(v - 0.6) < 1e-12);
}

TEST_CASE("undersampling is linear before the magnitude") {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const auto y = random_image(24, 20, rng), d = random_image(24, 20, rng);
        const auto m = generate_mask(MaskSpec::preset(trial % 2 ? 8 : 4, static_cast<std::uint64_t>(trial)), 20);
        Image2D sum = y;
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += d[i];
        const auto lhs = undersample_complex(sum, m);
        const auto uy = undersample_complex(y, m), ud = undersample_complex(d, m);
        ComplexGrid rhs(24, 20);
        for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = uy[i] + ud[i];
        CHECK(max_abs_diff(lhs, rhs) < 1e-12);
    }
}

TEST_CASE("masking is idempotent") {
    Rng rng(3);
    const auto y = random_image(16, 16, rng);
    const auto m = generate_mask(MaskSpec::preset(4, 9), 16);
    const auto k = fft2c(to_complex(y));
    const auto once = apply_mask(k, m), twice = apply_mask(once, m);
    CHECK(max_abs_diff(once, twice) == 0.0);
    const auto u1 = undersample_complex(y, m);
    const auto u2 = undersample_complex(u1, m);
    CHECK(max_abs_diff(u1, u2) < 1e-12);
}

TEST_CASE("too few columns or shape mismatch raise") {
    CHECK_THROWS_AS((void)generate_mask(MaskSpec::preset(4, 0), 8), Error);
    const auto m = generate_mask(MaskSpec::preset(4, 0), 32);
    CHECK_THROWS_AS((void)undersample(Image2D(32, 16), m), Error);
}

TEST_CASE("mask json round-trips") {
    const auto m = generate_mask(MaskSpec::preset(8, 5), 64);
    const auto back = mask_from_json(nlohmann::json::parse(to_json(m).dump()));
    CHECK(back.cols_selected == m.cols_selected);
    CHECK(back.spec.acceleration == 8);
    CHECK(back.spec.seed == 5);
}

} // TEST_SUITE
