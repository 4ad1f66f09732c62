#include <doctest.h>

#include <cmath>

#include "fnaf/ipverify.hpp"
#include "fnaf/rng.hpp"

using namespace fnaf;

namespace {

Image2D random_image(std::size_t r, std::size_t c, Rng& rng) {
    Image2D g(r, c);
    for (auto& v : g.data()) v = rng.uniform();
    return g;
}

} // namespace

TEST_SUITE("ipverify") {

TEST_CASE("identical images are never accepted") {
    Rng rng(1);
    const auto x = random_image(32, 32, rng);
    const auto chk = ip_check(x, x, {});
    CHECK(chk.distance == 0.0);
    CHECK_FALSE(chk.accepted);
}

TEST_CASE("one pixel off by one on 128x128") {
    const Image2D x(128, 128, 0.5);
    Image2D y = x;
    y(3, 4) += 1.0;
    const auto chk = ip_check(x, y, {});
    CHECK(chk.distance == 1.0 / 16384.0);
    CHECK(chk.accepted);
    CHECK(ip_check(y, x, {}).distance == chk.distance);
}

TEST_CASE("threshold is strict and acceptance is monotone in epsilon") {
    const Image2D x(16, 16, 0.0);
    Image2D y = x;
    y(0, 0) = 1.0;
    const double d = 1.0 / 256.0;
    CHECK_FALSE(ip_check(x, y, {d}).accepted);
    CHECK(ip_check(x, y, {std::nextafter(d, 0.0)}).accepted);

    Rng rng(2);
    std::vector<Injection> stream;
    for (int i = 0; i < 50; ++i) {
        Image2D a = random_image(16, 16, rng), b = a;
        b(i % 16, i / 16) += 0.01 * (i + 1);
        stream.push_back({"i" + std::to_string(i), a, b, 0.0});
    }
    double prev = 2.0;
    for (double eps : {1e-9, 1e-7, 1e-5, 1e-3}) {
        const double rate = acceptance_rate(stream, {eps});
        CHECK(rate <= prev);
        prev = rate;
    }
    CHECK(acceptance_rate(stream, {1e-9}) == 1.0);
}

TEST_CASE("zero features are rejected and records serialize") {
    Rng rng(3);
    std::vector<Injection> stream;
    for (int i = 0; i < 5; ++i) {
        const auto a = random_image(8, 8, rng);
        stream.push_back({"z" + std::to_string(i), a, a, 0.1});
    }
    CHECK(acceptance_rate(stream, {}) == 0.0);
    const auto recs = ip_records(stream, {});
    const auto csv = ip_csv(recs);
    CHECK(csv.rfind("id,D,adv_loss,accepted\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
    CHECK_THROWS_AS(acceptance_rate(std::span<const IPRecord>{}), Error);
    CHECK_THROWS_AS(ip_check(stream[0].x, stream[0].x, {0.0}), Error);
}

TEST_CASE("pearson correlation") {
    const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 4, 5, 4, 5};
    // Hand computation: S_ab = 6, S_aa = 10, S_bb = 6.
    CHECK(std::abs(pearson_correlation(a, b) - 6.0 / std::sqrt(60.0)) < 1e-12);
    const std::vector<double> up{2, 4, 6, 8, 10}, down{5, 4, 3, 2, 1};
    CHECK(std::abs(pearson_correlation(a, up) - 1.0) < 1e-12);
    CHECK(std::abs(pearson_correlation(a, down) + 1.0) < 1e-12);
    CHECK(pearson_correlation(a, b) == pearson_correlation(b, a));
    const std::vector<double> flat{3, 3, 3, 3, 3};
    try {
        (void)pearson_correlation(a, flat);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::UndefinedCorrelation);
    }
}

TEST_CASE("noise-floor calibration") {
    std::vector<Image2D> ph;
    std::vector<SamplingMask> masks;
    for (int i = 0; i < 20; ++i) {
        ph.emplace_back(32, 32, 0.4);
        masks.push_back(generate_mask(MaskSpec::preset(4, static_cast<std::uint64_t>(i)), 32));
    }
    const double eps = calibrate_epsilon(ph, masks, 0.01, 5, 0.999);
    CHECK(eps > 0.0);
    CHECK(eps < 2 * 0.01 * 0.01);
    CHECK(calibrate_epsilon(ph, masks, 0.01, 5, 0.5) <= eps);
    CHECK(calibrate_epsilon(ph, masks, 0.01, 5, 0.999) == eps);
    CHECK(calibrate_epsilon(ph, masks, 0.0, 5) == 1e-12);
}

} // TEST_SUITE
