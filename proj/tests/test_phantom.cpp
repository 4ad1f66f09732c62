#include <doctest.h>

#include <filesystem>
#include <set>

#include "fnaf/grid_io.hpp"
#include "fnaf/phantom.hpp"

using namespace fnaf;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("fnaf_test_" + name);
    fs::remove_all(p);
    return p;
}

} // namespace

TEST_SUITE("phantom") {

TEST_CASE("phantoms are deterministic and normalized") {
    PhantomSpec s;
    s.size = 64;
    s.seed = 11;
    const auto a = generate_phantom(s), b = generate_phantom(s);
    CHECK(a == b);
    s.noise_sigma = 0.0;
    const auto c = generate_phantom(s);
    CHECK(max_value(c) == 1.0);
    CHECK(min_value(c) == 0.0);
}

TEST_CASE("mean intensity stays in the calibrated band") {
    PhantomSpec s;
    s.size = 64;
    double lo = 1.0, hi = 0.0, total = 0.0;
    const int n = 200;
    for (int i = 0; i < n; ++i) {
        s.seed = static_cast<std::uint64_t>(i);
        const auto img = generate_phantom(s);
        double m = 0.0;
        for (double v : img.data()) m += v;
        m /= static_cast<double>(img.size());
        lo = std::min(lo, m);
        hi = std::max(hi, m);
        total += m;
    }
    CHECK(total / n >= 0.2);
    CHECK(total / n <= 0.6);
    MESSAGE("per-phantom mean range [" << lo << ", " << hi << "]");
}

TEST_CASE("invalid specs raise") {
    PhantomSpec s;
    s.size = 32;
    CHECK_THROWS_AS(generate_phantom(s), Error);
    s.size = 64;
    s.noise_sigma = -1.0;
    CHECK_THROWS_AS(generate_phantom(s), Error);
}

TEST_CASE("zero-contrast lesion leaves the image unchanged") {
    PhantomSpec s;
    s.size = 64;
    const auto img = generate_phantom(s);
    Lesion l;
    l.row = 30;
    l.col = 30;
    l.contrast = 0.0;
    const auto p = plant_lesion(img, l);
    CHECK(p.image == img);
    CHECK(p.box.area() >= 10);
}

TEST_CASE("single-pixel lesion changes exactly one pixel") {
    const Image2D img(64, 64, 0.2);
    Lesion l;
    l.row = 10;
    l.col = 20;
    l.pixel_count = 1;
    l.contrast = 0.3;
    const auto p = plant_lesion(img, l);
    int changed = 0;
    for (std::size_t r = 0; r < 64; ++r)
        for (std::size_t c = 0; c < 64; ++c)
            if (p.image(r, c) != img(r, c)) {
                ++changed;
                CHECK(r == 10);
                CHECK(c == 20);
                CHECK(p.image(r, c) - img(r, c) == doctest::Approx(0.3).epsilon(1e-12));
            }
    CHECK(changed == 1);
    CHECK(p.box.x == 20);
    CHECK(p.box.y == 10);
    CHECK(p.box.area() == 1);
}

TEST_CASE("planted lesions are connected and boxed") {
    const Image2D img(64, 64, 0.2);
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        Lesion l = random_lesion(64, rng);
        if (trial % 4 == 0) l.pixel_count = 10;
        const auto p = plant_lesion(img, l, "v", 0);
        std::vector<Offset> abs;
        for (const auto& px : p.pixels) {
            abs.push_back(px);
            CHECK(p.box.contains(px.dr, px.dc));
        }
        CHECK(abs.size() == l.pixel_count);
        CHECK(is_four_connected(abs));
        CHECK(is_known_label(p.box.label));
        if (l.pixel_count == 10) {
            CHECK(p.box.area() >= 10);
            CHECK(p.box.area() <= 100);
        }
    }
}

TEST_CASE("lesions outside the image are placement errors") {
    const Image2D img(64, 64, 0.2);
    Lesion l;
    l.row = 70;
    try {
        (void)plant_lesion(img, l);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Placement);
    }
}

TEST_CASE("lesion_rate 0 writes empty annotation files") {
    PhantomSpec s;
    s.size = 64;
    const auto root = scratch_dir("rate0");
    const auto m = build_dataset(4, 2, 0.0, s, root);
    CHECK(io::read_text(m.annotations("train")).empty());
    CHECK(io::read_text(m.annotations("val")).empty());
    fs::remove_all(root);
}

TEST_CASE("lesion_rate 1 gives one record per image and disjoint splits") {
    PhantomSpec s;
    s.size = 64;
    s.seed = 3;
    const auto root = scratch_dir("rate1");
    const auto m = build_dataset(50, 5, 1.0, s, root);
    const auto ann = load_annotations(m.annotations("train"));
    CHECK(ann.size() == 50);
    const std::set<std::string> train_ids(m.train_ids.begin(), m.train_ids.end());
    for (const auto& b : ann.boxes()) {
        CHECK(train_ids.count(b.volume_id) == 1);
        CHECK(fs::exists(m.image_stem(b.volume_id).string() + ".bin"));
    }
    for (const auto& id : m.val_ids) CHECK(train_ids.count(id) == 0);

    // Reloading reproduces the in-memory dataset up to f32 storage, and regeneration is bit-exact.
    const auto mem = generate_dataset(50, 5, 1.0, s);
    const auto loaded = load_manifest(root);
    const auto val = load_split(loaded, "val");
    REQUIRE(val.size() == 5);
    for (std::size_t i = 0; i < val.size(); ++i) {
        CHECK(val[i].id == mem.val[i].id);
        CHECK(val[i].boxes == mem.val[i].boxes);
        for (std::size_t k = 0; k < val[i].target.size(); ++k)
            CHECK(val[i].target[k] == static_cast<double>(static_cast<float>(mem.val[i].target[k])));
    }
    const auto again = generate_dataset(50, 5, 1.0, loaded.spec);
    for (std::size_t i = 0; i < again.train.size(); ++i) CHECK(again.train[i].target == mem.train[i].target);
    fs::remove_all(root);
}

} // TEST_SUITE
