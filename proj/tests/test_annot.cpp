#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fnaf/annot.hpp"
#include "fnaf/grid_io.hpp"
#include "fnaf/rng.hpp"

using namespace fnaf;

namespace {

BoundingBox box(std::string vol, int slice, int x, int y, int w, int h, std::string label = "cyst") {
    return {std::move(vol), slice, std::move(label), x, y, w, h};
}

Image2D random_image(std::size_t r, std::size_t c, Rng& rng) {
    Image2D g(r, c);
    for (auto& v : g.data()) v = rng.uniform();
    return g;
}

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::InvalidInput;
}

} // namespace

TEST_SUITE("annot") {

TEST_CASE("annotation files round-trip and drop duplicates") {
    CHECK(parse_annotations("").empty());
    CHECK(parse_annotations("\n  \n").empty());
    AnnotationSet set;
    CHECK(set.add(box("v1", 0, 2, 3, 4, 5, "med_men")));
    CHECK(set.add(box("v1", 0, 9, 9, 2, 2, "cyst")));
    CHECK(set.add(box("v0", 2, 0, 0, 1, 1, "bml_lat_tib")));
    CHECK_FALSE(set.add(box("v1", 0, 2, 3, 4, 5, "med_men")));
    CHECK(set.size() == 3);
    const auto text = format_annotations(set);
    const auto back = parse_annotations(text);
    CHECK(back.boxes() == set.boxes());
    CHECK(back.slices() == std::vector<SliceKey>{{"v0", 2}, {"v1", 0}});
    CHECK(back.boxes_for({"v1", 0}).size() == 2);
    CHECK(back.boxes_for({"v9", 0}).empty());

    const auto path = std::filesystem::temp_directory_path() / "fnaf_test_annot" / "a.jsonl";
    io::write_text(path, text);
    CHECK(load_annotations(path).boxes() == set.boxes());
    std::filesystem::remove_all(path.parent_path());
}

TEST_CASE("malformed annotations name the line or label") {
    const std::string good = to_json(box("v", 0, 1, 1, 2, 2)).dump();
    CHECK(kind_of([&] { (void)parse_annotations(good + "\n{not json\n"); }) == ErrorKind::Parse);
    try {
        (void)parse_annotations(good + "\n" + good + "\n{\"volume_id\": \"v\"}\n");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    auto typo = box("v", 0, 1, 1, 2, 2, "meniscus_typo");
    try {
        (void)parse_annotations(to_json(typo).dump());
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Vocabulary);
        CHECK(std::string(e.what()).find("meniscus_typo") != std::string::npos);
    }
    auto flat = box("v", 0, 1, 1, 0, 2);
    CHECK(kind_of([&] { (void)parse_annotations(to_json(flat).dump()); }) == ErrorKind::Parse);
    CHECK(kind_of([&] { (void)box_mask(box("v", 0, 30, 0, 4, 4), 32, 32); }) == ErrorKind::Annotation);
}

TEST_CASE("region table") {
    Rng rng(1);
    const auto target = random_image(32, 32, rng), recon = random_image(32, 32, rng);
    AnnotationSet set;
    set.add(box("a", 0, 0, 0, 32, 32, "cyst"));
    set.add(box("a", 0, 4, 5, 3, 2, "med_men"));
    set.add(box("a", 0, 10, 10, 6, 6, "med_men"));
    const ImageLookup targets{{{"a", 0}, target}}, recons{{{"a", 0}, recon}};

    const auto exact = region_nmse_table(targets, targets, set);
    for (const auto& b : exact.per_box) CHECK(b.nmse == 0.0);

    const auto t = region_nmse_table(recons, targets, set);
    REQUIRE(t.per_box.size() == 3);
    CHECK(t.per_box[0].nmse == doctest::Approx(nmse(recon, target)).epsilon(1e-12));
    double e = 0.0, n = 0.0;
    for (int r = 5; r < 7; ++r)
        for (int c = 4; c < 7; ++c) {
            e += (recon(r, c) - target(r, c)) * (recon(r, c) - target(r, c));
            n += target(r, c) * target(r, c);
        }
    CHECK(t.per_box[1].nmse == doctest::Approx(e / n).epsilon(1e-12));
    CHECK(t.all == doctest::Approx((t.per_box[0].nmse + t.per_box[1].nmse + t.per_box[2].nmse) / 3).epsilon(1e-14));
    CHECK(t.per_label_count.at("med_men") == 2);
    CHECK(t.per_label_mean.at("med_men") ==
          doctest::Approx((t.per_box[1].nmse + t.per_box[2].nmse) / 2).epsilon(1e-14));

    const auto csv = region_csv({"a", "b"}, {t, exact});
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    CHECK(kind_of([&] { (void)region_nmse_table(ImageLookup{}, targets, set); }) == ErrorKind::MissingData);
}

TEST_CASE("wilcoxon rank-sum") {
    const std::vector<double> a{1, 2, 3}, b{10, 11, 12};
    const auto r = wilcoxon_rank_sum(a, b);
    CHECK(r.exact);
    CHECK(r.statistic == 6.0);
    CHECK(std::abs(r.p_two_sided - 0.1) < 1e-12);
    CHECK(wilcoxon_rank_sum(b, a).p_two_sided == r.p_two_sided);
    CHECK(wilcoxon_rank_sum(a, a).p_two_sided == doctest::Approx(1.0));

    // Frozen from scipy.stats.mannwhitneyu(method="exact").
    const std::vector<double> x{0.8, 0.83, 1.89, 1.04, 1.45, 1.38, 1.91, 1.64, 0.73}, y{1.15, 0.88, 0.90, 0.74, 1.21};
    CHECK(wilcoxon_rank_sum(x, y).p_two_sided == doctest::Approx(0.36363636363636365).epsilon(1e-12));

    // Frozen from scipy.stats.mannwhitneyu(method="asymptotic", use_continuity=True), with ties.
    const std::vector<double> u{0.1, -0.1, 0.6, 0.1, -0.5, 0.4, 1.3, 0.9, -0.7, -1.3, -0.6, 0.0, -2.3, -0.2, -1.2},
        v{0.1, 0.3, 0.5, 1.2, 1.8, 0.7, 2.2, 0.1, 1.2, 1.7, 0.9, 0.1};
    const auto big = wilcoxon_rank_sum(u, v);
    CHECK_FALSE(big.exact);
    CHECK(big.statistic == 147.5);
    CHECK(big.p_two_sided == doctest::Approx(0.002401373385080993).epsilon(1e-10));
}

TEST_CASE("mcnemar") {
    const auto r = mcnemar(10, 0);
    CHECK(r.exact);
    CHECK(std::abs(r.p - 0.001953125) < 1e-15);
    CHECK(mcnemar(0, 10).p == r.p);
    CHECK(mcnemar(0, 0).p == 1.0);
    CHECK(mcnemar(7, 7).p == 1.0);
    // Frozen from scipy.stats.binomtest and chi2.sf.
    CHECK(mcnemar(3, 17).p == doctest::Approx(0.0025768280029296875).epsilon(1e-12));
    const auto chi = mcnemar(30, 12);
    CHECK_FALSE(chi.exact);
    CHECK(chi.statistic == doctest::Approx(289.0 / 42.0).epsilon(1e-14));
    CHECK(chi.p == doctest::Approx(0.008711912962379598).epsilon(1e-10));
    CHECK_THROWS_AS(mcnemar(-1, 2), Error);
}

TEST_CASE("size correlation") {
    const std::vector<double> areas{10, 20, 40, 80, 160};
    std::vector<double> neg;
    for (double a : areas) neg.push_back(-a);
    CHECK(std::abs(size_correlation(neg, areas) + 1.0) < 1e-12);
    const std::vector<double> flat(5, 0.2);
    CHECK(kind_of([&] { (void)size_correlation(flat, areas); }) == ErrorKind::UndefinedCorrelation);
}

} // TEST_SUITE
