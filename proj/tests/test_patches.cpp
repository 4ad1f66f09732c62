#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fnaf/patches.hpp"
#include "fnaf/rng.hpp"
#include "gradcheck.hpp"

using namespace fnaf;

namespace {

ImageLookup one_image(std::size_t side, double fill = 0.3) { return {{{"v", 0}, Image2D(side, side, fill)}}; }

std::vector<PatchRef> synthetic_stream(std::size_t n_abnormal, std::size_t n_normal) {
    std::vector<PatchRef> s;
    for (std::size_t i = 0; i < n_abnormal + n_normal; ++i) {
        const bool ab = i % (n_abnormal + n_normal) < n_abnormal;
        s.push_back({{"v", 0, static_cast<int>(i), 0}, ab ? PatchLabel::Abnormal : PatchLabel::Normal});
    }
    return s;
}

/// Normals are flat noise; abnormals add a bright 6x6 square somewhere.
std::vector<LabeledPatch> toy_patches(std::size_t n, Rng& rng) {
    std::vector<LabeledPatch> out;
    for (std::size_t i = 0; i < n; ++i) {
        LabeledPatch p;
        p.source = {"toy", 0, static_cast<int>(i), 0};
        p.pixels = Image2D(16, 16);
        for (auto& v : p.pixels.data()) v = 0.3 + 0.05 * rng.normal();
        p.label = i % 2 ? PatchLabel::Abnormal : PatchLabel::Normal;
        if (p.label == PatchLabel::Abnormal) {
            const auto r0 = static_cast<std::size_t>(rng.uniform_int(0, 10)), c0 = static_cast<std::size_t>(rng.uniform_int(0, 10));
            for (std::size_t r = r0; r < r0 + 6; ++r)
                for (std::size_t c = c0; c < c0 + 6; ++c) p.pixels(r, c) += 0.6;
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<PatchLabel> labels_of(std::initializer_list<int> v) {
    std::vector<PatchLabel> out;
    for (int x : v) out.push_back(x ? PatchLabel::Abnormal : PatchLabel::Normal);
    return out;
}

} // namespace

TEST_SUITE("patches") {

TEST_CASE("patch grid counts") {
    const auto spec = PatchSpec::preset(32);
    CHECK(spec.stride == 2);
    CHECK(PatchSpec::preset(64).stride == 8);
    CHECK_THROWS_AS(PatchSpec::preset(48), Error);
    CHECK(patches_per_axis(128, spec) == 49);
    CHECK(patches_per_axis(32, spec) == 1);
    CHECK_THROWS_AS(patches_per_axis(16, spec), Error);
    CHECK(extract_patches(one_image(128), AnnotationSet{}, spec).size() == 49 * 49);
}

TEST_CASE("labels follow box overlap") {
    const auto spec = PatchSpec::preset(32);
    const auto none = extract_patches(one_image(64), AnnotationSet{}, spec);
    for (const auto& p : none) CHECK(p.label == PatchLabel::Normal);

    AnnotationSet all;
    all.add({"v", 0, "cyst", 0, 0, 64, 64});
    for (const auto& p : extract_patches(one_image(64), all, spec)) CHECK(p.label == PatchLabel::Abnormal);

    // A one-pixel box at (40, 40) marks exactly the windows that contain it.
    AnnotationSet dot;
    dot.add({"v", 0, "cyst", 40, 40, 1, 1});
    const auto refs = extract_patches(one_image(64), dot, spec);
    for (const auto& p : refs) {
        const bool inside = p.source.row <= 40 && 40 < p.source.row + 32 && p.source.col <= 40 && 40 < p.source.col + 32;
        CHECK((p.label == PatchLabel::Abnormal) == inside);
    }
    // Growing the annotation never turns an abnormal patch normal.
    AnnotationSet bigger = dot;
    bigger.add({"v", 0, "med_men", 5, 5, 4, 4});
    const auto refs2 = extract_patches(one_image(64), bigger, spec);
    for (std::size_t i = 0; i < refs.size(); ++i)
        if (refs[i].label == PatchLabel::Abnormal) CHECK(refs2[i].label == PatchLabel::Abnormal);
    // Row-major order within the slice.
    CHECK(refs[1].source.col == 2);
    CHECK(refs[1].source.row == 0);
}

TEST_CASE("balance cap") {
    const auto s = synthetic_stream(100, 5000);
    const auto b = balance_cap(s, 3);
    std::size_t ab = 0, no = 0;
    for (const auto& p : b) (p.label == PatchLabel::Abnormal ? ab : no)++;
    CHECK(ab == 100);
    CHECK(no == 100);
    CHECK(std::is_sorted(b.begin(), b.end(), [](const PatchRef& x, const PatchRef& y) { return x.source < y.source; }));
    CHECK(balance_cap(s, 3) == b);
    CHECK(balance_cap(s, 4) != b);

    const auto few = synthetic_stream(50, 20);
    CHECK(balance_cap(few, 1).size() == 70);
    try {
        (void)balance_cap(synthetic_stream(0, 10), 1);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Balance);
    }
}

TEST_CASE("cutting patches") {
    Image2D img(64, 64);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i);
    const ImageLookup lookup{{{"v", 0}, img}};
    const auto p = cut_patch(lookup, {{"v", 0, 4, 6}, PatchLabel::Abnormal}, 32);
    CHECK(p.pixels(0, 0) == img(4, 6));
    CHECK(p.pixels(31, 31) == img(35, 37));
    CHECK(p.label == PatchLabel::Abnormal);
    try {
        (void)cut_patch(lookup, {{"w", 0, 0, 0}, PatchLabel::Normal}, 32);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::MissingData);
    }
    try {
        (void)cut_patch(lookup, {{"v", 0, 40, 0}, PatchLabel::Normal}, 32);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Alignment);
    }
}

TEST_CASE("classifier gradient matches central differences") {
    PatchClassifier m(3);
    Rng rng(4);
    for (auto& p : m.parameters()) p += 0.05 * rng.normal();
    CHECK(m.parameter_count() == 1282);
    Image2D patch(32, 32);
    for (auto& v : patch.data()) v = rng.uniform();
    for (PatchLabel label : {PatchLabel::Normal, PatchLabel::Abnormal}) {
        std::vector<double> g(m.parameter_count(), 0.0);
        (void)m.value_and_grad(patch, label, g);
        std::vector<double> scratch(m.parameter_count());
        const auto res = testing::check_gradient(
            m.parameters(), g, m.layer_ranges(), [&] { return m.value_and_grad(patch, label, scratch); }, 20, 1e-4, 5);
        CHECK(res.checked == 60);
        CHECK(res.max_rel_error < 1e-3);
    }
}

TEST_CASE("classifier training") {
    Rng rng(5);
    const auto train = toy_patches(200, rng), val = toy_patches(60, rng);
    ClassifierConfig cfg;
    cfg.max_epochs = 0;
    const auto untrained = train_classifier(train, val, cfg);
    for (double p : predict(untrained.model, val)) CHECK(p == 0.5);

    cfg.max_epochs = 20;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.05;
    const auto r = train_classifier(train, val, cfg);
    REQUIRE(r.best_epoch >= 0);
    CHECK(r.history[static_cast<std::size_t>(r.best_epoch)].val_auroc == 1.0);
    const auto again = train_classifier(train, val, cfg);
    CHECK(std::equal(r.model.parameters().begin(), r.model.parameters().end(), again.model.parameters().begin()));

    const auto path = std::filesystem::temp_directory_path() / "fnaf_test_cls" / "c.bin";
    save_classifier(path, r.model);
    const auto back = load_classifier(path);
    CHECK(predict(back, val) == predict(r.model, val));
    std::filesystem::remove_all(path.parent_path());
}

TEST_CASE("classification metrics") {
    const auto labels = labels_of({1, 1, 0, 0, 1, 0});
    const std::vector<double> perfect{0.9, 0.8, 0.1, 0.2, 0.7, 0.3};
    const auto s = score_predictions("m", perfect, labels);
    CHECK(s.sensitivity == 100.0);
    CHECK(s.specificity == 100.0);
    CHECK(s.f1 == 100.0);
    CHECK(s.kappa == doctest::Approx(1.0));
    CHECK(s.auroc == 1.0);
    CHECK(s.false_negatives.empty());

    const std::vector<double> all_pos(6, 0.9);
    const auto p = score_predictions("m", all_pos, labels);
    CHECK(p.sensitivity == 100.0);
    CHECK(p.specificity == 0.0);
    CHECK(p.kappa == doctest::Approx(0.0));
    CHECK(p.auroc == 0.5);

    const std::vector<double> mixed{0.4, 0.8, 0.6, 0.2, 0.3, 0.1};
    const auto q = score_predictions("m", mixed, labels);
    CHECK(q.tp == 1);
    CHECK(q.fn == 2);
    CHECK(q.fp == 1);
    CHECK(q.tn == 2);
    CHECK(q.false_negatives == std::vector<std::size_t>{0, 4});
    CHECK(q.mean_fn_probability == doctest::Approx(0.35));
    // 9 abnormal/normal pairs: (0.4: beats 0.2, 0.1), (0.8: all 3), (0.3: beats 0.2, 0.1) = 7.
    CHECK(q.auroc == doctest::Approx(7.0 / 9.0));
    std::vector<double> squashed;
    for (double v : mixed) squashed.push_back(std::exp(3 * v) / (1 + std::exp(3 * v)));
    CHECK(auroc(squashed, labels) == q.auroc);
}

TEST_CASE("paired scoring requires aligned patch lists") {
    Rng rng(6);
    const auto a = toy_patches(10, rng);
    auto b = a;
    const PatchClassifier m(1);
    const std::vector<MethodPatches> ok{{"a", a}, {"b", b}};
    const auto scores = classify_and_score(m, ok);
    CHECK(scores.size() == 2);
    CHECK(scores[0].method == "a");
    const auto cmp = compare_false_negatives(scores[0], scores[1]);
    CHECK(cmp.only_a == 0);
    CHECK(cmp.only_b == 0);
    b[3].source.row = 99;
    try {
        (void)classify_and_score(m, std::vector<MethodPatches>{{"a", a}, {"b", b}});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Alignment);
    }
}

TEST_CASE("patch manifests round-trip") {
    const auto s = synthetic_stream(3, 4);
    const auto text = format_patch_manifest(s, 32);
    CHECK(parse_patch_manifest(text) == s);
    CHECK(parse_patch_manifest("").empty());
}

} // TEST_SUITE
