#include "fnaf/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fnaf/grid_io.hpp"

namespace fnaf {

namespace {

constexpr const char* kModule = "phantom";
constexpr double kEdgePixels = 0.7;

struct Ellipse {
    double cu, cv;   // center, fraction of side (u = column, v = row)
    double au, av;   // semi-axes, fraction of side
    double angle;    // radians
    double value;
};

double soft_membership(const Ellipse& e, double u, double v, double size) {
    const double du = u - e.cu, dv = v - e.cv;
    const double ca = std::cos(e.angle), sa = std::sin(e.angle);
    const double x = (ca * du + sa * dv) / e.au;
    const double y = (-sa * du + ca * dv) / e.av;
    const double rho = std::sqrt(x * x + y * y);
    const double dist_px = (rho - 1.0) * std::min(e.au, e.av) * size;
    return 1.0 / (1.0 + std::exp(dist_px / kEdgePixels));
}

Ellipse jitter(Ellipse e, Rng& rng) {
    e.cu += rng.uniform(-0.02, 0.02);
    e.cv += rng.uniform(-0.02, 0.02);
    e.au *= rng.uniform(0.93, 1.07);
    e.av *= rng.uniform(0.93, 1.07);
    e.angle += rng.uniform(-0.08, 0.08);
    e.value += rng.uniform(-0.04, 0.04);
    return e;
}

std::string split_id(const std::string& split, std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%04zu", split.c_str(), index);
    return buf;
}

} // namespace

void PhantomSpec::validate() const {
    if (size < 64) throw Error(ErrorKind::Spec, kModule, "phantom size must be >= 64");
    if (noise_sigma < 0.0) throw Error(ErrorKind::Spec, kModule, "noise_sigma must be >= 0");
    if (intensity_hi < intensity_lo) throw Error(ErrorKind::Spec, kModule, "intensity range is inverted");
}

std::string_view to_string(LesionKind kind) {
    switch (kind) {
    case LesionKind::Bml: return "bml";
    case LesionKind::Cartilage: return "cartilage";
    case LesionKind::Meniscus: return "meniscus";
    case LesionKind::Cyst: return "cyst";
    }
    return "bml";
}

Image2D generate_phantom(const PhantomSpec& spec) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, "phantom"));

    // Painted back to front: later layers replace earlier ones under their soft mask.
    std::vector<Ellipse> layers{
        {0.50, 0.50, 0.40, 0.47, 0.0, 0.30},  // soft tissue
        {0.50, 0.25, 0.32, 0.245, 0.0, 0.80}, // femoral cartilage
        {0.50, 0.24, 0.30, 0.22, 0.0, 0.52},  // femur
        {0.50, 0.78, 0.32, 0.245, 0.0, 0.80}, // tibial cartilage
        {0.50, 0.79, 0.30, 0.22, 0.0, 0.52},  // tibia
        {0.22, 0.515, 0.07, 0.018, 0.0, 0.10}, // medial meniscus
        {0.78, 0.515, 0.07, 0.018, 0.0, 0.10}, // lateral meniscus
    };
    for (auto& e : layers) e = jitter(e, rng);

    std::vector<Ellipse> texture;
    for (std::size_t i = 0; i < spec.n_ellipses; ++i) {
        Ellipse e;
        e.cu = rng.uniform(0.2, 0.8);
        e.cv = rng.uniform(0.15, 0.85);
        e.au = rng.uniform(0.03, 0.12);
        e.av = rng.uniform(0.03, 0.12);
        e.angle = rng.uniform(0.0, 3.14159);
        const double mag = rng.uniform(spec.intensity_lo, spec.intensity_hi);
        e.value = rng.bernoulli(0.5) ? mag : -mag;
        texture.push_back(e);
    }

    const std::size_t n = spec.size;
    const double side = static_cast<double>(n);
    Image2D img(n, n);
    for (std::size_t r = 0; r < n; ++r) {
        const double v = (static_cast<double>(r) + 0.5) / side;
        for (std::size_t c = 0; c < n; ++c) {
            const double u = (static_cast<double>(c) + 0.5) / side;
            double val = 0.0;
            for (const auto& e : layers) {
                const double m = soft_membership(e, u, v, side);
                val = val * (1.0 - m) + e.value * m;
            }
            const double tissue = soft_membership(layers[0], u, v, side);
            for (const auto& e : texture) val += tissue * e.value * soft_membership(e, u, v, side);
            img(r, c) = val;
        }
    }
    if (spec.noise_sigma > 0.0) {
        Rng noise(derive_seed(spec.seed, "noise"));
        for (auto& v : img.data()) v += spec.noise_sigma * noise.normal();
    }
    const double lo = min_value(img), hi = max_value(img);
    const double span = hi > lo ? hi - lo : 1.0;
    for (auto& v : img.data()) v = (v - lo) / span;
    return img;
}

PlantedLesion plant_lesion(const Image2D& img, const Lesion& lesion, const std::string& volume_id, int slice) {
    const int rows = static_cast<int>(img.rows()), cols = static_cast<int>(img.cols());
    if (lesion.row < 0 || lesion.col < 0 || lesion.row >= rows || lesion.col >= cols)
        throw Error(ErrorKind::Placement, kModule, "lesion center outside image");
    if (lesion.pixel_count == 0) throw Error(ErrorKind::Placement, kModule, "lesion needs at least one pixel");
    Rng rng(lesion.shape_seed);
    const auto offsets = grow_blob(lesion.pixel_count, rng, [&](int dr, int dc) {
        const int r = lesion.row + dr, c = lesion.col + dc;
        return r >= 0 && c >= 0 && r < rows && c < cols;
    });
    if (offsets.size() != lesion.pixel_count)
        throw Error(ErrorKind::Placement, kModule, "lesion does not fit inside the image");

    PlantedLesion out;
    out.image = img;
    int r0 = rows, r1 = -1, c0 = cols, c1 = -1;
    for (const auto& o : offsets) {
        const int r = lesion.row + o.dr, c = lesion.col + o.dc;
        out.image(r, c) += lesion.contrast;
        out.pixels.push_back({r, c});
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
    }
    out.box.volume_id = volume_id;
    out.box.slice = slice;
    out.box.label = annotation_label(lesion.kind, lesion.row, lesion.col, img.rows());
    out.box.x = c0;
    out.box.y = r0;
    out.box.w = c1 - c0 + 1;
    out.box.h = r1 - r0 + 1;
    return out;
}

Lesion random_lesion(std::size_t size, Rng& rng) {
    const double s = static_cast<double>(size);
    Lesion l;
    l.row = static_cast<int>(rng.uniform_int(static_cast<int>(0.3 * s), static_cast<int>(0.7 * s)));
    l.col = static_cast<int>(rng.uniform_int(static_cast<int>(0.25 * s), static_cast<int>(0.75 * s)));
    l.pixel_count = static_cast<std::size_t>(rng.uniform_int(5, 50));
    l.kind = static_cast<LesionKind>(rng.uniform_int(0, 3));
    const double mag = rng.uniform(0.3, 0.5);
    l.contrast = l.kind == LesionKind::Cartilage ? -mag : mag;
    l.shape_seed = rng.next_u64();
    return l;
}

std::string annotation_label(LesionKind kind, int row, int col, std::size_t size) {
    const bool femur = row < static_cast<int>(size / 2);
    const bool medial = col < static_cast<int>(size / 2);
    const std::string side = medial ? "med" : "lat";
    const std::string bone = femur ? "fem" : "tib";
    switch (kind) {
    case LesionKind::Bml: return "bml_" + side + "_" + bone;
    case LesionKind::Cartilage: return "cart_" + side + "_" + bone;
    case LesionKind::Meniscus: return side + "_men";
    case LesionKind::Cyst: return "cyst";
    }
    return "cyst";
}

namespace {

std::vector<DatasetImage> generate_split(const std::string& split, std::size_t count, double lesion_rate,
                                         const PhantomSpec& spec) {
    std::vector<DatasetImage> images(count);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < count; ++i) {
        DatasetImage& d = images[i];
        d.id = split_id(split, i);
        PhantomSpec ps = spec;
        ps.seed = derive_seed(spec.seed, "phantom/" + d.id);
        d.target = generate_phantom(ps);
        Rng rng(derive_seed(spec.seed, "lesion/" + d.id));
        if (!rng.bernoulli(lesion_rate)) continue;
        auto planted = plant_lesion(d.target, random_lesion(spec.size, rng), d.id, 0);
        d.target = std::move(planted.image);
        d.boxes.push_back(planted.box);
    }
    return images;
}

} // namespace

InMemoryDataset generate_dataset(std::size_t n_train, std::size_t n_val, double lesion_rate, const PhantomSpec& spec) {
    spec.validate();
    if (n_train < 1 || n_val < 1) throw Error(ErrorKind::Spec, kModule, "dataset splits need at least one image");
    if (!(lesion_rate >= 0.0 && lesion_rate <= 1.0)) throw Error(ErrorKind::Spec, kModule, "lesion_rate must lie in [0, 1]");
    return {generate_split("train", n_train, lesion_rate, spec), generate_split("val", n_val, lesion_rate, spec)};
}

nlohmann::ordered_json to_json(const PhantomSpec& spec) {
    return {{"size", spec.size},
            {"n_ellipses", spec.n_ellipses},
            {"intensity_range", {spec.intensity_lo, spec.intensity_hi}},
            {"noise_sigma", spec.noise_sigma},
            {"seed", spec.seed}};
}

PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
    PhantomSpec s;
    s.size = j.value("size", s.size);
    s.n_ellipses = j.value("n_ellipses", s.n_ellipses);
    if (j.contains("intensity_range")) {
        s.intensity_lo = j.at("intensity_range").at(0).get<double>();
        s.intensity_hi = j.at("intensity_range").at(1).get<double>();
    }
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.seed = j.value("seed", s.seed);
    return s;
}

DatasetManifest build_dataset(std::size_t n_train, std::size_t n_val, double lesion_rate, const PhantomSpec& spec,
                              const std::filesystem::path& root) {
    const auto data = generate_dataset(n_train, n_val, lesion_rate, spec);
    DatasetManifest m;
    m.root = root;
    m.spec = spec;
    m.lesion_rate = lesion_rate;
    std::filesystem::create_directories(root / "images");
    for (const auto& [split, images, ids] :
         {std::tuple{std::string("train"), &data.train, &m.train_ids}, std::tuple{std::string("val"), &data.val, &m.val_ids}}) {
        AnnotationSet annset;
        for (const auto& d : *images) {
            io::write_fgrid(m.image_stem(d.id), d.target);
            ids->push_back(d.id);
            for (const auto& b : d.boxes) annset.add(b);
        }
        io::write_text(m.annotations(split), format_annotations(annset));
    }
    nlohmann::ordered_json j;
    j["format"] = "DATASET v1";
    j["spec"] = to_json(spec);
    j["lesion_rate"] = lesion_rate;
    j["splits"] = {{"train", m.train_ids}, {"val", m.val_ids}};
    io::write_text(root / "manifest.json", j.dump(2) + "\n");
    return m;
}

DatasetManifest load_manifest(const std::filesystem::path& root) {
    try {
        const auto j = nlohmann::json::parse(io::read_text(root / "manifest.json"));
        DatasetManifest m;
        m.root = root;
        m.spec = phantom_spec_from_json(j.at("spec"));
        m.lesion_rate = j.at("lesion_rate").get<double>();
        m.train_ids = j.at("splits").at("train").get<std::vector<std::string>>();
        m.val_ids = j.at("splits").at("val").get<std::vector<std::string>>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, kModule, std::string("malformed manifest: ") + e.what());
    }
}

std::vector<DatasetImage> load_split(const DatasetManifest& manifest, const std::string& split) {
    const auto& ids = split == "train" ? manifest.train_ids : manifest.val_ids;
    if (split != "train" && split != "val") throw Error(ErrorKind::Config, kModule, "unknown split '" + split + "'");
    const auto annset = load_annotations(manifest.annotations(split));
    std::vector<DatasetImage> out;
    for (const auto& id : ids) {
        DatasetImage d;
        d.id = id;
        d.target = io::read_fgrid_image(manifest.image_stem(id));
        d.boxes = annset.boxes_for({id, 0});
        out.push_back(std::move(d));
    }
    return out;
}

} // namespace fnaf
