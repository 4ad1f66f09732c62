#include "fnaf/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "fnaf/annot.hpp"
#include "fnaf/attack.hpp"
#include "fnaf/grid_io.hpp"
#include "fnaf/ipverify.hpp"
#include "fnaf/patches.hpp"
#include "fnaf/phantom.hpp"
#include "fnaf/rng.hpp"
#include "fnaf/robust.hpp"

namespace fnaf::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kModule = "cli";

/// Reads `key` from config section `section`, falling back to `fallback`.
/// Type mismatches raise Config naming section.key.
template <class T>
T get(const RunConfig& cfg, const std::string& section, const std::string& key, T fallback) {
    const auto s = cfg.sections.find(section);
    if (s == cfg.sections.end()) return fallback;
    if (!s->is_object()) throw Error(ErrorKind::Config, kModule, "config section '" + section + "' must be an object");
    const auto v = s->find(key);
    if (v == s->end() || v->is_null()) return fallback;
    try {
        return v->get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorKind::Config, kModule, "config field " + section + "." + key + " has the wrong type");
    }
}

void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw Error(ErrorKind::Config, kModule, "config field " + field + " " + what);
}

std::string hex16(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

void write_json(const fs::path& path, const ordered_json& j) { io::write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
    try {
        return json::parse(io::read_text(path));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, kModule, path.string() + ": " + e.what());
    }
}

ordered_json number_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

struct Context {
    RunConfig cfg;
    fs::path run;
    int af = 4;
    TrainMode mode = TrainMode::Standard;

    [[nodiscard]] std::string tag(std::string_view mode_name) const {
        return std::string(mode_name) + "_af" + std::to_string(af);
    }
    [[nodiscard]] std::string tag() const { return tag(to_string(mode)); }
    [[nodiscard]] fs::path data_dir() const { return run / "data"; }
    [[nodiscard]] fs::path checkpoint(std::string_view mode_name) const {
        return run / "models" / (tag(mode_name) + ".ckpt");
    }
    [[nodiscard]] std::uint64_t seed(const std::string& label) const { return derive_seed(cfg.seed, label); }
    [[nodiscard]] std::uint64_t mask_seed() const { return seed("masks/af" + std::to_string(af)); }
};

// Config sections ----------------------------------------------------------

PhantomSpec phantom_spec(const Context& ctx) {
    PhantomSpec s;
    s.size = get<std::size_t>(ctx.cfg, "data", "size", s.size);
    s.n_ellipses = get<std::size_t>(ctx.cfg, "data", "n_ellipses", s.n_ellipses);
    s.noise_sigma = get<double>(ctx.cfg, "data", "noise_sigma", s.noise_sigma);
    s.seed = ctx.seed("data");
    try {
        s.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::Config, kModule, std::string("data section: ") + e.what());
    }
    return s;
}

TrainConfig train_config(const Context& ctx) {
    TrainConfig t;
    t.epochs = get<std::size_t>(ctx.cfg, "train", "epochs", t.epochs);
    t.batch_size = get<std::size_t>(ctx.cfg, "train", "batch_size", t.batch_size);
    t.learning_rate = get<double>(ctx.cfg, "train", "learning_rate", t.learning_rate);
    t.loss.kind = loss_kind_from_string(get<std::string>(ctx.cfg, "train", "loss", "l1"));
    t.seed = ctx.seed("train/" + ctx.tag());
    require(t.batch_size > 0, "train.batch_size", "must be positive");
    require(t.learning_rate > 0.0, "train.learning_rate", "must be > 0");
    return t;
}

Architecture architecture(const Context& ctx) {
    Architecture a;
    a.channels = get<std::vector<int>>(ctx.cfg, "model", "channels", a.channels);
    try {
        a.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::Config, kModule, std::string("model section: ") + e.what());
    }
    return a;
}

AttackConfig attack_config(const Context& ctx, std::size_t side) {
    AttackConfig a = AttackConfig::evaluation(side, ctx.seed("attack/af" + std::to_string(ctx.af)));
    a.n_candidates = get<std::size_t>(ctx.cfg, "attack", "n_candidates", a.n_candidates);
    a.gamma = get<double>(ctx.cfg, "attack", "gamma", a.gamma);
    const auto k = get<std::size_t>(ctx.cfg, "attack", "pixels", a.k_min);
    a.k_min = a.k_max = k;
    a.loss.kind = loss_kind_from_string(get<std::string>(ctx.cfg, "train", "loss", "l1"));
    try {
        a.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::Config, kModule, std::string("attack section: ") + e.what());
    }
    return a;
}

AttackConfig robust_config(const Context& ctx, std::size_t side) {
    AttackConfig a = fnaf_training_config(side, ctx.seed("robust/" + ctx.tag()),
                                          get<std::size_t>(ctx.cfg, "robust", "n_candidates", 3));
    a.alpha = get<double>(ctx.cfg, "robust", "alpha", a.alpha);
    a.beta = get<double>(ctx.cfg, "robust", "beta", a.beta);
    a.k_min = get<std::size_t>(ctx.cfg, "robust", "k_min", a.k_min);
    a.k_max = get<std::size_t>(ctx.cfg, "robust", "k_max", a.k_max);
    try {
        a.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::Config, kModule, std::string("robust section: ") + e.what());
    }
    return a;
}

// Data and models ----------------------------------------------------------

DatasetManifest manifest(const Context& ctx) {
    if (!fs::exists(ctx.data_dir() / "manifest.json"))
        throw Error(ErrorKind::MissingData, kModule, "no dataset in " + ctx.run.string() + "; run gen-data first");
    return load_manifest(ctx.data_dir());
}

std::vector<ReconExample> examples(const Context& ctx, const DatasetManifest& m, const std::string& split) {
    return make_examples(load_split(m, split), ctx.af, ctx.mask_seed());
}

ReconModel load_model(const Context& ctx, std::string_view mode_name) {
    const auto path = ctx.checkpoint(mode_name);
    if (!fs::exists(path))
        throw Error(ErrorKind::MissingData, kModule,
                    "no checkpoint " + path.filename().string() + "; train mode '" + std::string(mode_name) + "' first");
    return load_checkpoint(path);
}

std::vector<std::string> trained_modes(const Context& ctx) {
    std::vector<std::string> out;
    for (auto m : {TrainMode::Standard, TrainMode::Fnaf, TrainMode::Bbox})
        if (fs::exists(ctx.checkpoint(to_string(m)))) out.emplace_back(to_string(m));
    return out;
}

void save_training(const Context& ctx, const TrainResult& r, const TrainConfig& t, ordered_json extra = {}) {
    CheckpointMeta meta;
    meta.mode = std::string(to_string(ctx.mode));
    meta.epoch = r.best_epoch;
    if (r.best_epoch >= 0) meta.val_loss = r.history[static_cast<std::size_t>(r.best_epoch)].val_recon_loss;
    meta.acceleration = ctx.af;
    meta.loss = std::string(to_string(t.loss.kind));
    save_checkpoint(ctx.checkpoint(to_string(ctx.mode)), r.model, meta);
    io::write_text(ctx.run / "models" / (ctx.tag() + "_history.csv"), history_csv(r.history));
    ordered_json j;
    j["mode"] = meta.mode;
    j["acceleration"] = ctx.af;
    j["epochs"] = t.epochs;
    j["best_epoch"] = r.best_epoch;
    j["best_val_recon_loss"] = number_or_null(meta.val_loss);
    for (auto& [k, v] : extra.items()) j[k] = v;
    write_json(ctx.run / "models" / (ctx.tag() + "_train.json"), j);
}

// Subcommands ----------------------------------------------------------------

void cmd_gen_data(const Context& ctx) {
    const auto spec = phantom_spec(ctx);
    const auto n_train = get<std::size_t>(ctx.cfg, "data", "n_train", 160);
    const auto n_val = get<std::size_t>(ctx.cfg, "data", "n_val", 40);
    const auto rate = get<double>(ctx.cfg, "data", "lesion_rate", 0.5);
    require(n_train > 0 && n_val > 0, "data.n_train/n_val", "must be positive");
    require(rate >= 0.0 && rate <= 1.0, "data.lesion_rate", "must be in [0, 1]");
    const auto m = build_dataset(n_train, n_val, rate, spec, ctx.data_dir());
    std::cout << "dataset: " << m.train_ids.size() << " train, " << m.val_ids.size() << " val -> "
              << ctx.data_dir().string() << "\n";
}

void cmd_train(const Context& ctx) {
    if (ctx.mode != TrainMode::Standard)
        throw Error(ErrorKind::Config, kModule, "train only runs mode standard; use robust-train");
    const auto m = manifest(ctx);
    const auto train = examples(ctx, m, "train"), val = examples(ctx, m, "val");
    const auto t = train_config(ctx);
    const ReconModel init(architecture(ctx), ctx.seed("init"));
    const auto r = train_standard(init, train, val, t);
    save_training(ctx, r, t);
    std::cout << "trained " << ctx.tag() << ", best epoch " << r.best_epoch << "\n";
}

void cmd_robust_train(const Context& ctx) {
    if (ctx.mode == TrainMode::Standard)
        throw Error(ErrorKind::Config, kModule, "robust-train needs --mode fnaf or bbox");
    const auto m = manifest(ctx);
    const auto train = examples(ctx, m, "train"), val = examples(ctx, m, "val");
    const auto t = train_config(ctx);
    const auto init_from = get<std::string>(ctx.cfg, "robust", "init", "scratch");
    require(init_from == "scratch" || init_from == "standard", "robust.init", "must be 'scratch' or 'standard'");
    const ReconModel init = init_from == "standard" ? load_model(ctx, "standard")
                                                    : ReconModel(architecture(ctx), ctx.seed("init"));
    TrainConfig tr = t;
    tr.epochs = get<std::size_t>(ctx.cfg, "robust", "epochs", t.epochs);
    tr.learning_rate = get<double>(ctx.cfg, "robust", "learning_rate", t.learning_rate);
    require(tr.learning_rate > 0.0, "robust.learning_rate", "must be > 0");
    const auto a = robust_config(ctx, m.spec.size);
    ordered_json extra;
    extra["init"] = init_from;
    if (ctx.mode == TrainMode::Fnaf) {
        const auto r = train_fnaf(init, train, val, tr, a);
        extra["feature_pixels"] = {r.fell_back_to_fixed_size ? 10 : a.k_min, r.fell_back_to_fixed_size ? 10 : a.k_max};
        extra["fell_back_to_fixed_size"] = r.fell_back_to_fixed_size;
        save_training(ctx, r.train, tr, extra);
    } else {
        const auto r = train_bbox(init, train, val, tr, a);
        save_training(ctx, r, tr, extra);
    }
    std::cout << "trained " << ctx.tag() << "\n";
}

std::unique_ptr<ReconstructionModel> model_for(const Context& ctx, const std::string& mode_name) {
    if (mode_name == "zero-filled") return std::make_unique<ZeroFilledModel>();
    return std::make_unique<ReconModel>(load_model(ctx, mode_name));
}

/// Linear-interpolation quantile of `v` at `q` in [0, 1].
double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// When attack.gamma_quantile is set, gamma is that quantile of the zero-filled attack loss
/// on the train split. It depends only on data, masks and seeds, so every model shares it.
void calibrate_gamma(const Context& ctx, const DatasetManifest& m, AttackConfig& a) {
    const auto q = get<double>(ctx.cfg, "attack", "gamma_quantile", -1.0);
    if (q < 0.0) return;
    require(q > 0.0 && q < 1.0, "attack.gamma_quantile", "must lie in (0, 1)");
    const auto train = examples(ctx, m, "train");
    if (train.empty()) throw Error(ErrorKind::MissingData, kModule, "empty train split");
    const auto r = attack_suite(ZeroFilledModel{}, train, a);
    std::vector<double> losses;
    for (const auto& s : r.samples) losses.push_back(s.result.adv_loss);
    a.gamma = quantile(std::move(losses), q);
    require(a.gamma > 0.0, "attack.gamma_quantile", "gives a non-positive threshold");
}

void cmd_attack(const Context& ctx) {
    const auto m = manifest(ctx);
    const auto val = examples(ctx, m, "val");
    auto a = attack_config(ctx, m.spec.size);
    calibrate_gamma(ctx, m, a);
    const auto model = model_for(ctx, std::string(to_string(ctx.mode)));
    const auto r = attack_suite(*model, val, a);
    auto j = attack_report_json(r);
    ordered_json out;
    out["mode"] = std::string(to_string(ctx.mode));
    out["acceleration"] = ctx.af;
    out["n_candidates"] = a.n_candidates;
    out["feature_pixels"] = a.k_min;
    out["crop_side"] = a.crop_side;
    out["gamma"] = a.gamma;
    out["attack_rate"] = r.attack_rate;
    out["aggregate"] = j["aggregate"];
    out["samples"] = j["samples"];
    write_json(ctx.run / "attack" / (ctx.tag() + ".json"), out);

    // One illustrative triptych: x_adv, reconstruction, y_adv for the strongest attack.
    if (!r.samples.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < r.samples.size(); ++i)
            if (r.samples[i].result.adv_loss > r.samples[best].result.adv_loss) best = i;
        const auto pair = inject(val[best].target, r.samples[best].result.best_feature, val[best].mask);
        io::write_pgm_strip(ctx.run / "attack" / (ctx.tag() + "_example.pgm"),
                            {pair.x_adv, model->reconstruct(pair.x_adv), pair.y_adv});
    }
    std::cout << "attack rate " << ctx.tag() << ": " << r.attack_rate << "%\n";
}

void cmd_ip_verify(const Context& ctx) {
    const auto m = manifest(ctx);
    const auto val = examples(ctx, m, "val");
    if (val.empty()) throw Error(ErrorKind::MissingData, kModule, "empty validation split");
    const auto n = get<std::size_t>(ctx.cfg, "ip", "n_injections", 1000);
    IPConfig ip;
    ip.epsilon = get<double>(ctx.cfg, "ip", "epsilon", ip.epsilon);
    try {
        ip.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::Config, kModule, std::string("ip section: ") + e.what());
    }
    const auto a = attack_config(ctx, m.spec.size);
    const ZeroFilledModel zf;
    std::vector<IPRecord> records(n);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ex = val[i % val.size()];
        Rng rng(derive_seed(a.seed, "ip/" + std::to_string(i)));
        const auto f = sample_feature(a, ex.target.rows(), ex.target.cols(), max_value(ex.target), rng);
        const auto pair = inject(ex.target, f, ex.mask);
        const auto check = ip_check(ex.input, pair.x_adv, ip);
        records[i] = {ex.id + "#" + std::to_string(i), check.distance, adv_loss(zf, pair.x_adv, pair.y_adv, f, a),
                      check.accepted};
    }
    io::write_text(ctx.run / "ip" / ("af" + std::to_string(ctx.af) + ".csv"), ip_csv(records));
    ordered_json j;
    j["acceleration"] = ctx.af;
    j["epsilon"] = ip.epsilon;
    j["n_injections"] = n;
    j["acceptance_rate"] = acceptance_rate(records);
    write_json(ctx.run / "ip" / ("af" + std::to_string(ctx.af) + ".json"), j);
    std::cout << "acceptance rate af" << ctx.af << ": " << j["acceptance_rate"].get<double>() << "\n";
}

ordered_json global_metrics(const ReconstructionModel& model, std::span<const ReconExample> val) {
    std::vector<ImageMetrics> per(val.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < val.size(); ++i) per[i] = image_metrics(model.reconstruct(val[i].input), val[i].target);
    double nmse = 0, psnr = 0, ssim = 0;
    ordered_json samples = ordered_json::array();
    for (std::size_t i = 0; i < val.size(); ++i) {
        nmse += per[i].nmse;
        psnr += per[i].psnr;
        ssim += per[i].ssim;
        samples.push_back({{"id", val[i].id},
                           {"nmse", per[i].nmse},
                           {"psnr", number_or_null(per[i].psnr)},
                           {"ssim", per[i].ssim}});
    }
    const double k = static_cast<double>(val.size());
    return {{"nmse", nmse / k}, {"psnr", number_or_null(psnr / k)}, {"ssim", ssim / k}, {"samples", samples}};
}

void cmd_eval_global(const Context& ctx) {
    const auto m = manifest(ctx);
    const auto val = examples(ctx, m, "val");
    const auto model = model_for(ctx, std::string(to_string(ctx.mode)));
    ordered_json j;
    j["mode"] = std::string(to_string(ctx.mode));
    j["acceleration"] = ctx.af;
    j["model"] = global_metrics(*model, val);
    j["zero_filled"] = global_metrics(ZeroFilledModel{}, val);
    write_json(ctx.run / "eval" / ("global_" + ctx.tag() + ".json"), j);
    std::cout << "global NMSE " << ctx.tag() << ": " << j["model"]["nmse"].get<double>() << "\n";
}

ImageLookup recon_lookup(const ReconstructionModel& model, std::span<const ReconExample> data) {
    std::vector<Image2D> out(data.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = model.reconstruct(data[i].input);
    ImageLookup lookup;
    for (std::size_t i = 0; i < data.size(); ++i) lookup.emplace(SliceKey{data[i].id, 0}, std::move(out[i]));
    return lookup;
}

ImageLookup target_lookup(std::span<const ReconExample> data) {
    ImageLookup lookup;
    for (const auto& ex : data) lookup.emplace(SliceKey{ex.id, 0}, ex.target);
    return lookup;
}

AnnotationSet annotation_set(std::span<const ReconExample> data) {
    AnnotationSet s;
    for (const auto& ex : data)
        for (const auto& b : ex.boxes) s.add(b);
    return s;
}

void cmd_eval_regions(const Context& ctx) {
    const auto m = manifest(ctx);
    const auto val = examples(ctx, m, "val");
    const auto annset = annotation_set(val);
    if (annset.empty()) throw Error(ErrorKind::MissingData, kModule, "validation split has no annotated boxes");
    const auto targets = target_lookup(val);
    std::vector<std::string> methods{"zero-filled"};
    for (auto& mode : trained_modes(ctx)) methods.push_back(mode);
    std::vector<RegionTable> tables;
    for (const auto& method : methods)
        tables.push_back(region_nmse_table(recon_lookup(*model_for(ctx, method), val), targets, annset));
    const std::string stem = "regions_af" + std::to_string(ctx.af);
    io::write_text(ctx.run / "eval" / (stem + ".csv"), region_csv(methods, tables));

    ordered_json j;
    j["acceleration"] = ctx.af;
    j["n_boxes"] = annset.size();
    ordered_json per_method = ordered_json::object();
    for (std::size_t i = 0; i < methods.size(); ++i) {
        ordered_json labels = ordered_json::object();
        for (const auto& [label, mean] : tables[i].per_label_mean)
            labels[label] = {{"mean_nmse", mean}, {"count", tables[i].per_label_count.at(label)}};
        per_method[methods[i]] = {{"all", tables[i].all}, {"per_label", labels}};
    }
    j["methods"] = per_method;

    // Paired comparisons against the standard model.
    const auto find = [&](const std::string& name) -> const RegionTable* {
        for (std::size_t i = 0; i < methods.size(); ++i)
            if (methods[i] == name) return &tables[i];
        return nullptr;
    };
    ordered_json tests = ordered_json::object();
    ordered_json scatter = ordered_json::object();
    if (const auto* standard = find("standard")) {
        for (const char* other : {"fnaf", "bbox"}) {
            const auto* t = find(other);
            if (!t || t->per_box.size() < 3) continue;
            std::vector<double> a, b, improvement, area;
            for (std::size_t k = 0; k < t->per_box.size(); ++k) {
                a.push_back(t->per_box[k].nmse);
                b.push_back(standard->per_box[k].nmse);
                improvement.push_back(standard->per_box[k].nmse - t->per_box[k].nmse);
                area.push_back(static_cast<double>(t->per_box[k].box.area()));
            }
            const auto w = wilcoxon_rank_sum(a, b);
            ordered_json entry{{"mean_nmse", t->all},
                               {"standard_mean_nmse", standard->all},
                               {"wilcoxon_statistic", w.statistic},
                               {"wilcoxon_p", w.p_two_sided},
                               {"exact", w.exact}};
            try {
                entry["size_correlation"] = size_correlation(improvement, area);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::UndefinedCorrelation && e.kind() != ErrorKind::InvalidInput) throw;
                entry["size_correlation"] = nullptr;
            }
            tests[other] = entry;
            scatter[other] = {{"area", area}, {"improvement", improvement}};
        }
    }
    j["vs_standard"] = tests;
    j["size_scatter"] = scatter;
    write_json(ctx.run / "eval" / (stem + ".json"), j);
    std::cout << "region table af" << ctx.af << " over " << annset.size() << " boxes\n";
}

PatchSpec patch_spec(const Context& ctx) {
    PatchSpec p = PatchSpec::preset(get<int>(ctx.cfg, "patches", "size", 32), ctx.seed("patches"));
    p.stride = get<int>(ctx.cfg, "patches", "stride", p.stride);
    require(p.stride >= 1, "patches.stride", "must be >= 1");
    return p;
}

ClassifierConfig classifier_config(const Context& ctx) {
    ClassifierConfig c;
    c.max_epochs = get<std::size_t>(ctx.cfg, "classifier", "max_epochs", c.max_epochs);
    c.patience = get<std::size_t>(ctx.cfg, "classifier", "patience", c.patience);
    c.batch_size = get<std::size_t>(ctx.cfg, "classifier", "batch_size", c.batch_size);
    c.learning_rate = get<double>(ctx.cfg, "classifier", "learning_rate", c.learning_rate);
    c.momentum = get<double>(ctx.cfg, "classifier", "momentum", c.momentum);
    c.weight_decay = get<double>(ctx.cfg, "classifier", "weight_decay", c.weight_decay);
    c.seed = ctx.seed("classifier");
    try {
        c.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::Config, kModule, std::string("classifier section: ") + e.what());
    }
    return c;
}

ImageLookup split_lookup(const DatasetManifest& m, const std::string& split, AnnotationSet& annset) {
    ImageLookup lookup;
    for (auto& img : load_split(m, split)) {
        for (const auto& b : img.boxes) annset.add(b);
        lookup.emplace(SliceKey{img.id, 0}, std::move(img.target));
    }
    return lookup;
}

void cmd_patches(const Context& ctx) {
    const auto m = manifest(ctx);
    const auto spec = patch_spec(ctx);
    std::map<std::string, std::vector<PatchRef>> sets;
    std::map<std::string, ImageLookup> images;
    for (const std::string split : {"train", "val"}) {
        AnnotationSet annset;
        images[split] = split_lookup(m, split, annset);
        const auto all = extract_patches(images[split], annset, spec);
        sets[split] = balance_cap(all, derive_seed(spec.seed, split));
        io::write_text(ctx.run / "patches" / (split + ".jsonl"), format_patch_manifest(sets[split], spec.size));
    }
    const auto train = cut_patches(images["train"], sets["train"], spec.size);
    const auto val = cut_patches(images["val"], sets["val"], spec.size);
    const auto r = train_classifier(train, val, classifier_config(ctx));
    save_classifier(ctx.run / "patches" / "classifier.bin", r.model);
    std::ostringstream csv;
    csv << "epoch,train_loss,val_loss,val_auroc\n" << std::setprecision(10);
    for (const auto& e : r.history)
        csv << e.epoch << "," << e.train_loss << "," << e.val_loss << "," << e.val_auroc << "\n";
    io::write_text(ctx.run / "patches" / "classifier_history.csv", csv.str());
    ordered_json j;
    j["patch_size"] = spec.size;
    j["stride"] = spec.stride;
    j["train_patches"] = train.size();
    j["val_patches"] = val.size();
    j["best_epoch"] = r.best_epoch;
    j["val_auroc"] = r.best_epoch >= 0 ? r.history[static_cast<std::size_t>(r.best_epoch)].val_auroc : 0.5;
    write_json(ctx.run / "patches" / "classifier.json", j);
    std::cout << "classifier val AUROC " << j["val_auroc"].get<double>() << "\n";
}

void cmd_classify(const Context& ctx) {
    const auto m = manifest(ctx);
    const auto manifest_path = ctx.run / "patches" / "val.jsonl";
    if (!fs::exists(manifest_path)) throw Error(ErrorKind::MissingData, kModule, "no patch manifest; run patches first");
    const auto refs = parse_patch_manifest(io::read_text(manifest_path));
    const int size = get<int>(ctx.cfg, "patches", "size", 32);
    const auto model = load_classifier(ctx.run / "patches" / "classifier.bin");
    const auto val = examples(ctx, m, "val");

    std::vector<std::string> methods{"fully-sampled", "zero-filled"};
    for (auto& mode : trained_modes(ctx)) methods.push_back(mode);
    std::vector<MethodPatches> sets;
    for (const auto& method : methods) {
        const auto lookup =
            method == "fully-sampled" ? target_lookup(val) : recon_lookup(*model_for(ctx, method), val);
        sets.push_back({method, cut_patches(lookup, refs, size)});
    }
    const auto scores = classify_and_score(model, sets);
    ordered_json j;
    j["acceleration"] = ctx.af;
    j["patch_size"] = size;
    j["n_patches"] = refs.size();
    ordered_json rows = ordered_json::array();
    for (const auto& s : scores) rows.push_back(to_json(s));
    j["methods"] = rows;
    ordered_json paired = ordered_json::object();
    const auto find = [&](const std::string& name) -> const ClassificationScore* {
        for (const auto& s : scores)
            if (s.method == name) return &s;
        return nullptr;
    };
    if (const auto* standard = find("standard")) {
        for (const char* other : {"fnaf", "bbox"}) {
            const auto* s = find(other);
            if (!s) continue;
            const auto c = compare_false_negatives(*standard, *s);
            paired[other] = {{"fn_standard", standard->fn},
                             {"fn_" + std::string(other), s->fn},
                             {"fn_only_standard", c.only_a},
                             {"fn_only_" + std::string(other), c.only_b},
                             {"fn_both", c.both},
                             {"mcnemar_p", c.test.p},
                             {"mcnemar_exact", c.test.exact}};
        }
    }
    j["vs_standard"] = paired;
    write_json(ctx.run / "classify" / ("af" + std::to_string(ctx.af) + ".json"), j);
    std::cout << "classified " << refs.size() << " patches for " << methods.size() << " methods\n";
}

// Report ---------------------------------------------------------------------

std::string fmt(const json& v, int precision = 4) {
    if (v.is_null()) return "n/a";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_boolean()) return v.get<bool>() ? "yes" : "no";
    if (!v.is_number()) return v.dump();
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << v.get<double>();
    return s.str();
}

void cmd_report(const Context& ctx) {
    const fs::path out = ctx.run / "report";
    std::ostringstream md;
    md << "# FNAF desk run report\n\nRun directory: `" << ctx.run.filename().string() << "`, seed " << ctx.cfg.seed
       << "\n\n";
    const std::vector<std::string> modes{"standard", "fnaf", "bbox"};
    const std::vector<int> afs{4, 8};

    md << "## Attack rate (random search)\n\n| model | 4x rate % | 4x mean masked NMSE | 8x rate % | 8x mean masked NMSE |\n"
       << "|---|---|---|---|---|\n";
    std::ostringstream attack_csv;
    attack_csv << "mode,acceleration,attack_rate,mean_masked_nmse,mean_adv_loss\n";
    for (const auto& mode : modes) {
        md << "| " << mode;
        for (int af : afs) {
            const auto p = ctx.run / "attack" / (mode + "_af" + std::to_string(af) + ".json");
            if (!fs::exists(p)) {
                md << " | n/a | n/a";
                continue;
            }
            const auto j = read_json(p);
            md << " | " << fmt(j["attack_rate"], 1) << " | " << fmt(j["aggregate"]["mean_masked_nmse"]);
            attack_csv << mode << "," << af << "," << fmt(j["attack_rate"], 6) << ","
                       << fmt(j["aggregate"]["mean_masked_nmse"], 6) << "," << fmt(j["aggregate"]["mean_adv_loss"], 6)
                       << "\n";
            const auto pgm = ctx.run / "attack" / (mode + "_af" + std::to_string(af) + "_example.pgm");
            if (fs::exists(pgm)) {
                fs::create_directories(out);
                fs::copy_file(pgm, out / pgm.filename(), fs::copy_options::overwrite_existing);
            }
        }
        md << " |\n";
    }
    io::write_text(out / "attack.csv", attack_csv.str());

    md << "\n## Standard reconstruction quality\n\n| model | af | NMSE | PSNR | SSIM |\n|---|---|---|---|---|\n";
    for (int af : afs) {
        bool baseline_done = false;
        for (const auto& mode : modes) {
            const auto p = ctx.run / "eval" / ("global_" + mode + "_af" + std::to_string(af) + ".json");
            if (!fs::exists(p)) continue;
            const auto j = read_json(p);
            if (!baseline_done) {
                md << "| zero-filled | " << af << " | " << fmt(j["zero_filled"]["nmse"]) << " | "
                   << fmt(j["zero_filled"]["psnr"], 2) << " | " << fmt(j["zero_filled"]["ssim"]) << " |\n";
                baseline_done = true;
            }
            md << "| " << mode << " | " << af << " | " << fmt(j["model"]["nmse"]) << " | " << fmt(j["model"]["psnr"], 2)
               << " | " << fmt(j["model"]["ssim"]) << " |\n";
        }
    }

    md << "\n## Region NMSE over annotated boxes\n\n";
    for (int af : afs) {
        const auto p = ctx.run / "eval" / ("regions_af" + std::to_string(af) + ".json");
        if (!fs::exists(p)) continue;
        const auto j = read_json(p);
        md << "### " << af << "x (" << fmt(j["n_boxes"]) << " boxes)\n\n| method | mean box NMSE |\n|---|---|\n";
        for (const auto& [method, v] : j["methods"].items()) md << "| " << method << " | " << fmt(v["all"]) << " |\n";
        for (const auto& [other, t] : j["vs_standard"].items())
            md << "\n" << other << " vs standard: Wilcoxon p = " << fmt(t["wilcoxon_p"]) << ", Pearson r(improvement, area) = "
               << fmt(t["size_correlation"]) << "\n";
        md << "\n";
        const auto csv = ctx.run / "eval" / ("regions_af" + std::to_string(af) + ".csv");
        if (fs::exists(csv)) {
            fs::create_directories(out);
            fs::copy_file(csv, out / csv.filename(), fs::copy_options::overwrite_existing);
        }
        std::ostringstream scatter;
        scatter << "method,area,improvement\n" << std::setprecision(10);
        for (const auto& [other, s] : j["size_scatter"].items())
            for (std::size_t k = 0; k < s["area"].size(); ++k)
                scatter << other << "," << s["area"][k].get<double>() << "," << s["improvement"][k].get<double>() << "\n";
        io::write_text(out / ("size_scatter_af" + std::to_string(af) + ".csv"), scatter.str());
    }

    md << "## Abnormality classification on reconstructed patches\n\n";
    for (int af : afs) {
        const auto p = ctx.run / "classify" / ("af" + std::to_string(af) + ".json");
        if (!fs::exists(p)) continue;
        const auto j = read_json(p);
        md << "### " << af << "x (" << fmt(j["n_patches"]) << " patches)\n\n"
           << "| method | Sn | Sp | F1 | Kappa | AUROC | FN | mean p(abnormal) on FN |\n|---|---|---|---|---|---|---|---|\n";
        for (const auto& row : j["methods"])
            md << "| " << row["method"].get<std::string>() << " | " << fmt(row["sn"], 2) << " | " << fmt(row["sp"], 2)
               << " | " << fmt(row["f1"], 2) << " | " << fmt(row["kappa"], 3) << " | " << fmt(row["auroc"], 3) << " | "
               << fmt(row["fn"]) << " | " << fmt(row["mean_fn_abnormal_probability"], 3) << " |\n";
        for (const auto& [other, t] : j["vs_standard"].items())
            md << "\n" << other << " vs standard false negatives: McNemar p = " << fmt(t["mcnemar_p"]) << "\n";
        md << "\n";
    }

    for (int af : afs) {
        const auto p = ctx.run / "ip" / ("af" + std::to_string(af) + ".json");
        if (!fs::exists(p)) continue;
        const auto j = read_json(p);
        md << "Information preservation " << af << "x: acceptance " << fmt(j["acceptance_rate"]) << " over "
           << fmt(j["n_injections"]) << " injections\n\n";
    }
    io::write_text(out / "report.md", md.str());
    std::cout << "report -> " << (out / "report.md").string() << "\n";
}

} // namespace

int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Spec: return 1;
    case ErrorKind::Numeric:
    case ErrorKind::Divergence:
    case ErrorKind::UndefinedNmse:
    case ErrorKind::UndefinedCorrelation: return 3;
    default: return 2;
    }
}

ordered_json RunConfig::canonical() const {
    ordered_json j;
    j["seed"] = seed;
    // Sections sorted by key through json's std::map storage.
    j["sections"] = ordered_json::parse(sections.dump());
    return j;
}

fs::path RunConfig::run_dir() const { return out / ("run-" + hex16(splitmix64(fnv1a(canonical().dump())))); }

RunConfig parse_config(const std::string& text, std::optional<std::uint64_t> seed_override,
                       std::optional<fs::path> out_override) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, kModule, std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorKind::Config, kModule, "config must be a JSON object");
    RunConfig cfg;
    try {
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("out")) cfg.out = j.at("out").get<std::string>();
    } catch (const json::exception&) {
        throw Error(ErrorKind::Config, kModule, "config fields seed (u64) and out (string) have the wrong type");
    }
    for (auto& [k, v] : j.items()) {
        if (k == "seed" || k == "out") continue;
        if (!v.is_object()) throw Error(ErrorKind::Config, kModule, "config section '" + k + "' must be an object");
        cfg.sections[k] = v;
    }
    if (seed_override) cfg.seed = *seed_override;
    if (out_override) cfg.out = *out_override;
    return cfg;
}

RunConfig load_config(const fs::path& path, std::optional<std::uint64_t> seed_override,
                      std::optional<fs::path> out_override) {
    if (!fs::exists(path)) throw Error(ErrorKind::Config, kModule, "config file not found: " + path.string());
    return parse_config(io::read_text(path), seed_override, out_override);
}

int run(int argc, char** argv) {
    CLI::App app{"FNAF robustness pipeline for undersampled MRI reconstruction"};
    app.require_subcommand(1, 1);
    std::string config_path;
    std::uint64_t seed = 0;
    int af = 4;
    std::string mode = "standard";
    int jobs = 0;
    std::string out_dir;
    app.add_option("--config", config_path, "JSON run configuration")->required();
    auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
    app.add_option("--af", af, "acceleration factor")->check(CLI::IsMember({4, 8}));
    app.add_option("--mode", mode, "training mode")->check(CLI::IsMember({"standard", "fnaf", "bbox"}));
    app.add_option("--jobs", jobs, "cap on worker threads")->check(CLI::NonNegativeNumber);
    auto* out_opt = app.add_option("--out", out_dir, "root of run directories");

    using Handler = void (*)(const Context&);
    const std::vector<std::pair<std::string, Handler>> commands{
        {"gen-data", cmd_gen_data},       {"train", cmd_train},           {"robust-train", cmd_robust_train},
        {"attack", cmd_attack},           {"ip-verify", cmd_ip_verify},   {"eval-global", cmd_eval_global},
        {"eval-regions", cmd_eval_regions}, {"patches", cmd_patches},     {"classify", cmd_classify},
        {"report", cmd_report}};
    std::map<CLI::App*, Handler> handlers;
    for (const auto& [name, h] : commands) handlers[app.add_subcommand(name)] = h;
    app.fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    try {
        if (jobs > 0) omp_set_num_threads(jobs);
        Context ctx;
        ctx.cfg = load_config(config_path, *seed_opt ? std::optional<std::uint64_t>(seed) : std::nullopt,
                              *out_opt ? std::optional<fs::path>(out_dir) : std::nullopt);
        ctx.run = ctx.cfg.run_dir();
        ctx.af = af;
        ctx.mode = train_mode_from_string(mode);
        fs::create_directories(ctx.run);
        write_json(ctx.run / "config.json", ctx.cfg.canonical());
        for (auto* sub : app.get_subcommands()) handlers.at(sub)(ctx);
        return 0;
    } catch (const Error& e) {
        std::cerr << "error [" << e.module() << "/" << to_string(e.kind()) << "]: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error [io]: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace fnaf::cli
