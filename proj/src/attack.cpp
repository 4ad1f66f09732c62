#include "fnaf/attack.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "fnaf/rng.hpp"

namespace fnaf {

namespace {

constexpr const char* kModule = "fnaf";

struct CandidateEval {
    double loss = 0.0;
    double masked = 0.0;
};

CandidateEval evaluate_one(const ReconstructionModel& model, const Image2D& y, const SamplingMask& mask,
                           const Feature& f, const AttackConfig& cfg) {
    const auto pair = inject(y, f, mask);
    const Image2D recon = model.reconstruct(pair.x_adv);
    const auto region = feature_region(f, y.rows(), y.cols(), cfg.boundary_d);
    CandidateEval e;
    e.masked = masked_nmse(recon, pair.y_adv, region);
    e.loss = cfg.beta * e.masked;
    if (cfg.alpha != 0.0) e.loss += cfg.alpha * recon_loss_value(recon, pair.y_adv, cfg.loss);
    return e;
}

double round_half_up(double v) { return std::floor(v + 0.5); }

} // namespace

Feature Feature::moved_to(int new_row, int new_col) const {
    Feature f = *this;
    f.row = new_row;
    f.col = new_col;
    return f;
}

void AttackConfig::validate() const {
    if (k_min < 1 || k_max < k_min) throw Error(ErrorKind::Config, kModule, "pixel_count_range must satisfy 1 <= k_min <= k_max");
    if (!(gamma > 0.0)) throw Error(ErrorKind::Config, kModule, "gamma must be > 0");
    if (boundary_d < 0) throw Error(ErrorKind::Config, kModule, "boundary_d must be >= 0");
    if (n_candidates < 1) throw Error(ErrorKind::Config, kModule, "n_candidates must be >= 1");
    if (crop_side < 1) throw Error(ErrorKind::Config, kModule, "crop_side must be >= 1");
    if (k_max > crop_side * crop_side) throw Error(ErrorKind::Config, kModule, "k_max exceeds the crop area");
    if (!(fd_step > 0.0)) throw Error(ErrorKind::Config, kModule, "fd_step must be > 0");
    if (intensity_hi < intensity_lo) throw Error(ErrorKind::Config, kModule, "intensity range is inverted");
}

std::size_t scaled_crop_side(std::size_t image_side) {
    return static_cast<std::size_t>(std::lround(120.0 / 320.0 * static_cast<double>(image_side)));
}

AttackConfig AttackConfig::evaluation(std::size_t image_side, std::uint64_t seed) {
    AttackConfig c;
    c.crop_side = scaled_crop_side(image_side);
    c.seed = seed;
    return c;
}

AttackConfig AttackConfig::training(std::size_t image_side, std::uint64_t seed) {
    AttackConfig c = evaluation(image_side, seed);
    c.alpha = 1.0;
    c.beta = 10.0;
    return c;
}

CropRegion crop_region(const AttackConfig& cfg, std::size_t rows, std::size_t cols) {
    if (cfg.crop_side > rows || cfg.crop_side > cols)
        throw Error(ErrorKind::Config, kModule,
                    "crop side " + std::to_string(cfg.crop_side) + " larger than " + std::to_string(rows) + "x" +
                        std::to_string(cols) + " image");
    const int side = static_cast<int>(cfg.crop_side);
    return {static_cast<int>(rows - cfg.crop_side) / 2, static_cast<int>(cols - cfg.crop_side) / 2, side};
}

Feature sample_feature(const AttackConfig& cfg, std::size_t rows, std::size_t cols, double image_max, Rng& rng) {
    cfg.validate();
    const CropRegion crop = crop_region(cfg, rows, cols);
    Feature f;
    const auto k = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(cfg.k_min), static_cast<std::int64_t>(cfg.k_max)));
    f.row = crop.row0 + static_cast<int>(rng.uniform_int(0, crop.side - 1));
    f.col = crop.col0 + static_cast<int>(rng.uniform_int(0, crop.side - 1));
    f.pixels = grow_blob(k, rng, [&](int dr, int dc) { return crop.contains(f.row + dr, f.col + dc); });
    f.values.resize(f.pixels.size());
    for (auto& v : f.values) v = image_max * rng.uniform(cfg.intensity_lo, cfg.intensity_hi);
    return f;
}

Image2D feature_image(const Feature& f, std::size_t rows, std::size_t cols) {
    Image2D img(rows, cols);
    for (std::size_t i = 0; i < f.pixels.size(); ++i) {
        const int r = f.row + f.pixels[i].dr, c = f.col + f.pixels[i].dc;
        if (r < 0 || c < 0 || r >= static_cast<int>(rows) || c >= static_cast<int>(cols))
            throw Error(ErrorKind::Placement, kModule,
                        "feature pixel (" + std::to_string(r) + ", " + std::to_string(c) + ") outside image");
        img(r, c) += f.values[i];
    }
    return img;
}

InjectedPair inject(const Image2D& y, const Feature& f, const SamplingMask& mask) {
    if (f.values.size() != f.pixels.size()) throw Error(ErrorKind::InvalidInput, kModule, "feature values/pixels mismatch");
    const Image2D delta = feature_image(f, y.rows(), y.cols());
    InjectedPair out;
    out.y_adv = y;
    for (std::size_t i = 0; i < y.size(); ++i) out.y_adv[i] += delta[i];
    out.x_adv = undersample(out.y_adv, mask);
    return out;
}

RegionMask feature_region(const Feature& f, std::size_t rows, std::size_t cols, int d) {
    RegionMask m(rows, cols, 0);
    const int nr = static_cast<int>(rows), nc = static_cast<int>(cols);
    for (const auto& o : f.pixels) {
        const int r = f.row + o.dr, c = f.col + o.dc;
        for (int rr = std::max(0, r - d); rr <= std::min(nr - 1, r + d); ++rr)
            for (int cc = std::max(0, c - d); cc <= std::min(nc - 1, c + d); ++cc) m(rr, cc) = 1;
    }
    return m;
}

double adv_loss_of_recon(const Image2D& recon, const Image2D& y_adv, const Feature& f, const AttackConfig& cfg) {
    const auto region = feature_region(f, y_adv.rows(), y_adv.cols(), cfg.boundary_d);
    double loss = cfg.beta * masked_nmse(recon, y_adv, region);
    if (cfg.alpha != 0.0) loss += cfg.alpha * recon_loss_value(recon, y_adv, cfg.loss);
    return loss;
}

double adv_loss(const ReconstructionModel& model, const Image2D& x_adv, const Image2D& y_adv, const Feature& f,
                const AttackConfig& cfg) {
    require_same_shape(x_adv, y_adv, kModule);
    return adv_loss_of_recon(model.reconstruct(x_adv), y_adv, f, cfg);
}

std::vector<Feature> candidate_features(const Image2D& y, const AttackConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, "candidates"));
    const double image_max = max_value(y);
    std::vector<Feature> out;
    out.reserve(cfg.n_candidates);
    for (std::size_t i = 0; i < cfg.n_candidates; ++i) out.push_back(sample_feature(cfg, y.rows(), y.cols(), image_max, rng));
    return out;
}

std::vector<double> evaluate_candidates(const ReconstructionModel& model, const Image2D& y, const SamplingMask& mask,
                                        std::span<const Feature> candidates, const AttackConfig& cfg) {
    std::vector<double> losses(candidates.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < candidates.size(); ++i) losses[i] = evaluate_one(model, y, mask, candidates[i], cfg).loss;
    return losses;
}

AttackResult random_search_attack(const ReconstructionModel& model, const Image2D& y, const SamplingMask& mask,
                                  const AttackConfig& cfg) {
    const auto candidates = candidate_features(y, cfg);
    std::vector<CandidateEval> evals(candidates.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < candidates.size(); ++i) evals[i] = evaluate_one(model, y, mask, candidates[i], cfg);

    AttackResult res;
    res.candidate_losses.reserve(evals.size());
    for (const auto& e : evals) res.candidate_losses.push_back(e.loss);
    for (std::size_t i = 1; i < evals.size(); ++i)
        if (evals[i].loss > evals[res.best_index].loss) res.best_index = i;
    res.best_feature = candidates[res.best_index];
    res.adv_loss = evals[res.best_index].loss;
    res.masked_nmse = evals[res.best_index].masked;
    res.hit = res.adv_loss > cfg.gamma;
    return res;
}

Feature fd_location_ascent(const FeatureObjective& objective, const Feature& f0, const CropRegion& crop,
                           const AttackConfig& cfg, std::size_t steps) {
    if (steps == 0) return f0;
    if (f0.pixels.empty()) throw Error(ErrorKind::InvalidInput, kModule, "empty feature");
    int min_dr = 0, max_dr = 0, min_dc = 0, max_dc = 0;
    for (const auto& o : f0.pixels) {
        min_dr = std::min(min_dr, o.dr);
        max_dr = std::max(max_dr, o.dr);
        min_dc = std::min(min_dc, o.dc);
        max_dc = std::max(max_dc, o.dc);
    }
    // Anchor bounds keeping every pixel inside the crop.
    const double r_lo = crop.row0 - min_dr, r_hi = crop.row0 + crop.side - 1 - max_dr;
    const double c_lo = crop.col0 - min_dc, c_hi = crop.col0 + crop.side - 1 - max_dc;
    if (r_lo > r_hi || c_lo > c_hi) throw Error(ErrorKind::Placement, kModule, "feature larger than the crop");

    std::map<std::pair<int, int>, double> seen;
    auto eval_at = [&](double r, double c) {
        const int ri = static_cast<int>(std::clamp(round_half_up(r), r_lo, r_hi));
        const int ci = static_cast<int>(std::clamp(round_half_up(c), c_lo, c_hi));
        auto it = seen.find({ri, ci});
        if (it != seen.end()) return it->second;
        const double v = objective(f0.moved_to(ri, ci));
        seen.emplace(std::pair{ri, ci}, v);
        return v;
    };

    double r = f0.row, c = f0.col;
    Feature best = f0;
    double best_loss = objective(f0);
    seen.emplace(std::pair{f0.row, f0.col}, best_loss);
    const double h = cfg.fd_step;
    for (std::size_t s = 0; s < steps; ++s) {
        const double g_r = (eval_at(r + h, c) - eval_at(r - h, c)) / (2 * h);
        const double g_c = (eval_at(r, c + h) - eval_at(r, c - h)) / (2 * h);
        r = std::clamp(r + cfg.fd_learning_rate * g_r, r_lo, r_hi);
        c = std::clamp(c + cfg.fd_learning_rate * g_c, c_lo, c_hi);
        const double v = eval_at(r, c);
        if (v > best_loss) {
            best_loss = v;
            best = f0.moved_to(static_cast<int>(std::clamp(round_half_up(r), r_lo, r_hi)),
                               static_cast<int>(std::clamp(round_half_up(c), c_lo, c_hi)));
        }
    }
    return best;
}

Feature fd_location_ascent(const ReconstructionModel& model, const Image2D& y, const SamplingMask& mask,
                           const Feature& f0, const AttackConfig& cfg, std::size_t steps) {
    const CropRegion crop = crop_region(cfg, y.rows(), y.cols());
    return fd_location_ascent([&](const Feature& f) { return evaluate_one(model, y, mask, f, cfg).loss; }, f0, crop,
                              cfg, steps);
}

std::uint64_t sample_attack_seed(const AttackConfig& cfg, const std::string& id) {
    return derive_seed(cfg.seed, "attack/" + id);
}

AttackSuiteResult attack_suite(const ReconstructionModel& model, std::span<const ReconExample> data,
                               const AttackConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw Error(ErrorKind::InvalidInput, kModule, "empty attack dataset");
    AttackSuiteResult out;
    out.gamma = cfg.gamma;
    out.samples.resize(data.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < data.size(); ++i) {
        AttackConfig c = cfg;
        c.seed = sample_attack_seed(cfg, data[i].id);
        out.samples[i] = {data[i].id, random_search_attack(model, data[i].target, data[i].mask, c)};
    }
    std::size_t hits = 0;
    for (const auto& s : out.samples) {
        hits += s.result.hit ? 1 : 0;
        out.mean_masked_nmse += s.result.masked_nmse;
        out.mean_adv_loss += s.result.adv_loss;
    }
    const double n = static_cast<double>(out.samples.size());
    out.attack_rate = 100.0 * static_cast<double>(hits) / n;
    out.mean_masked_nmse /= n;
    out.mean_adv_loss /= n;
    return out;
}

nlohmann::ordered_json to_json(const Feature& f) {
    nlohmann::ordered_json j;
    j["p"] = {f.row, f.col};
    nlohmann::ordered_json pixels = nlohmann::ordered_json::array();
    for (const auto& o : f.pixels) pixels.push_back({o.dr, o.dc});
    j["pixels"] = pixels;
    j["values"] = f.values;
    return j;
}

nlohmann::ordered_json attack_report_json(const AttackSuiteResult& r) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json samples = nlohmann::ordered_json::array();
    std::vector<double> losses;
    for (const auto& s : r.samples) {
        losses.push_back(s.result.adv_loss);
        samples.push_back({{"id", s.id},
                           {"adv_loss", s.result.adv_loss},
                           {"masked_nmse", s.result.masked_nmse},
                           {"hit", s.result.hit},
                           {"feature", to_json(s.result.best_feature)}});
    }
    std::sort(losses.begin(), losses.end());
    auto quantile = [&](double q) {
        if (losses.empty()) return 0.0;
        const auto idx = static_cast<std::size_t>(std::lround(q * static_cast<double>(losses.size() - 1)));
        return losses[idx];
    };
    j["samples"] = samples;
    j["aggregate"] = {{"attack_rate", r.attack_rate},
                      {"mean_masked_nmse", r.mean_masked_nmse},
                      {"mean_adv_loss", r.mean_adv_loss},
                      {"gamma", r.gamma},
                      {"n", r.samples.size()},
                      {"loss_quantiles",
                       {{"min", quantile(0.0)}, {"q25", quantile(0.25)}, {"median", quantile(0.5)},
                        {"q75", quantile(0.75)}, {"max", quantile(1.0)}}}};
    return j;
}

} // namespace fnaf
