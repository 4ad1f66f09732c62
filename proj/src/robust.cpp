#include "fnaf/robust.hpp"

#include <cmath>
#include <numeric>

#include "fnaf/rng.hpp"

namespace fnaf {

namespace {

constexpr const char* kModule = "robust";

struct SampleTerms {
    double clean = 0.0;
    double adv_total = 0.0;
    double adv_term = 0.0;
    bool has_adv = false;
};

/// Accumulates one sample's mixed gradient into `grad` with weight `w` and returns its terms.
SampleTerms sample_grad(const ReconModel& model, const ReconExample& ex, const Image2D* x_adv, const Image2D* y_adv,
                        const RegionMask* region, const AttackConfig& cfg, std::span<double> grad, double w) {
    SampleTerms t;
    const bool adversarial = region != nullptr;
    const double clean_weight = adversarial ? 0.5 * w : w;
    t.clean = model.value_and_grad(
        ex.input, [&](const Image2D& out) { return recon_loss(out, ex.target, cfg.loss); }, grad, clean_weight);
    if (!adversarial) return t;
    t.has_adv = true;
    t.adv_total = model.value_and_grad(
        *x_adv,
        [&](const Image2D& out) {
            OutputLoss total{0.0, Image2D(out.rows(), out.cols())};
            if (cfg.alpha != 0.0) {
                const auto l = recon_loss(out, *y_adv, cfg.loss);
                total.value += cfg.alpha * l.value;
                for (std::size_t i = 0; i < out.size(); ++i) total.grad[i] += cfg.alpha * l.grad[i];
            }
            if (cfg.beta != 0.0) {
                Image2D g;
                const double m = masked_nmse_with_grad(out, *y_adv, *region, g);
                t.adv_term = cfg.beta * m;
                total.value += cfg.beta * m;
                for (std::size_t i = 0; i < out.size(); ++i) total.grad[i] += cfg.beta * g[i];
            }
            return total;
        },
        grad, 0.5 * w);
    return t;
}

RobustStepResult reduce(std::vector<std::vector<double>>& grads, const std::vector<SampleTerms>& terms,
                        std::size_t param_count) {
    RobustStepResult res;
    res.grad.assign(param_count, 0.0);
    const double w = 1.0 / static_cast<double>(terms.size());
    for (std::size_t i = 0; i < terms.size(); ++i) {
        for (std::size_t k = 0; k < param_count; ++k) res.grad[k] += grads[i][k];
        const auto& t = terms[i];
        res.standard_loss += w * t.clean;
        res.adv_term += w * t.adv_term;
        res.loss += w * (t.has_adv ? 0.5 * (t.clean + t.adv_total) : t.clean);
    }
    return res;
}

} // namespace

std::string_view to_string(TrainMode mode) {
    switch (mode) {
    case TrainMode::Standard: return "standard";
    case TrainMode::Fnaf: return "fnaf";
    case TrainMode::Bbox: return "bbox";
    }
    return "standard";
}

TrainMode train_mode_from_string(std::string_view s) {
    if (s == "standard") return TrainMode::Standard;
    if (s == "fnaf") return TrainMode::Fnaf;
    if (s == "bbox") return TrainMode::Bbox;
    throw Error(ErrorKind::Config, kModule, "unknown mode '" + std::string(s) + "'");
}

RobustStepResult robust_grad_with_features(const ReconModel& model, std::span<const ReconExample> batch,
                                           std::span<const Feature> features, const AttackConfig& cfg) {
    if (batch.empty()) throw Error(ErrorKind::InvalidInput, kModule, "empty batch");
    if (features.size() != batch.size()) throw Error(ErrorKind::InvalidInput, kModule, "one feature per sample required");
    const std::size_t n = batch.size(), p = model.parameter_count();
    std::vector<std::vector<double>> grads(n, std::vector<double>(p, 0.0));
    std::vector<SampleTerms> terms(n);
    const double w = 1.0 / static_cast<double>(n);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ex = batch[i];
        const auto pair = inject(ex.target, features[i], ex.mask);
        const auto region = feature_region(features[i], ex.target.rows(), ex.target.cols(), cfg.boundary_d);
        terms[i] = sample_grad(model, ex, &pair.x_adv, &pair.y_adv, &region, cfg, grads[i], w);
    }
    auto res = reduce(grads, terms, p);
    res.features.assign(features.begin(), features.end());
    return res;
}

RobustStepResult robust_step(const ReconModel& model, std::span<const ReconExample> batch, const AttackConfig& cfg,
                             std::size_t step_index) {
    if (batch.empty()) throw Error(ErrorKind::InvalidInput, kModule, "empty batch");
    std::vector<Feature> features(batch.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < batch.size(); ++i) {
        AttackConfig c = cfg;
        c.seed = derive_seed(derive_seed(cfg.seed, step_index), "robust/" + batch[i].id);
        if (c.n_candidates == 1) {
            features[i] = candidate_features(batch[i].target, c).front();
        } else {
            features[i] = random_search_attack(model, batch[i].target, batch[i].mask, c).best_feature;
        }
    }
    return robust_grad_with_features(model, batch, features, cfg);
}

RobustStepResult bbox_robust_step(const ReconModel& model, std::span<const ReconExample> batch,
                                  const AttackConfig& cfg) {
    if (batch.empty()) throw Error(ErrorKind::InvalidInput, kModule, "empty batch");
    const std::size_t n = batch.size(), p = model.parameter_count();
    std::vector<std::vector<double>> grads(n, std::vector<double>(p, 0.0));
    std::vector<SampleTerms> terms(n);
    const double w = 1.0 / static_cast<double>(n);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ex = batch[i];
        if (ex.boxes.empty()) {
            terms[i] = sample_grad(model, ex, nullptr, nullptr, nullptr, cfg, grads[i], w);
            continue;
        }
        const auto region = box_union_mask(ex.boxes, ex.target.rows(), ex.target.cols());
        terms[i] = sample_grad(model, ex, &ex.input, &ex.target, &region, cfg, grads[i], w);
    }
    return reduce(grads, terms, p);
}

AttackConfig fnaf_training_config(std::size_t image_side, std::uint64_t seed, std::size_t n_candidates) {
    AttackConfig c = AttackConfig::training(image_side, seed);
    const double area_ratio = static_cast<double>(image_side * image_side) / (320.0 * 320.0);
    c.k_min = 10;
    c.k_max = std::max<std::size_t>(10, static_cast<std::size_t>(std::lround(1000.0 * area_ratio)));
    c.n_candidates = n_candidates;
    return c;
}

double validation_adv_loss(const ReconstructionModel& model, std::span<const ReconExample> val,
                           const AttackConfig& eval_cfg) {
    if (val.empty()) throw Error(ErrorKind::InvalidInput, kModule, "empty validation set");
    std::vector<double> losses(val.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < val.size(); ++i) {
        AttackConfig c = eval_cfg;
        c.n_candidates = 1;
        c.seed = derive_seed(eval_cfg.seed, "val-adv/" + val[i].id);
        losses[i] = random_search_attack(model, val[i].target, val[i].mask, c).adv_loss;
    }
    return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

RobustTrainResult train_fnaf(const ReconModel& init, std::span<const ReconExample> train,
                             std::span<const ReconExample> val, const TrainConfig& tcfg, const AttackConfig& acfg) {
    AttackConfig eval_cfg = AttackConfig::evaluation(val.empty() ? 0 : val.front().target.rows(), derive_seed(acfg.seed, "val"));
    eval_cfg.loss = tcfg.loss;
    auto run = [&](const AttackConfig& a) {
        AttackConfig step_cfg = a;
        step_cfg.loss = tcfg.loss;
        return train_loop(
            init, train, val, tcfg,
            [step_cfg](const ReconModel& m, std::span<const ReconExample> batch, std::size_t step,
                       std::vector<double>& grad) {
                auto r = robust_step(m, batch, step_cfg, step);
                grad = std::move(r.grad);
                return r.loss;
            },
            [&](const ReconModel& m, std::size_t) { return validation_adv_loss(m, val, eval_cfg); });
    };
    RobustTrainResult out;
    try {
        out.train = run(acfg);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Divergence || (acfg.k_min == 10 && acfg.k_max == 10)) throw;
        AttackConfig fixed = acfg;
        fixed.k_min = fixed.k_max = 10;
        out.train = run(fixed);
        out.fell_back_to_fixed_size = true;
    }
    return out;
}

TrainResult train_bbox(const ReconModel& init, std::span<const ReconExample> train, std::span<const ReconExample> val,
                       const TrainConfig& tcfg, const AttackConfig& acfg) {
    AttackConfig step_cfg = acfg;
    step_cfg.loss = tcfg.loss;
    return train_loop(init, train, val, tcfg,
                      [step_cfg](const ReconModel& m, std::span<const ReconExample> batch, std::size_t,
                                 std::vector<double>& grad) {
                          auto r = bbox_robust_step(m, batch, step_cfg);
                          grad = std::move(r.grad);
                          return r.loss;
                      });
}

} // namespace fnaf
