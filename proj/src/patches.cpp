#include "fnaf/patches.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fnaf/kernels.hpp"
#include "fnaf/rng.hpp"

namespace fnaf {

using kernels::ConvShape;
using kernels::Tensor;

namespace {

constexpr const char* kModule = "patches";

constexpr std::size_t kW1 = PatchClassifier::kC1 * 9;
constexpr std::size_t kB1 = kW1;
constexpr std::size_t kW2 = kB1 + PatchClassifier::kC1;
constexpr std::size_t kB2 = kW2 + PatchClassifier::kC2 * PatchClassifier::kC1 * 9;
constexpr std::size_t kWf = kB2 + PatchClassifier::kC2;
constexpr std::size_t kBf = kWf + 2 * PatchClassifier::kC2;
constexpr std::size_t kParamCount = kBf + 2;

struct Activations {
    Tensor input, a1, p1, a2, p2;
    std::vector<std::uint32_t> arg1, arg2;
    double pooled[PatchClassifier::kC2] = {};
    double prob[2] = {};
};

void forward(std::span<const double> p, const Image2D& patch, double mean, double scale, Activations& act) {
    const int h = static_cast<int>(patch.rows()), w = static_cast<int>(patch.cols());
    act.input = Tensor(1, h, w);
    std::transform(patch.data().begin(), patch.data().end(), act.input.v.begin(),
                   [&](double v) { return (v - mean) * scale; });
    act.a1 = Tensor(PatchClassifier::kC1, h, w);
    kernels::parallel::conv2d_forward({1, PatchClassifier::kC1, 3, h, w}, act.input.v, p.subspan(0, kW1),
                                      p.subspan(kB1, PatchClassifier::kC1), act.a1.v);
    kernels::relu_inplace(act.a1);
    act.p1 = kernels::max_pool2(act.a1, act.arg1);
    act.a2 = Tensor(PatchClassifier::kC2, act.p1.h, act.p1.w);
    kernels::parallel::conv2d_forward({PatchClassifier::kC1, PatchClassifier::kC2, 3, act.p1.h, act.p1.w}, act.p1.v,
                                      p.subspan(kW2, kB2 - kW2), p.subspan(kB2, PatchClassifier::kC2), act.a2.v);
    kernels::relu_inplace(act.a2);
    act.p2 = kernels::max_pool2(act.a2, act.arg2);
    const double inv = 1.0 / static_cast<double>(act.p2.plane());
    for (int c = 0; c < PatchClassifier::kC2; ++c) {
        const double* ch = act.p2.channel(c);
        double s = 0.0;
        for (std::size_t i = 0; i < act.p2.plane(); ++i) s += ch[i];
        act.pooled[c] = s * inv;
    }
    double logit[2];
    for (int k = 0; k < 2; ++k) {
        double z = p[kBf + k];
        for (int c = 0; c < PatchClassifier::kC2; ++c) z += p[kWf + k * PatchClassifier::kC2 + c] * act.pooled[c];
        logit[k] = z;
    }
    const double m = std::max(logit[0], logit[1]);
    const double e0 = std::exp(logit[0] - m), e1 = std::exp(logit[1] - m);
    act.prob[0] = e0 / (e0 + e1);
    act.prob[1] = e1 / (e0 + e1);
    if (!std::isfinite(act.prob[1])) throw Error(ErrorKind::Numeric, kModule, "non-finite classifier output");
}

void require_patch(const Image2D& patch) {
    if (patch.rows() < 4 || patch.cols() < 4) throw Error(ErrorKind::InvalidInput, kModule, "patch too small");
}

} // namespace

PatchSpec PatchSpec::preset(int size, std::uint64_t seed) {
    if (size == 32) return {32, 2, seed};
    if (size == 64) return {64, 8, seed};
    throw Error(ErrorKind::Spec, kModule, "patch size must be 32 or 64, got " + std::to_string(size));
}

void PatchSpec::validate() const {
    if (size < 2) throw Error(ErrorKind::Spec, kModule, "patch size must be at least 2");
    if (stride < 1) throw Error(ErrorKind::Spec, kModule, "stride must be >= 1");
}

std::size_t patches_per_axis(std::size_t side, const PatchSpec& spec) {
    spec.validate();
    if (static_cast<std::size_t>(spec.size) > side)
        throw Error(ErrorKind::Spec, kModule, "patch size " + std::to_string(spec.size) + " exceeds image side " +
                                                  std::to_string(side));
    return (side - static_cast<std::size_t>(spec.size)) / static_cast<std::size_t>(spec.stride) + 1;
}

std::string_view to_string(PatchLabel label) { return label == PatchLabel::Abnormal ? "abnormal" : "normal"; }

std::vector<PatchRef> extract_patches(const ImageLookup& images, const AnnotationSet& annset, const PatchSpec& spec) {
    spec.validate();
    std::vector<PatchRef> out;
    for (const auto& [key, img] : images) {
        const std::size_t nr = patches_per_axis(img.rows(), spec), nc = patches_per_axis(img.cols(), spec);
        const auto boxes = annset.boxes_for(key);
        out.reserve(out.size() + nr * nc);
        for (std::size_t i = 0; i < nr; ++i)
            for (std::size_t j = 0; j < nc; ++j) {
                const int r = static_cast<int>(i) * spec.stride, c = static_cast<int>(j) * spec.stride;
                const bool abnormal = std::any_of(boxes.begin(), boxes.end(), [&](const BoundingBox& b) {
                    return b.overlaps(r, c, spec.size, spec.size);
                });
                out.push_back({{key.first, key.second, r, c}, abnormal ? PatchLabel::Abnormal : PatchLabel::Normal});
            }
    }
    return out;
}

std::vector<PatchRef> balance_cap(std::span<const PatchRef> stream, std::uint64_t seed) {
    std::vector<std::size_t> normals;
    std::size_t abnormal = 0;
    for (std::size_t i = 0; i < stream.size(); ++i) {
        if (stream[i].label == PatchLabel::Abnormal)
            ++abnormal;
        else
            normals.push_back(i);
    }
    if (abnormal == 0) throw Error(ErrorKind::Balance, kModule, "no abnormal patches to balance against");
    std::vector<char> keep(stream.size(), 0);
    for (std::size_t i = 0; i < stream.size(); ++i) keep[i] = stream[i].label == PatchLabel::Abnormal;
    const std::size_t take = std::min(abnormal, normals.size());
    Rng rng(derive_seed(seed, "balance"));
    // Partial Fisher-Yates: the first `take` entries become a uniform subset.
    for (std::size_t i = 0; i < take; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<long long>(i),
                                                                static_cast<long long>(normals.size() - 1)));
        std::swap(normals[i], normals[j]);
        keep[normals[i]] = 1;
    }
    std::vector<PatchRef> out;
    out.reserve(abnormal + take);
    for (std::size_t i = 0; i < stream.size(); ++i)
        if (keep[i]) out.push_back(stream[i]);
    return out;
}

LabeledPatch cut_patch(const ImageLookup& images, const PatchRef& ref, int size) {
    const auto it = images.find({ref.source.volume_id, ref.source.slice});
    if (it == images.end())
        throw Error(ErrorKind::MissingData, kModule,
                    "no image for " + ref.source.volume_id + " slice " + std::to_string(ref.source.slice));
    const Image2D& img = it->second;
    if (ref.source.row < 0 || ref.source.col < 0 || ref.source.row + size > static_cast<int>(img.rows()) ||
        ref.source.col + size > static_cast<int>(img.cols()))
        throw Error(ErrorKind::Alignment, kModule, "patch outside image " + ref.source.volume_id);
    LabeledPatch p{ref.source, Image2D(size, size), ref.label};
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) p.pixels(r, c) = img(ref.source.row + r, ref.source.col + c);
    return p;
}

std::vector<LabeledPatch> cut_patches(const ImageLookup& images, std::span<const PatchRef> refs, int size) {
    std::vector<LabeledPatch> out;
    out.reserve(refs.size());
    for (const auto& r : refs) out.push_back(cut_patch(images, r, size));
    return out;
}

// Classifier ----------------------------------------------------------------

PatchClassifier::PatchClassifier(std::uint64_t seed) : params_(kParamCount, 0.0) {
    Rng rng(derive_seed(seed, "classifier"));
    const double s1 = std::sqrt(2.0 / 9.0), s2 = std::sqrt(2.0 / (9.0 * kC1));
    for (std::size_t i = 0; i < kW1; ++i) params_[i] = s1 * rng.normal();
    for (std::size_t i = kW2; i < kB2; ++i) params_[i] = s2 * rng.normal();
}

void PatchClassifier::set_input_normalization(double mean, double std) {
    if (!std::isfinite(mean) || !(std > 0.0) || !std::isfinite(std))
        throw Error(ErrorKind::InvalidInput, kModule, "input normalization needs a finite mean and a positive std");
    input_mean_ = mean;
    input_std_ = std;
}

std::vector<std::pair<std::size_t, std::size_t>> PatchClassifier::layer_ranges() const {
    return {{0, kW2}, {kW2, kWf - kW2}, {kWf, kParamCount - kWf}};
}

double PatchClassifier::abnormal_probability(const Image2D& patch) const {
    require_patch(patch);
    Activations act;
    forward(params_, patch, input_mean_, 1.0 / input_std_, act);
    return act.prob[1];
}

double PatchClassifier::value_and_grad(const Image2D& patch, PatchLabel label, std::span<double> grad,
                                       double weight) const {
    require_patch(patch);
    if (grad.size() != params_.size()) throw Error(ErrorKind::InvalidInput, kModule, "gradient size mismatch");
    Activations act;
    forward(params_, patch, input_mean_, 1.0 / input_std_, act);
    const int y = label == PatchLabel::Abnormal ? 1 : 0;
    const double loss = -std::log(std::max(act.prob[y], 1e-300));

    double dlogit[2] = {act.prob[0] - (y == 0), act.prob[1] - (y == 1)};
    double dpooled[kC2] = {};
    for (int k = 0; k < 2; ++k) {
        grad[kBf + k] += weight * dlogit[k];
        for (int c = 0; c < kC2; ++c) {
            grad[kWf + k * kC2 + c] += weight * dlogit[k] * act.pooled[c];
            dpooled[c] += dlogit[k] * params_[kWf + k * kC2 + c];
        }
    }
    Tensor gp2(kC2, act.p2.h, act.p2.w);
    const double inv = 1.0 / static_cast<double>(act.p2.plane());
    for (int c = 0; c < kC2; ++c) std::fill_n(gp2.channel(c), gp2.plane(), weight * dpooled[c] * inv);
    Tensor g2 = kernels::max_pool2_backward(gp2, act.arg2, act.a2.h, act.a2.w);
    kernels::relu_backward(act.a2, g2);
    Tensor gp1(kC1, act.p1.h, act.p1.w);
    const std::span<const double> p(params_);
    kernels::parallel::conv2d_backward({kC1, kC2, 3, act.p1.h, act.p1.w}, act.p1.v, p.subspan(kW2, kB2 - kW2), g2.v,
                                       gp1.v, grad.subspan(kW2, kB2 - kW2), grad.subspan(kB2, kC2));
    Tensor g1 = kernels::max_pool2_backward(gp1, act.arg1, act.a1.h, act.a1.w);
    kernels::relu_backward(act.a1, g1);
    kernels::parallel::conv2d_backward({1, kC1, 3, act.input.h, act.input.w}, act.input.v, p.subspan(0, kW1), g1.v,
                                       {}, grad.subspan(0, kW1), grad.subspan(kB1, kC1));
    return loss;
}

void ClassifierConfig::validate() const {
    if (batch_size == 0) throw Error(ErrorKind::Config, kModule, "batch_size must be positive");
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::Config, kModule, "learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw Error(ErrorKind::Config, kModule, "momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw Error(ErrorKind::Config, kModule, "weight_decay must be >= 0");
}

std::vector<double> predict(const PatchClassifier& model, std::span<const LabeledPatch> patches) {
    std::vector<double> out(patches.size());
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < patches.size(); ++i) out[i] = model.abnormal_probability(patches[i].pixels);
    return out;
}

namespace {

std::vector<PatchLabel> labels_of(std::span<const LabeledPatch> patches) {
    std::vector<PatchLabel> out(patches.size());
    std::transform(patches.begin(), patches.end(), out.begin(), [](const LabeledPatch& p) { return p.label; });
    return out;
}

double mean_cross_entropy(const PatchClassifier& model, std::span<const LabeledPatch> patches) {
    const auto probs = predict(model, patches);
    double s = 0.0;
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const double q = patches[i].label == PatchLabel::Abnormal ? probs[i] : 1.0 - probs[i];
        s += -std::log(std::max(q, 1e-300));
    }
    return s / static_cast<double>(patches.size());
}

} // namespace

ClassifierTrainResult train_classifier(std::span<const LabeledPatch> train, std::span<const LabeledPatch> val,
                                       const ClassifierConfig& cfg) {
    cfg.validate();
    if (train.empty() || val.empty()) throw Error(ErrorKind::InvalidInput, kModule, "empty training or validation set");
    PatchClassifier model(cfg.seed);
    double sum = 0.0, sq = 0.0, count = 0.0;
    for (const auto& p : train)
        for (double v : p.pixels.data()) {
            sum += v;
            sq += v * v;
            count += 1.0;
        }
    const double mean = sum / count;
    model.set_input_normalization(mean, std::sqrt(std::max(sq / count - mean * mean, 1e-24)));
    ClassifierTrainResult res{model, {}, -1};
    if (cfg.max_epochs == 0) return res;

    const auto val_labels = labels_of(val);
    const double initial_val = mean_cross_entropy(model, val);
    const double limit = 1e3 * std::max(initial_val, 1e-12);
    std::vector<double> velocity(model.parameter_count(), 0.0);
    std::vector<std::size_t> order(train.size());
    double best_auroc = -1.0;
    std::size_t since_best = 0;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.seed, "classifier-epoch/" + std::to_string(epoch)));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<long long>(i - 1)))]);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - start);
            std::vector<std::vector<double>> grads(n, std::vector<double>(model.parameter_count(), 0.0));
            std::vector<double> losses(n);
            const double w = 1.0 / static_cast<double>(n);
#pragma omp parallel for schedule(static)
            for (std::size_t b = 0; b < n; ++b) {
                const auto& p = train[order[start + b]];
                losses[b] = model.value_and_grad(p.pixels, p.label, grads[b], w);
            }
            auto params = model.parameters();
            for (std::size_t k = 0; k < params.size(); ++k) {
                double g = cfg.weight_decay * params[k];
                for (std::size_t b = 0; b < n; ++b) g += grads[b][k];
                velocity[k] = cfg.momentum * velocity[k] + g;
                params[k] -= cfg.learning_rate * velocity[k];
            }
            for (double l : losses) epoch_loss += l;
        }
        epoch_loss /= static_cast<double>(train.size());
        const double val_loss = mean_cross_entropy(model, val);
        if (!std::isfinite(epoch_loss) || !std::isfinite(val_loss) || val_loss > limit)
            throw Error(ErrorKind::Divergence, kModule, "classifier diverged at epoch " + std::to_string(epoch));
        const double a = auroc(predict(model, val), val_labels);
        res.history.push_back({epoch, epoch_loss, val_loss, a});
        if (a > best_auroc) {
            best_auroc = a;
            res.model = model;
            res.best_epoch = static_cast<long>(epoch);
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    return res;
}

double auroc(std::span<const double> scores, std::span<const PatchLabel> labels) {
    if (scores.size() != labels.size()) throw Error(ErrorKind::InvalidInput, kModule, "scores and labels differ in length");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos = 0, neg = 0, rank_sum = 0.0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (labels[idx[k]] == PatchLabel::Abnormal) rank_sum += midrank;
        i = j;
    }
    for (auto l : labels) (l == PatchLabel::Abnormal ? pos : neg) += 1.0;
    if (pos == 0 || neg == 0) throw Error(ErrorKind::InvalidInput, kModule, "AUROC needs both classes");
    return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

ClassificationScore score_predictions(const std::string& method, std::span<const double> probabilities,
                                      std::span<const PatchLabel> labels) {
    if (probabilities.size() != labels.size())
        throw Error(ErrorKind::InvalidInput, kModule, "probabilities and labels differ in length");
    ClassificationScore s;
    s.method = method;
    double fn_prob = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool predicted = probabilities[i] >= 0.5;
        const bool actual = labels[i] == PatchLabel::Abnormal;
        if (predicted && actual) ++s.tp;
        else if (!predicted && !actual) ++s.tn;
        else if (predicted) ++s.fp;
        else {
            ++s.fn;
            s.false_negatives.push_back(i);
            fn_prob += probabilities[i];
        }
    }
    const double tp = s.tp, tn = s.tn, fp = s.fp, fn = s.fn, n = tp + tn + fp + fn;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.sensitivity = tp + fn > 0 ? 100.0 * tp / (tp + fn) : nan;
    s.specificity = tn + fp > 0 ? 100.0 * tn / (tn + fp) : nan;
    s.f1 = 2 * tp + fp + fn > 0 ? 100.0 * 2 * tp / (2 * tp + fp + fn) : nan;
    const double po = (tp + tn) / n;
    const double pe = ((tp + fp) * (tp + fn) + (tn + fn) * (tn + fp)) / (n * n);
    s.kappa = pe < 1.0 ? (po - pe) / (1.0 - pe) : (po == 1.0 ? 1.0 : 0.0);
    s.auroc = auroc(probabilities, labels);
    if (s.fn > 0) s.mean_fn_probability = fn_prob / fn;
    return s;
}

std::vector<ClassificationScore> classify_and_score(const PatchClassifier& model, std::span<const MethodPatches> sets) {
    if (sets.empty()) return {};
    const auto& ref = sets.front().patches;
    for (const auto& s : sets) {
        if (s.patches.size() != ref.size())
            throw Error(ErrorKind::Alignment, kModule, "method '" + s.method + "' has a different patch count");
        for (std::size_t i = 0; i < ref.size(); ++i)
            if (s.patches[i].source != ref[i].source || s.patches[i].label != ref[i].label)
                throw Error(ErrorKind::Alignment, kModule,
                            "method '" + s.method + "' patch " + std::to_string(i) + " does not match coordinates");
    }
    const auto labels = labels_of(ref);
    std::vector<ClassificationScore> out;
    for (const auto& s : sets) out.push_back(score_predictions(s.method, predict(model, s.patches), labels));
    return out;
}

PairedFalseNegatives compare_false_negatives(const ClassificationScore& a, const ClassificationScore& b) {
    PairedFalseNegatives r;
    std::vector<std::size_t> both;
    std::set_intersection(a.false_negatives.begin(), a.false_negatives.end(), b.false_negatives.begin(),
                          b.false_negatives.end(), std::back_inserter(both));
    r.both = static_cast<long>(both.size());
    r.only_a = static_cast<long>(a.false_negatives.size()) - r.both;
    r.only_b = static_cast<long>(b.false_negatives.size()) - r.both;
    r.test = mcnemar(r.only_a, r.only_b);
    return r;
}

namespace {
nlohmann::ordered_json number_or_null(double v) {
    return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}
} // namespace

nlohmann::ordered_json to_json(const ClassificationScore& s) {
    nlohmann::ordered_json j;
    j["method"] = s.method;
    j["sn"] = number_or_null(s.sensitivity);
    j["sp"] = number_or_null(s.specificity);
    j["f1"] = number_or_null(s.f1);
    j["kappa"] = number_or_null(s.kappa);
    j["auroc"] = number_or_null(s.auroc);
    j["tp"] = s.tp;
    j["tn"] = s.tn;
    j["fp"] = s.fp;
    j["fn"] = s.fn;
    j["mean_fn_abnormal_probability"] = number_or_null(s.mean_fn_probability);
    j["false_negatives"] = s.false_negatives;
    return j;
}

nlohmann::ordered_json to_json(const PatchRef& ref, int size) {
    nlohmann::ordered_json j;
    j["source"] = {{"volume_id", ref.source.volume_id},
                   {"slice", ref.source.slice},
                   {"row", ref.source.row},
                   {"col", ref.source.col}};
    j["label"] = std::string(to_string(ref.label));
    j["size"] = size;
    return j;
}

PatchRef patch_ref_from_json(const nlohmann::json& j) {
    try {
        PatchRef r;
        const auto& s = j.at("source");
        r.source = {s.at("volume_id").get<std::string>(), s.at("slice").get<int>(), s.at("row").get<int>(),
                    s.at("col").get<int>()};
        const auto label = j.at("label").get<std::string>();
        if (label == "abnormal")
            r.label = PatchLabel::Abnormal;
        else if (label == "normal")
            r.label = PatchLabel::Normal;
        else
            throw Error(ErrorKind::Vocabulary, kModule, "unknown patch label '" + label + "'");
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, kModule, e.what());
    }
}

std::string format_patch_manifest(std::span<const PatchRef> refs, int size) {
    std::string out;
    for (const auto& r : refs) out += to_json(r, size).dump() + "\n";
    return out;
}

std::vector<PatchRef> parse_patch_manifest(const std::string& text) {
    std::vector<PatchRef> out;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(patch_ref_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Parse, kModule, "line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Parse) throw;
            throw Error(ErrorKind::Parse, kModule, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void save_classifier(const std::filesystem::path& path, const PatchClassifier& model) {
    nlohmann::ordered_json h;
    h["format"] = "CLASSIFIER v2";
    h["param_count"] = model.parameter_count();
    h["input_mean"] = model.input_mean();
    h["input_std"] = model.input_std();
    h["dtype"] = "f64";
    h["byte_order"] = "little";
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, kModule, "cannot write " + path.string());
    out << h.dump() << "\n";
    const auto p = model.parameters();
    out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
    if (!out) throw Error(ErrorKind::Io, kModule, "write failed for " + path.string());
}

PatchClassifier load_classifier(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, kModule, "cannot open " + path.string());
    std::string header;
    std::getline(in, header);
    try {
        const auto h = nlohmann::json::parse(header);
        if (h.at("format").get<std::string>() != "CLASSIFIER v2")
            throw Error(ErrorKind::Parse, kModule, "not a classifier file: " + path.string());
        PatchClassifier model;
        model.set_input_normalization(h.at("input_mean").get<double>(), h.at("input_std").get<double>());
        if (h.at("param_count").get<std::size_t>() != model.parameter_count())
            throw Error(ErrorKind::Parse, kModule, "parameter count mismatch in " + path.string());
        auto p = model.parameters();
        in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
        if (in.gcount() != static_cast<std::streamsize>(p.size() * sizeof(double)))
            throw Error(ErrorKind::Io, kModule, "truncated classifier " + path.string());
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, kModule, path.string() + ": " + e.what());
    }
}

} // namespace fnaf
