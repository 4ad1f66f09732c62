#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fnaf/annot.hpp"
#include "fnaf/field.hpp"

namespace fnaf {

struct PatchSpec {
    int size = 32;
    int stride = 2;
    std::uint64_t seed = 0;

    /// Stride 2 for size 32, stride 8 for size 64.
    static PatchSpec preset(int size, std::uint64_t seed = 0);
    void validate() const;
};

/// floor((side - size) / stride) + 1
std::size_t patches_per_axis(std::size_t side, const PatchSpec& spec);

enum class PatchLabel : unsigned char { Normal = 0, Abnormal = 1 };

std::string_view to_string(PatchLabel label);

struct PatchSource {
    std::string volume_id;
    int slice = 0;
    int row = 0;
    int col = 0;
    friend auto operator<=>(const PatchSource&, const PatchSource&) = default;
};

/// A patch by coordinates; pixels stay in the source image.
struct PatchRef {
    PatchSource source;
    PatchLabel label = PatchLabel::Normal;
    friend bool operator==(const PatchRef&, const PatchRef&) = default;
};

struct LabeledPatch {
    PatchSource source;
    Image2D pixels;
    PatchLabel label = PatchLabel::Normal;
};

/// Dense sliding window over every image, slices in key order, then row-major.
/// A patch is abnormal when it overlaps any box of its slice by >= 1 pixel.
std::vector<PatchRef> extract_patches(const ImageLookup& images, const AnnotationSet& annset, const PatchSpec& spec);

/// Keeps every abnormal patch and a seeded uniform subset of normals, at
/// most as many as there are abnormals. Input order is preserved.
std::vector<PatchRef> balance_cap(std::span<const PatchRef> stream, std::uint64_t seed);

LabeledPatch cut_patch(const ImageLookup& images, const PatchRef& ref, int size);
std::vector<LabeledPatch> cut_patches(const ImageLookup& images, std::span<const PatchRef> refs, int size);

// Classifier ----------------------------------------------------------------

/// Standardized input, two blocks of conv3x3 + ReLU + 2x2 max pool (1->8->16
/// channels), global average pool, linear 16->2, softmax. The linear layer
/// starts at zero, so an untrained model outputs 0.5 for every patch.
/// Input mean and std are fixed from the training patches, not learned.
class PatchClassifier {
public:
    static constexpr int kC1 = 8;
    static constexpr int kC2 = 16;

    explicit PatchClassifier(std::uint64_t seed = 0);

    [[nodiscard]] double abnormal_probability(const Image2D& patch) const;

    /// Cross-entropy of the 2-way softmax; adds weight * gradient into grad.
    double value_and_grad(const Image2D& patch, PatchLabel label, std::span<double> grad, double weight = 1.0) const;

    void set_input_normalization(double mean, double std);
    [[nodiscard]] double input_mean() const noexcept { return input_mean_; }
    [[nodiscard]] double input_std() const noexcept { return input_std_; }

    [[nodiscard]] std::size_t parameter_count() const noexcept { return params_.size(); }
    [[nodiscard]] std::span<double> parameters() noexcept { return params_; }
    [[nodiscard]] std::span<const double> parameters() const noexcept { return params_; }
    /// (offset, count) of each layer's parameters: conv1, conv2, linear.
    [[nodiscard]] std::vector<std::pair<std::size_t, std::size_t>> layer_ranges() const;

private:
    std::vector<double> params_;
    double input_mean_ = 0.0;
    double input_std_ = 1.0;
};

struct ClassifierConfig {
    std::size_t max_epochs = 100;
    std::size_t patience = 15;
    std::size_t batch_size = 128;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ClassifierEpoch {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_auroc = 0.5;
};

struct ClassifierTrainResult {
    PatchClassifier model;
    std::vector<ClassifierEpoch> history;
    long best_epoch = -1;
};

/// SGD with momentum and weight decay; keeps the epoch with the best
/// validation AUROC (earliest on ties) and stops after `patience` epochs
/// without improvement.
ClassifierTrainResult train_classifier(std::span<const LabeledPatch> train, std::span<const LabeledPatch> val,
                                       const ClassifierConfig& cfg);

std::vector<double> predict(const PatchClassifier& model, std::span<const LabeledPatch> patches);

/// Probability that a random abnormal scores above a random normal, ties counted one half.
double auroc(std::span<const double> scores, std::span<const PatchLabel> labels);

struct ClassificationScore {
    std::string method;
    long tp = 0, tn = 0, fp = 0, fn = 0;
    double sensitivity = 0.0; ///< percent
    double specificity = 0.0; ///< percent
    double f1 = 0.0;          ///< percent
    double kappa = 0.0;
    double auroc = 0.5;
    std::vector<std::size_t> false_negatives; ///< indices into the patch list
    double mean_fn_probability = std::numeric_limits<double>::quiet_NaN();
};

/// Metrics at threshold 0.5.
ClassificationScore score_predictions(const std::string& method, std::span<const double> probabilities,
                                      std::span<const PatchLabel> labels);

struct MethodPatches {
    std::string method;
    std::vector<LabeledPatch> patches;
};

/// Scores every method with one frozen classifier. All methods must list the
/// same sources and labels in the same order, else Alignment.
std::vector<ClassificationScore> classify_and_score(const PatchClassifier& model, std::span<const MethodPatches> sets);

struct PairedFalseNegatives {
    long only_a = 0; ///< false negative under a, detected under b
    long only_b = 0;
    long both = 0;
    McNemarResult test;
};

PairedFalseNegatives compare_false_negatives(const ClassificationScore& a, const ClassificationScore& b);

nlohmann::ordered_json to_json(const ClassificationScore& s);
nlohmann::ordered_json to_json(const PatchRef& ref, int size);
PatchRef patch_ref_from_json(const nlohmann::json& j);

/// One {source, label, size} JSON object per line.
std::string format_patch_manifest(std::span<const PatchRef> refs, int size);
std::vector<PatchRef> parse_patch_manifest(const std::string& text);

void save_classifier(const std::filesystem::path& path, const PatchClassifier& model);
PatchClassifier load_classifier(const std::filesystem::path& path);

} // namespace fnaf
