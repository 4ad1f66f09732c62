#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fnaf/blob.hpp"
#include "fnaf/field.hpp"
#include "fnaf/recon.hpp"
#include "fnaf/sampling.hpp"

namespace fnaf {

/// A false-negative adversarial feature: intensity deltas on a 4-connected
/// pixel set, positioned by its anchor (row, col).
struct Feature {
    int row = 0;
    int col = 0;
    std::vector<Offset> pixels;
    std::vector<double> values;

    [[nodiscard]] std::size_t size() const noexcept { return pixels.size(); }
    [[nodiscard]] Feature moved_to(int new_row, int new_col) const;
    friend bool operator==(const Feature&, const Feature&) = default;
};

struct AttackConfig {
    std::size_t k_min = 10;
    std::size_t k_max = 10;
    std::size_t crop_side = 48;
    std::size_t n_candidates = 11;
    double alpha = 0.0;
    double beta = 1.0;
    double gamma = 0.25;
    int boundary_d = 5;
    double fd_step = 1.0;
    double fd_learning_rate = 2.0;
    /// Feature values as a fraction of the image maximum.
    double intensity_lo = 0.8;
    double intensity_hi = 1.0;
    LossSpec loss;
    std::uint64_t seed = 0;

    void validate() const;

    /// 10-pixel features, 11 candidates, alpha 0, beta 1, crop scaled from 120/320 of the side.
    static AttackConfig evaluation(std::size_t image_side, std::uint64_t seed);
    /// alpha 1, beta 10 for robust training.
    static AttackConfig training(std::size_t image_side, std::uint64_t seed);
};

/// round(120 / 320 * side)
std::size_t scaled_crop_side(std::size_t image_side);

struct CropRegion {
    int row0 = 0;
    int col0 = 0;
    int side = 0;
    [[nodiscard]] bool contains(int r, int c) const noexcept {
        return r >= row0 && c >= col0 && r < row0 + side && c < col0 + side;
    }
};

/// Centered crop_side x crop_side search region.
CropRegion crop_region(const AttackConfig& cfg, std::size_t rows, std::size_t cols);

/// Uniform pixel count and anchor, random 4-connected growth inside the crop,
/// values uniform in [intensity_lo, intensity_hi] * image_max.
Feature sample_feature(const AttackConfig& cfg, std::size_t rows, std::size_t cols, double image_max, Rng& rng);

struct InjectedPair {
    Image2D x_adv;
    Image2D y_adv;
};

/// y_adv = y + delta'; x_adv = |U(y_adv)|, computed through the linear complex operator.
InjectedPair inject(const Image2D& y, const Feature& f, const SamplingMask& mask);

/// delta' as an image.
Image2D feature_image(const Feature& f, std::size_t rows, std::size_t cols);

/// Feature pixels dilated by Chebyshev distance <= d, clipped to the image.
RegionMask feature_region(const Feature& f, std::size_t rows, std::size_t cols, int d);

/// alpha * L(recon(x_adv), y_adv) + beta * NMSE over the dilated feature region.
double adv_loss(const ReconstructionModel& model, const Image2D& x_adv, const Image2D& y_adv, const Feature& f,
                const AttackConfig& cfg);

/// Same objective given an existing reconstruction.
double adv_loss_of_recon(const Image2D& recon, const Image2D& y_adv, const Feature& f, const AttackConfig& cfg);

struct AttackResult {
    Feature best_feature;
    std::size_t best_index = 0;
    double adv_loss = 0.0;
    double masked_nmse = 0.0;
    bool hit = false;
    std::vector<double> candidate_losses;
};

/// The seeded candidate list random_search_attack evaluates.
std::vector<Feature> candidate_features(const Image2D& y, const AttackConfig& cfg);

/// Loss of each candidate, evaluated independently.
std::vector<double> evaluate_candidates(const ReconstructionModel& model, const Image2D& y, const SamplingMask& mask,
                                        std::span<const Feature> candidates, const AttackConfig& cfg);

/// Argmax of adv_loss over cfg.n_candidates seeded candidates; lowest index wins ties.
AttackResult random_search_attack(const ReconstructionModel& model, const Image2D& y, const SamplingMask& mask,
                                  const AttackConfig& cfg);

using FeatureObjective = std::function<double(const Feature&)>;

/// Gradient ascent on the anchor by central differences at rounded
/// positions, clipped so every pixel stays inside `crop`. Returns the
/// best feature seen, f0 included.
Feature fd_location_ascent(const FeatureObjective& objective, const Feature& f0, const CropRegion& crop,
                           const AttackConfig& cfg, std::size_t steps);

Feature fd_location_ascent(const ReconstructionModel& model, const Image2D& y, const SamplingMask& mask,
                           const Feature& f0, const AttackConfig& cfg, std::size_t steps);

struct SampleAttack {
    std::string id;
    AttackResult result;
};

struct AttackSuiteResult {
    double attack_rate = 0.0; ///< percent of samples with a hit
    double mean_masked_nmse = 0.0;
    double mean_adv_loss = 0.0;
    double gamma = 0.25;
    std::vector<SampleAttack> samples;
};

/// Per-sample seed for attack_suite: derived from cfg.seed and the sample id.
std::uint64_t sample_attack_seed(const AttackConfig& cfg, const std::string& id);

AttackSuiteResult attack_suite(const ReconstructionModel& model, std::span<const ReconExample> data,
                               const AttackConfig& cfg);

nlohmann::ordered_json to_json(const Feature& f);
nlohmann::ordered_json attack_report_json(const AttackSuiteResult& r);

} // namespace fnaf
