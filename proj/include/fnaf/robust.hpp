#pragma once

#include <span>
#include <vector>

#include "fnaf/annot.hpp"
#include "fnaf/attack.hpp"
#include "fnaf/recon.hpp"

namespace fnaf {

enum class TrainMode { Standard, Fnaf, Bbox };

std::string_view to_string(TrainMode mode);
TrainMode train_mode_from_string(std::string_view s);

struct RobustStepResult {
    double loss = 0.0;          ///< batch mean of (clean + adversarial) / 2
    double standard_loss = 0.0; ///< batch mean of L on the clean examples
    double adv_term = 0.0;      ///< batch mean of beta * masked NMSE, always >= 0
    std::vector<double> grad;
    std::vector<Feature> features; ///< inner-maximization winners, one per sample
};

/// Gradient of the 1:1 mix of the clean loss L(x, y) and the adversarial
/// objective alpha * L(x_adv, y_adv) + beta * NMSE(T) for fixed features.
RobustStepResult robust_grad_with_features(const ReconModel& model, std::span<const ReconExample> batch,
                                           std::span<const Feature> features, const AttackConfig& cfg);

/// Inner maximization by random search (cfg.n_candidates per sample, seeds
/// derived from cfg.seed, the step index and the sample id), then
/// robust_grad_with_features.
RobustStepResult robust_step(const ReconModel& model, std::span<const ReconExample> batch, const AttackConfig& cfg,
                             std::size_t step_index = 0);

/// T = union of each sample's boxes; box-less samples contribute only L(x, y).
RobustStepResult bbox_robust_step(const ReconModel& model, std::span<const ReconExample> batch,
                                  const AttackConfig& cfg);

/// Training features for the reference model: [10, 1000] pixels with the
/// upper bound scaled by image area relative to 320x320.
AttackConfig fnaf_training_config(std::size_t image_side, std::uint64_t seed, std::size_t n_candidates = 3);

struct RobustTrainResult {
    TrainResult train;
    bool fell_back_to_fixed_size = false;
};

/// FNAF-robust training. Falls back to fixed 10-pixel features if the
/// relaxed range diverges.
RobustTrainResult train_fnaf(const ReconModel& init, std::span<const ReconExample> train,
                             std::span<const ReconExample> val, const TrainConfig& tcfg, const AttackConfig& acfg);

TrainResult train_bbox(const ReconModel& init, std::span<const ReconExample> train, std::span<const ReconExample> val,
                       const TrainConfig& tcfg, const AttackConfig& acfg);

/// Mean evaluation-weight adversarial loss on `val` with one seeded candidate per sample.
double validation_adv_loss(const ReconstructionModel& model, std::span<const ReconExample> val,
                           const AttackConfig& eval_cfg);

} // namespace fnaf
