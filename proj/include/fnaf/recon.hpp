#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fnaf/annot.hpp"
#include "fnaf/field.hpp"
#include "fnaf/kernels.hpp"
#include "fnaf/phantom.hpp"
#include "fnaf/sampling.hpp"

namespace fnaf {

/// Anything that maps a zero-filled image to a reconstruction. Attacks and
/// evaluations only need this; training needs ReconModel.
class ReconstructionModel {
public:
    virtual ~ReconstructionModel() = default;
    [[nodiscard]] virtual Image2D reconstruct(const Image2D& x) const = 0;
};

/// The zero-filled baseline: returns its input.
class ZeroFilledModel final : public ReconstructionModel {
public:
    [[nodiscard]] Image2D reconstruct(const Image2D& x) const override { return x; }
};

struct Architecture {
    std::vector<int> channels{8, 16, 32};
    int kernel = 3;

    [[nodiscard]] int depth() const noexcept { return static_cast<int>(channels.size()); }
    void validate() const;
};

enum class LossKind { L1, Ssim };

struct LossSpec {
    LossKind kind = LossKind::L1;
};

std::string_view to_string(LossKind kind);
LossKind loss_kind_from_string(std::string_view s);

/// Value of an objective on a model output and its gradient w.r.t. that output.
struct OutputLoss {
    double value = 0.0;
    Image2D grad;
};

using OutputObjective = std::function<OutputLoss(const Image2D& output)>;

/// Whole-image loss L: mean absolute error (subgradient 0 at 0) or 1 - SSIM.
OutputLoss recon_loss(const Image2D& output, const Image2D& target, const LossSpec& loss);
double recon_loss_value(const Image2D& output, const Image2D& target, const LossSpec& loss);

struct ConvLayer {
    kernels::ConvShape shape; ///< h, w unset; filled per call
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
};

/// Encoder-decoder with one 3x3 conv + ReLU per level, average-pool down,
/// nearest-neighbour up, channel-concatenated skips, a 1x1 output conv and a
/// global input-to-output residual. The output conv starts at zero, so an
/// untrained model passes its input through.
class ReconModel final : public ReconstructionModel {
public:
    ReconModel() : ReconModel(Architecture{}, 0) {}
    ReconModel(Architecture arch, std::uint64_t seed);

    [[nodiscard]] Image2D reconstruct(const Image2D& x) const override;

    /// Forward, objective, backward. Adds weight * d objective / d theta to grad; returns the objective value.
    double value_and_grad(const Image2D& x, const OutputObjective& objective, std::span<double> grad,
                          double weight = 1.0) const;

    [[nodiscard]] const Architecture& architecture() const noexcept { return arch_; }
    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] std::size_t parameter_count() const noexcept { return params_.size(); }
    [[nodiscard]] std::span<double> parameters() noexcept { return params_; }
    [[nodiscard]] std::span<const double> parameters() const noexcept { return params_; }
    [[nodiscard]] const std::vector<ConvLayer>& layers() const noexcept { return layers_; }

private:
    struct Cache;
    Image2D forward(const Image2D& x, Cache* cache) const;
    void backward(const Cache& cache, const Image2D& grad_output, std::span<double> grad, double weight) const;

    Architecture arch_;
    std::uint64_t seed_;
    std::vector<double> params_;
    std::vector<ConvLayer> layers_;
};

struct ReconExample {
    std::string id;
    Image2D input;  ///< zero-filled x
    Image2D target; ///< fully sampled y
    SamplingMask mask;
    std::vector<BoundingBox> boxes;
};

/// Zero-filled inputs for each target under a per-image mask (seed derived from `mask_seed` and the id).
std::vector<ReconExample> make_examples(const std::vector<DatasetImage>& images, int acceleration,
                                        std::uint64_t mask_seed);

struct LossAndGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

/// Mean whole-image loss over the batch and its parameter gradient.
LossAndGrad loss_and_grad(const ReconModel& model, std::span<const ReconExample> batch, const LossSpec& loss);

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 4;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
    LossSpec loss;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_recon_loss = 0.0;
    double val_adv_loss = std::numeric_limits<double>::quiet_NaN();
};

using TrainHistory = std::vector<EpochRecord>;

/// Epoch with the lowest validation reconstruction loss; earliest on ties.
/// Any adversarial column is ignored.
std::size_t select_checkpoint(const TrainHistory& history);

struct TrainResult {
    ReconModel model;           ///< best-validation parameters (input model when no epochs ran)
    TrainHistory history;
    long best_epoch = -1;
};

/// Computes the batch gradient into `grad` (zeroed by the caller) and returns the batch training loss.
using StepFunction = std::function<double(const ReconModel&, std::span<const ReconExample>, std::size_t step,
                                          std::vector<double>& grad)>;
/// Optional per-epoch validation adversarial loss.
using ValAdvFunction = std::function<double(const ReconModel&, std::size_t epoch)>;

/// Shuffled mini-batch SGD with a fixed step; best-validation selection; a
/// loss above 1e3 times the initial validation loss raises Divergence.
TrainResult train_loop(const ReconModel& init, std::span<const ReconExample> train, std::span<const ReconExample> val,
                       const TrainConfig& cfg, const StepFunction& step, const ValAdvFunction& val_adv = {});

TrainResult train_standard(const ReconModel& init, std::span<const ReconExample> train,
                           std::span<const ReconExample> val, const TrainConfig& cfg);

double mean_recon_loss(const ReconstructionModel& model, std::span<const ReconExample> data, const LossSpec& loss);
double mean_nmse(const ReconstructionModel& model, std::span<const ReconExample> data);

std::string history_csv(const TrainHistory& history);

struct CheckpointMeta {
    std::string mode = "standard";
    long epoch = -1;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    int acceleration = 0;
    std::string loss = "l1";
};

/// CKPT v1: one JSON header line, then the raw little-endian f32 parameters.
void save_checkpoint(const std::filesystem::path& path, const ReconModel& model, const CheckpointMeta& meta);
ReconModel load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

} // namespace fnaf
