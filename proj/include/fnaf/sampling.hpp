#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "fnaf/field.hpp"

namespace fnaf {

struct MaskSpec {
    int acceleration = 4;
    double center_fraction = 0.08;
    std::uint64_t seed = 0;

    /// Standard presets: 0.08 central fraction at 4x, 0.04 at 8x.
    static MaskSpec preset(int acceleration, std::uint64_t seed);

    void validate() const;
};

/// Column-selection indicator over k-space. Columns are the phase-encode
/// direction; rows are never masked.
struct SamplingMask {
    std::vector<unsigned char> cols_selected;
    MaskSpec spec;

    [[nodiscard]] std::size_t cols() const noexcept { return cols_selected.size(); }
    [[nodiscard]] std::size_t selected_count() const;
    [[nodiscard]] double selected_fraction() const;

    /// [first, first + count) always-sampled central columns.
    [[nodiscard]] std::pair<std::size_t, std::size_t> center_band() const;

    static SamplingMask all_true(std::size_t cols);
};

/// Central band of round(center_fraction*cols) columns plus i.i.d. Bernoulli
/// columns with the probability that makes the expected fraction 1/acceleration.
SamplingMask generate_mask(const MaskSpec& spec, std::size_t cols);

std::pair<std::size_t, std::size_t> center_band(std::size_t cols, double center_fraction);

/// k-space with unselected columns zeroed.
ComplexGrid apply_mask(const ComplexGrid& kspace, const SamplingMask& mask);

/// F^-1(M(F(y))) without taking the magnitude; this is the linear operator.
ComplexGrid undersample_complex(const ComplexGrid& y, const SamplingMask& mask);
ComplexGrid undersample_complex(const Image2D& y, const SamplingMask& mask);

/// Zero-filled reconstruction |U(y)|, the model input.
Image2D undersample(const Image2D& y, const SamplingMask& mask);

nlohmann::ordered_json to_json(const SamplingMask& mask);
SamplingMask mask_from_json(const nlohmann::json& j);

} // namespace fnaf
