#include "fnaf/sampling.hpp"

#include <cmath>

#include "fnaf/rng.hpp"

namespace fnaf {

namespace {
constexpr const char* kModule = "sampling";
}

MaskSpec MaskSpec::preset(int acceleration, std::uint64_t seed) {
    if (acceleration == 4) return {4, 0.08, seed};
    if (acceleration == 8) return {8, 0.04, seed};
    throw Error(ErrorKind::Config, kModule, "acceleration preset must be 4 or 8, got " + std::to_string(acceleration));
}

void MaskSpec::validate() const {
    if (acceleration < 2) throw Error(ErrorKind::Spec, kModule, "acceleration must be >= 2");
    if (!(center_fraction > 0.0 && center_fraction < 1.0))
        throw Error(ErrorKind::Spec, kModule, "center_fraction must lie in (0, 1)");
}

std::size_t SamplingMask::selected_count() const {
    std::size_t n = 0;
    for (auto v : cols_selected) n += v ? 1 : 0;
    return n;
}

double SamplingMask::selected_fraction() const {
    return cols() == 0 ? 0.0 : static_cast<double>(selected_count()) / static_cast<double>(cols());
}

std::pair<std::size_t, std::size_t> SamplingMask::center_band() const {
    return fnaf::center_band(cols(), spec.center_fraction);
}

SamplingMask SamplingMask::all_true(std::size_t cols) {
    SamplingMask m;
    m.cols_selected.assign(cols, 1);
    m.spec = MaskSpec{1, 0.5, 0};
    return m;
}

std::pair<std::size_t, std::size_t> center_band(std::size_t cols, double center_fraction) {
    const auto count = static_cast<std::size_t>(std::lround(center_fraction * static_cast<double>(cols)));
    const std::size_t first = (cols - count + 1) / 2;
    return {first, count};
}

SamplingMask generate_mask(const MaskSpec& spec, std::size_t cols) {
    spec.validate();
    if (cols < 16) throw Error(ErrorKind::Spec, kModule, "mask needs at least 16 columns");
    const auto [first, count] = center_band(cols, spec.center_fraction);
    const double budget = static_cast<double>(cols) / spec.acceleration;
    const double excess = static_cast<double>(count) - budget;
    if (excess > budget)
        throw Error(ErrorKind::Spec, kModule,
                    "center band of " + std::to_string(count) + " columns exceeds twice the sampling budget");
    const double prob = excess >= 0.0 ? 0.0 : (budget - static_cast<double>(count)) / static_cast<double>(cols - count);

    SamplingMask mask;
    mask.spec = spec;
    mask.cols_selected.assign(cols, 0);
    Rng rng(derive_seed(spec.seed, "mask"));
    for (std::size_t c = 0; c < cols; ++c) {
        const bool drawn = rng.uniform() < prob;
        const bool central = c >= first && c < first + count;
        mask.cols_selected[c] = (central || drawn) ? 1 : 0;
    }
    return mask;
}

ComplexGrid apply_mask(const ComplexGrid& kspace, const SamplingMask& mask) {
    if (mask.cols() != kspace.cols())
        throw Error(ErrorKind::InvalidInput, kModule,
                    "mask has " + std::to_string(mask.cols()) + " columns, grid has " + std::to_string(kspace.cols()));
    ComplexGrid out = kspace;
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c)
            if (!mask.cols_selected[c]) out(r, c) = Complex{};
    return out;
}

ComplexGrid undersample_complex(const ComplexGrid& y, const SamplingMask& mask) {
    if (mask.cols() != y.cols())
        throw Error(ErrorKind::InvalidInput, kModule,
                    "mask has " + std::to_string(mask.cols()) + " columns, image has " + std::to_string(y.cols()));
    return ifft2c(apply_mask(fft2c(y), mask));
}

ComplexGrid undersample_complex(const Image2D& y, const SamplingMask& mask) {
    return undersample_complex(to_complex(y), mask);
}

Image2D undersample(const Image2D& y, const SamplingMask& mask) { return magnitude(undersample_complex(y, mask)); }

nlohmann::ordered_json to_json(const SamplingMask& mask) {
    nlohmann::ordered_json j;
    j["cols"] = mask.cols();
    std::vector<std::size_t> selected;
    for (std::size_t c = 0; c < mask.cols(); ++c)
        if (mask.cols_selected[c]) selected.push_back(c);
    j["selected"] = selected;
    j["spec"] = {{"acceleration", mask.spec.acceleration},
                 {"center_fraction", mask.spec.center_fraction},
                 {"seed", mask.spec.seed}};
    return j;
}

SamplingMask mask_from_json(const nlohmann::json& j) {
    try {
        SamplingMask m;
        const auto cols = j.at("cols").get<std::size_t>();
        m.cols_selected.assign(cols, 0);
        for (auto c : j.at("selected").get<std::vector<std::size_t>>()) {
            if (c >= cols) throw Error(ErrorKind::Parse, kModule, "selected column out of range");
            m.cols_selected[c] = 1;
        }
        const auto& s = j.at("spec");
        m.spec = {s.at("acceleration").get<int>(), s.at("center_fraction").get<double>(),
                  s.at("seed").get<std::uint64_t>()};
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, kModule, std::string("malformed mask JSON: ") + e.what());
    }
}

} // namespace fnaf
