#pragma once

#include <span>
#include <string>
#include <vector>

#include "fnaf/field.hpp"
#include "fnaf/sampling.hpp"

namespace fnaf {

struct IPConfig {
    double epsilon = 1e-7; ///< MSE units
    void validate() const;
};

struct IPCheck {
    double distance = 0.0; ///< MSE between x and x + delta
    bool accepted = false; ///< distance > epsilon, strictly
};

IPCheck ip_check(const Image2D& x, const Image2D& x_adv, const IPConfig& cfg);

/// One injected example: its identity, the clean and perturbed zero-filled images, and the attack loss.
struct Injection {
    std::string id;
    Image2D x;
    Image2D x_adv;
    double adv_loss = 0.0;
};

struct IPRecord {
    std::string id;
    double distance = 0.0;
    double adv_loss = 0.0;
    bool accepted = false;
};

std::vector<IPRecord> ip_records(std::span<const Injection> stream, const IPConfig& cfg);

/// Fraction of injections with D > epsilon.
double acceptance_rate(std::span<const Injection> stream, const IPConfig& cfg);
double acceptance_rate(std::span<const IPRecord> records);

/// CSV {id, D, adv_loss, accepted}.
std::string ip_csv(std::span<const IPRecord> records);

/// Noise floor: the `quantile` of D between zero-filled reconstructions of
/// two independently noised copies of each phantom.
double calibrate_epsilon(std::span<const Image2D> phantoms, std::span<const SamplingMask> masks, double noise_sigma,
                         std::uint64_t seed, double quantile = 0.999);

/// Standard Pearson r; zero variance raises UndefinedCorrelation.
double pearson_correlation(std::span<const double> a, std::span<const double> b);

} // namespace fnaf
