#include "fnaf/ipverify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fnaf/rng.hpp"

namespace fnaf {

namespace {
constexpr const char* kModule = "ipverify";
constexpr double kEpsilonFloor = 1e-12;
}

void IPConfig::validate() const {
    if (!(epsilon > 0.0)) throw Error(ErrorKind::Config, kModule, "epsilon must be > 0");
}

IPCheck ip_check(const Image2D& x, const Image2D& x_adv, const IPConfig& cfg) {
    cfg.validate();
    require_same_shape(x, x_adv, kModule);
    IPCheck out;
    out.distance = mse(x_adv, x);
    out.accepted = out.distance > cfg.epsilon;
    return out;
}

std::vector<IPRecord> ip_records(std::span<const Injection> stream, const IPConfig& cfg) {
    std::vector<IPRecord> records;
    records.reserve(stream.size());
    for (const auto& inj : stream) {
        const auto chk = ip_check(inj.x, inj.x_adv, cfg);
        records.push_back({inj.id, chk.distance, inj.adv_loss, chk.accepted});
    }
    return records;
}

double acceptance_rate(std::span<const IPRecord> records) {
    if (records.empty()) throw Error(ErrorKind::InvalidInput, kModule, "empty injection stream");
    const auto n = std::count_if(records.begin(), records.end(), [](const IPRecord& r) { return r.accepted; });
    return static_cast<double>(n) / static_cast<double>(records.size());
}

double acceptance_rate(std::span<const Injection> stream, const IPConfig& cfg) {
    const auto records = ip_records(stream, cfg);
    return acceptance_rate(records);
}

std::string ip_csv(std::span<const IPRecord> records) {
    std::ostringstream out;
    out.precision(17);
    out << "id,D,adv_loss,accepted\n";
    for (const auto& r : records) out << r.id << "," << r.distance << "," << r.adv_loss << "," << (r.accepted ? 1 : 0) << "\n";
    return out.str();
}

double calibrate_epsilon(std::span<const Image2D> phantoms, std::span<const SamplingMask> masks, double noise_sigma,
                         std::uint64_t seed, double quantile) {
    if (phantoms.empty() || phantoms.size() != masks.size())
        throw Error(ErrorKind::InvalidInput, kModule, "need one mask per phantom");
    if (!(quantile > 0.0 && quantile <= 1.0)) throw Error(ErrorKind::Config, kModule, "quantile must lie in (0, 1]");
    std::vector<double> distances;
    distances.reserve(phantoms.size());
    for (std::size_t i = 0; i < phantoms.size(); ++i) {
        Rng rng(derive_seed(seed, i));
        Image2D a = phantoms[i], b = phantoms[i];
        for (std::size_t k = 0; k < a.size(); ++k) {
            a[k] += noise_sigma * rng.normal();
            b[k] += noise_sigma * rng.normal();
        }
        distances.push_back(mse(undersample(a, masks[i]), undersample(b, masks[i])));
    }
    std::sort(distances.begin(), distances.end());
    const auto rank = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(distances.size())));
    const double q = distances[std::clamp<std::size_t>(rank, 1, distances.size()) - 1];
    return std::max(q, kEpsilonFloor);
}

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error(ErrorKind::InvalidInput, kModule, "series lengths differ");
    if (a.size() < 3) throw Error(ErrorKind::InvalidInput, kModule, "correlation needs at least 3 points");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) throw Error(ErrorKind::UndefinedCorrelation, kModule, "series has zero variance");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

} // namespace fnaf
