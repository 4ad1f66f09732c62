#include <cmath>
#include <numbers>

#include "fnaf/error.hpp"
#include "fnaf/rng.hpp"

namespace fnaf {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::UndefinedNmse: return "undefined-nmse";
    case ErrorKind::EmptyRegion: return "empty-region";
    case ErrorKind::Spec: return "spec";
    case ErrorKind::Placement: return "placement";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Config: return "config";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Vocabulary: return "vocabulary";
    case ErrorKind::Annotation: return "annotation";
    case ErrorKind::MissingData: return "missing-data";
    case ErrorKind::Alignment: return "alignment";
    case ErrorKind::Balance: return "balance";
    case ErrorKind::Io: return "io";
    case ErrorKind::UndefinedCorrelation: return "undefined-correlation";
    }
    return "unknown";
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(theta);
    has_spare_ = true;
    return radius * std::cos(theta);
}

} // namespace fnaf
