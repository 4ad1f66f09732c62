#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fnaf {

enum class ErrorKind {
    InvalidInput,
    UndefinedNmse,
    EmptyRegion,
    Spec,
    Placement,
    Numeric,
    Divergence,
    Config,
    Parse,
    Vocabulary,
    Annotation,
    MissingData,
    Alignment,
    Balance,
    Io,
    UndefinedCorrelation,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind and the name of the
/// module that raised it, so the CLI can map it to an exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string module, const std::string& message)
        : std::runtime_error(module + ": " + message), kind_(kind), module_(std::move(module)) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }
    [[nodiscard]] const std::string& module() const noexcept { return module_; }

private:
    ErrorKind kind_;
    std::string module_;
};

} // namespace fnaf
