#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mxfar {

/// Error categories. The CLI maps each category to a distinct exit status.
enum class ErrorCode {
    InvalidArgument = 1,
    InvalidBandwidth,
    SpecError,
    DegenerateReference,
    EmptyDesign,
    InsufficientData,
    SingularDesign,
    SingularSystem,
    EmptyNeighborhood,
    VarianceUndefined,
    FitFailure,
    GapError,
    IndexError,
    SubseriesError,
    SelectionError,
    TestError,
    GenerationError,
    StabilityError,
    ExtrapolationError,
    IngestionError,
    IoError,
};

[[nodiscard]] std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace mxfar
