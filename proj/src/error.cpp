#include "mxfar/error.hpp"

namespace mxfar {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid-argument";
        case ErrorCode::InvalidBandwidth: return "invalid-bandwidth";
        case ErrorCode::SpecError: return "spec-error";
        case ErrorCode::DegenerateReference: return "degenerate-reference";
        case ErrorCode::EmptyDesign: return "empty-design";
        case ErrorCode::InsufficientData: return "insufficient-data";
        case ErrorCode::SingularDesign: return "singular-design";
        case ErrorCode::SingularSystem: return "singular-system";
        case ErrorCode::EmptyNeighborhood: return "empty-neighborhood";
        case ErrorCode::VarianceUndefined: return "variance-undefined";
        case ErrorCode::FitFailure: return "fit-failure";
        case ErrorCode::GapError: return "gap";
        case ErrorCode::IndexError: return "index";
        case ErrorCode::SubseriesError: return "subseries";
        case ErrorCode::SelectionError: return "selection";
        case ErrorCode::TestError: return "test";
        case ErrorCode::GenerationError: return "generation";
        case ErrorCode::StabilityError: return "stability";
        case ErrorCode::ExtrapolationError: return "extrapolation";
        case ErrorCode::IngestionError: return "ingestion";
        case ErrorCode::IoError: return "io";
    }
    return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string("[") + std::string(to_string(code)) + "] " + message),
      code_(code) {}

}  // namespace mxfar
