#include "svsdu/error.hpp"

namespace svsdu {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::FellerViolation: return "FellerViolation";
        case ErrorCode::OrderingViolation: return "OrderingViolation";
        case ErrorCode::NonPositive: return "NonPositive";
        case ErrorCode::CorrelationOutOfRange: return "CorrelationOutOfRange";
        case ErrorCode::DegenerateBox: return "DegenerateBox";
        case ErrorCode::NonPositiveVariance: return "NonPositiveVariance";
        case ErrorCode::NotSymmetric: return "NotSymmetric";
        case ErrorCode::NegativeEigenvalue: return "NegativeEigenvalue";
        case ErrorCode::ZeroStep: return "ZeroStep";
        case ErrorCode::StepBudgetExceeded: return "StepBudgetExceeded";
        case ErrorCode::VarianceFloorBudget: return "VarianceFloorBudget";
        case ErrorCode::NonFiniteOutput: return "NonFiniteOutput";
        case ErrorCode::NonFiniteDerivative: return "NonFiniteDerivative";
        case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
        case ErrorCode::UnknownParameter: return "UnknownParameter";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::RegionMismatch: return "RegionMismatch";
        case ErrorCode::RejectionBudget: return "RejectionBudget";
        case ErrorCode::DivergedLoss: return "DivergedLoss";
        case ErrorCode::EmptyChain: return "EmptyChain";
        case ErrorCode::SingularNormalMatrix: return "SingularNormalMatrix";
        case ErrorCode::NonFiniteResidual: return "NonFiniteResidual";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::NonPositiveMarketPrice: return "NonPositiveMarketPrice";
        case ErrorCode::MissingColumn: return "MissingColumn";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::QuadratureFailure: return "QuadratureFailure";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

}  // namespace svsdu
