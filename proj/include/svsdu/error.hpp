#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace svsdu {

enum class ErrorCode {
    FellerViolation,
    OrderingViolation,
    NonPositive,
    CorrelationOutOfRange,
    DegenerateBox,
    NonPositiveVariance,
    NotSymmetric,
    NegativeEigenvalue,
    ZeroStep,
    StepBudgetExceeded,
    VarianceFloorBudget,
    NonFiniteOutput,
    NonFiniteDerivative,
    NonFiniteGradient,
    UnknownParameter,
    ShapeMismatch,
    RegionMismatch,
    RejectionBudget,
    DivergedLoss,
    EmptyChain,
    SingularNormalMatrix,
    NonFiniteResidual,
    LengthMismatch,
    NonPositiveMarketPrice,
    MissingColumn,
    ParseError,
    QuadratureFailure,
    NonFinite,
    InvalidArgument,
    Io,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace svsdu
