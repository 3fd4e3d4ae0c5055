#include "gittins_lab/error.hpp"

namespace gittins_lab {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonStochasticRow: return "NonStochasticRow";
    case ErrorCode::NoTerminationPath: return "NoTerminationPath";
    case ErrorCode::FreeStatePresent: return "FreeStatePresent";
    case ErrorCode::NonPositiveCost: return "NonPositiveCost";
    case ErrorCode::InvalidModel: return "InvalidModel";
    case ErrorCode::UndiscountedBetaChain: return "UndiscountedBetaChain";
    case ErrorCode::EmptyDistribution: return "EmptyDistribution";
    case ErrorCode::ZeroSize: return "ZeroSize";
    case ErrorCode::SteppedTerminal: return "SteppedTerminal";
    case ErrorCode::UnvalidatedModel: return "UnvalidatedModel";
    case ErrorCode::UnsupportedDiscount: return "UnsupportedDiscount";
    case ErrorCode::BracketFailure: return "BracketFailure";
    case ErrorCode::ExhaustedSupport: return "ExhaustedSupport";
    case ErrorCode::NoEligibleAction: return "NoEligibleAction";
    case ErrorCode::NotPandoraShaped: return "NotPandoraShaped";
    case ErrorCode::DiscountedChainUnsupported: return "DiscountedChainUnsupported";
    case ErrorCode::ExactModeTooLarge: return "ExactModeTooLarge";
    case ErrorCode::InfeasibleConstraint: return "InfeasibleConstraint";
    case ErrorCode::ProductTooLarge: return "ProductTooLarge";
    case ErrorCode::UnstableModel: return "UnstableModel";
    case ErrorCode::SrptNeedsKnownSizes: return "SrptNeedsKnownSizes";
    case ErrorCode::EmptyRecords: return "EmptyRecords";
    case ErrorCode::DegenerateBaseline: return "DegenerateBaseline";
    case ErrorCode::ZeroVariancePoint: return "ZeroVariancePoint";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
  }
  return "Unknown";
}

bool is_numerical(ErrorCode code) {
  switch (code) {
    case ErrorCode::BracketFailure:
    case ErrorCode::ExactModeTooLarge:
    case ErrorCode::ProductTooLarge:
    case ErrorCode::ZeroVariancePoint:
    case ErrorCode::DegenerateBaseline:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace gittins_lab
