#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gittins_lab {

enum class ErrorCode {
  // chain_core
  NonStochasticRow,
  NoTerminationPath,
  FreeStatePresent,
  NonPositiveCost,
  InvalidModel,
  UndiscountedBetaChain,
  EmptyDistribution,
  ZeroSize,
  SteppedTerminal,
  // local_mdp / gittins
  UnvalidatedModel,
  UnsupportedDiscount,
  BracketFailure,
  ExhaustedSupport,
  // selection / oracle
  NoEligibleAction,
  NotPandoraShaped,
  DiscountedChainUnsupported,
  ExactModeTooLarge,
  InfeasibleConstraint,
  ProductTooLarge,
  // queueing
  UnstableModel,
  SrptNeedsKnownSizes,
  EmptyRecords,
  DegenerateBaseline,
  // bayesopt
  ZeroVariancePoint,
  // io / cli
  ParseError,
  ValidationError,
};

std::string_view to_string(ErrorCode code);

/// True for failures of a numerical procedure (bracketing, size caps),
/// false for rejected inputs.
bool is_numerical(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gittins_lab
