#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nngpnas {

enum class ErrorCode {
  // archspec
  MalformedDocument,
  NonUpperTriangular,
  BadOpLabel,
  MissingInputOrOutput,
  DisconnectedCell,
  ChannelAllocationError,
  SamplingExhausted,
  // forward / trainer
  EmptyWarmupBatch,
  ShapeMismatch,
  NonFiniteActivation,
  DivergedLoss,
  // nngp
  SingularKernel,
  InferenceFailed,
  // metrics
  DegenerateRanking,
  ZeroVariance,
  SingleClass,
  NonPositiveLatency,
  // screening
  MissingScores,
  RankDeficient,
  Unfitted,
  // pipeline
  TruncatedFile,
  LabelOutOfRange,
  InsufficientClassSamples,
  InvalidArgument,
  IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace nngpnas
