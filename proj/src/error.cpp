#include "nngpnas/error.hpp"

namespace nngpnas {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedDocument: return "MalformedDocument";
    case ErrorCode::NonUpperTriangular: return "NonUpperTriangular";
    case ErrorCode::BadOpLabel: return "BadOpLabel";
    case ErrorCode::MissingInputOrOutput: return "MissingInputOrOutput";
    case ErrorCode::DisconnectedCell: return "DisconnectedCell";
    case ErrorCode::ChannelAllocationError: return "ChannelAllocationError";
    case ErrorCode::SamplingExhausted: return "SamplingExhausted";
    case ErrorCode::EmptyWarmupBatch: return "EmptyWarmupBatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::SingularKernel: return "SingularKernel";
    case ErrorCode::InferenceFailed: return "InferenceFailed";
    case ErrorCode::DegenerateRanking: return "DegenerateRanking";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::NonPositiveLatency: return "NonPositiveLatency";
    case ErrorCode::MissingScores: return "MissingScores";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::Unfitted: return "Unfitted";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::InsufficientClassSamples: return "InsufficientClassSamples";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace nngpnas
