#include "sstode/errors.hpp"

namespace sstode {

const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonPositiveKappa: return "NonPositiveKappa";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::TooFewKnots: return "TooFewKnots";
    case ErrorCode::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::GraphConsumed: return "GraphConsumed";
    case ErrorCode::NonDeterministicFunction: return "NonDeterministicFunction";
    case ErrorCode::EmptyGrads: return "EmptyGrads";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::NumericalBlowup: return "NumericalBlowup";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ManifestMalformed: return "ManifestMalformed";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::SplitTooShort: return "SplitTooShort";
    case ErrorCode::UnstableParams: return "UnstableParams";
    case ErrorCode::EmptyEvaluation: return "EmptyEvaluation";
    case ErrorCode::IncompatibleCheckpoint: return "IncompatibleCheckpoint";
    case ErrorCode::CheckpointWriteFailure: return "CheckpointWriteFailure";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

bool is_numerical(ErrorCode code) {
    return code == ErrorCode::DivergedLoss || code == ErrorCode::NumericalBlowup ||
           code == ErrorCode::UnstableParams || code == ErrorCode::NonFiniteInput;
}

} // namespace sstode
