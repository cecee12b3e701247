#pragma once

#include <stdexcept>
#include <string>

namespace sstode {

enum class ErrorCode {
    InvalidArgument,
    NonFiniteInput,
    ShapeMismatch,
    NonPositiveKappa,
    OutOfBounds,
    TooFewKnots,
    NonMonotonicTimestamps,
    OutOfDomain,
    GraphConsumed,
    NonDeterministicFunction,
    EmptyGrads,
    DivergedLoss,
    NumericalBlowup,
    LengthMismatch,
    ManifestMalformed,
    ChecksumMismatch,
    SplitTooShort,
    UnstableParams,
    EmptyEvaluation,
    IncompatibleCheckpoint,
    CheckpointWriteFailure,
    Io,
};

const char* to_string(ErrorCode code);

/// True for failures caused by the numerics (divergence, blow-up) rather than bad input.
bool is_numerical(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) throw Error(code, what);
}

} // namespace sstode
