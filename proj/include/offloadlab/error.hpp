// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace offloadlab {

enum class ErrorCode {
    InvalidArgument,
    UnassignedNode,
    AlreadyFused,
    InvalidProfile,
    LengthMismatch,
    NonFiniteInput,
    StepZero,
    InvalidTileConfig,
    EquivalenceFailure,
    EmptyBatch,
    NonFiniteLoss,
    Divergence,
    ConsistencyFailure,
    IoError,
};

inline std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::UnassignedNode: return "UnassignedNode";
        case ErrorCode::AlreadyFused: return "AlreadyFused";
        case ErrorCode::InvalidProfile: return "InvalidProfile";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::NonFiniteInput: return "NonFiniteInput";
        case ErrorCode::StepZero: return "StepZero";
        case ErrorCode::InvalidTileConfig: return "InvalidTileConfig";
        case ErrorCode::EquivalenceFailure: return "EquivalenceFailure";
        case ErrorCode::EmptyBatch: return "EmptyBatch";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::Divergence: return "Divergence";
        case ErrorCode::ConsistencyFailure: return "ConsistencyFailure";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

}  // namespace offloadlab
