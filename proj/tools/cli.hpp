// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

#include "offloadlab/error.hpp"

namespace offloadlab::cli {

// Process exit codes, stable for scripting.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitEquivalence = 3;
inline constexpr int kExitDivergence = 4;
inline constexpr int kExitConsistency = 5;

int exit_code_for(ErrorCode code);

/// Entry point shared by the binary and the tests.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace offloadlab::cli
