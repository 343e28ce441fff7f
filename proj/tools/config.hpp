// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "offloadlab/adam.hpp"
#include "offloadlab/graph_model.hpp"
#include "offloadlab/toy_model.hpp"

namespace offloadlab::cli {

/// Everything a run needs. Sources, lowest precedence first: built-in
/// defaults, the config file, OFFLOADLAB_SEED, command-line flags.
struct Config {
    std::uint64_t seed = 42;
    std::size_t steps = 200;
    bool dpu = false;
    std::uint64_t dpu_after = 40;
    bool overlap = false;

    // [model]
    ModelKind kind = ModelKind::LogisticRegression;
    std::size_t features = 10;
    std::vector<std::size_t> hidden = {16};
    std::size_t outputs = 1;
    std::size_t rows = 512;
    std::size_t batch_size = 0;
    std::size_t micro_batches = 1;
    std::uint64_t params = 1'000'000'000;  // analyzer M
    std::uint64_t batch = 512;             // analyzer B

    AdamHyper adam;           // [adam]
    TileConfig tile;          // [tile]
    HardwareProfile hardware;  // [hardware]

    ModelSpec model_spec() const;
    Dataset dataset() const;
};

/// Reads an INI file over `base`. Unknown keys and malformed values throw
/// InvalidArgument; an unreadable file throws IoError.
Config load_config(const std::string& path, Config base = {});

/// Applies OFFLOADLAB_SEED when set. Throws InvalidArgument if malformed.
void apply_environment(Config& cfg);

/// Parses "16,32" style size lists.
std::vector<std::size_t> parse_size_list(const std::string& text);

/// Key reference shown by --help.
std::string config_reference();

}  // namespace offloadlab::cli
