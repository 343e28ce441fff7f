// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// In-process simulation of K data-parallel workers with partitioned
// optimizer states and gradients, each offloading its partition to its own
// host shard.
//
// Per step every worker computes gradients on its contiguous slice of the
// global batch, the gradients are averaged and scattered by partition, each
// worker offloads only its partition (2M/K bytes), updates it on the host,
// receives 2M/K bytes of fp16 parameters back and broadcasts them to its
// peers over the accelerator fabric. Host-link traffic summed over workers
// is therefore 4M per step for any K.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "json.hpp"
#include "offloadlab/training_engine.hpp"

namespace offloadlab {

struct IndexRange {
    std::size_t first = 0;
    std::size_t count = 0;

    std::size_t end() const { return first + count; }
    friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

/// K contiguous ranges covering [0, M); the first M % K are one longer.
/// Ranges are empty when K > M. Throws InvalidArgument for K == 0.
std::vector<IndexRange> partition_indices(std::size_t m, std::size_t k);

/// Shard k is the elementwise mean over workers of range k, summed in
/// ascending rank order in double and rounded once. Throws LengthMismatch.
/// Instantiated for float and double.
template <typename T>
std::vector<std::vector<T>> reduce_scatter(const std::vector<std::vector<T>>& grads,
                                           const std::vector<IndexRange>& ranges);

struct WorkerState {
    std::size_t rank = 0;
    IndexRange range;
    ToyModel replica;      // full fp16 parameters on this accelerator
    OptimizerShard shard;  // host states for `range` only
    HalfBuffer g16_partition;
    DeviceLedger ledger;
};

/// Workers with identical replicas and host shards over partition_indices.
std::vector<WorkerState> make_workers(const ModelSpec& spec, std::span<const float> init, std::size_t k);

struct DpOptions {
    EngineOptions engine;
    bool parallel = false;  // run per-worker phases on separate threads
};

/// One training step numbered `step` over the global batch. Workers feed
/// the collective with unrounded partial sums scaled so their mean is the
/// full-batch gradient; it is rounded to fp32 once, after the reduction,
/// exactly as the single-device path rounds it. Returns the full-batch loss.
/// Throws NonFiniteLoss before any state changes if that loss is not finite.
float dp_step(std::vector<WorkerState>& workers, const BatchView& global_batch, const AdamHyper& h,
              std::uint64_t step, const DpOptions& opt = {});

bool replicas_consistent(const std::vector<WorkerState>& workers);

struct DpReport {
    std::size_t workers = 0;
    std::size_t steps = 0;
    std::uint64_t host_link_bytes_per_step = 0;  // max over steps, all workers summed
    std::uint64_t fabric_bytes_per_step = 0;
    bool host_link_constant = true;  // the same host-link total every step
    std::uint64_t max_worker_host_bytes = 0;
    std::uint64_t total_host_bytes = 0;
    bool replica_consistent = true;  // checked after every step
    bool diverged = false;
};

struct DpRun {
    std::vector<TrainingRun> workers;  // per-worker trace and ledger
    std::vector<float> final_params;   // host fp32 shards gathered in rank order
    HalfBuffer final_p16;              // rank 0 replica
    DpReport report;
};

DpRun run_dp(const ModelSpec& spec, std::span<const float> init, const Dataset& data, std::size_t steps,
             std::size_t k, const AdamHyper& h, const DpOptions& opt = {});

/// Relative L2 distance |a - b| / |b|, 0 when both are zero.
double relative_distance(std::span<const float> a, std::span<const float> b);

nlohmann::json to_json(const DpReport& r);
void write_worker_csv(std::ostream& os, const TrainingRun& worker);

}  // namespace offloadlab
