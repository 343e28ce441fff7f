// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Single-accelerator offload schedule over the toy models.
//
// The accelerator holds only the fp16 parameters. Each step it runs forward
// and backward, ships fp16 gradients to the host one layer group at a time,
// and receives fp16 parameters back from the host Adam. With the delayed
// update enabled the host optimizer runs one step behind: the update for the
// gradients of step i-1 overlaps forward/backward of step i.
//
// Step numbers are 1-based. A parameter version v means "reflects every
// gradient up to and including step v".

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "offloadlab/adam.hpp"
#include "offloadlab/ledger.hpp"
#include "offloadlab/toy_model.hpp"

namespace offloadlab {

enum class TrainMode : std::uint8_t { Sync, Dpu };
enum class DpuPhase : std::uint8_t { Warmup, SkipStep, Steady };

std::string_view to_string(TrainMode m);
std::string_view to_string(DpuPhase p);

struct DpuConfig {
    bool enabled = false;
    std::uint64_t enable_after_steps = 40;
    bool overlap_threads = false;  // run the host update on a second thread

    void validate() const;
    DpuPhase phase_for(std::uint64_t step) const;
};

struct EngineOptions {
    TileConfig tile;
    std::size_t micro_batches = 1;  // gradient accumulation slices per step
    std::size_t batch_size = 0;     // 0: the whole dataset every step

    void validate() const;
};

struct StepTrace {
    std::uint64_t step = 0;
    DpuPhase phase = DpuPhase::Warmup;
    float loss = 0.0f;
    std::uint64_t bytes_down = 0;  // host -> accelerator
    std::uint64_t bytes_up = 0;    // accelerator -> host
    bool optimizer_invoked = false;
    std::uint64_t optimizer_grad_step = 0;  // step whose gradients the optimizer consumed, 0 if none
    std::uint64_t params_version_used = 0;  // version of p16 seen by this step's forward
};

/// Schedule state carried between delayed-update steps.
struct DpuState {
    DpuConfig config;
    std::uint64_t step = 0;  // last completed step
    HalfBuffer pending;      // gradients waiting for the host optimizer
    std::uint64_t pending_step = 0;
    bool has_pending = false;
    HalfBuffer incoming;  // gradients offloaded while the update runs
    HalfBuffer staging;   // host copy of freshly updated fp16 parameters
};

/// Accounts the resident buffers of a run: 2M on the accelerator for p16;
/// 12M optimizer states and a 2M gradient buffer on the host, plus a second
/// gradient buffer and a 2M staging buffer when the update is delayed.
void reserve_buffers(const ToyModel& model, DeviceLedger& ledger, bool delayed);
void release_buffers(const ToyModel& model, DeviceLedger& ledger, bool delayed);

/// One synchronous step numbered `step`: forward/backward, per-group gradient
/// offload (2M bytes up), host Adam, tiled fp16 write-back (2M bytes down).
StepTrace step_sync(ToyModel& model, OptimizerShard& shard, const BatchView& batch, const AdamHyper& h,
                    DeviceLedger& ledger, std::uint64_t step, const EngineOptions& opt = {});

/// One step of the delayed schedule; the step number is state.step + 1.
/// Throws ConsistencyFailure if a steady step finds no pending gradients or
/// the shard disagrees with the schedule.
StepTrace step_dpu(ToyModel& model, OptimizerShard& shard, const BatchView& batch, const AdamHyper& h,
                   DeviceLedger& ledger, DpuState& state, const EngineOptions& opt = {});

/// Rows used at `step` when training with `batch_size` rows per step:
/// contiguous slices visited cyclically, the last one possibly shorter.
BatchView batch_for_step(const Dataset& data, std::size_t batch_size, std::uint64_t step);

struct TrainingRun {
    TrainMode mode = TrainMode::Sync;
    DpuConfig dpu;
    std::vector<float> losses;  // one per completed step
    std::vector<StepTrace> trace;
    DeviceLedger ledger;
    std::vector<float> final_params;  // host fp32 master copy
    HalfBuffer final_p16;             // accelerator copy
    std::size_t steps = 0;            // completed steps
    bool diverged = false;            // halted on a non-finite loss

    float final_loss() const { return losses.empty() ? 0.0f : losses.back(); }
};

/// Runs `steps` steps of the configured schedule. A non-finite loss halts
/// the run with diverged set; steps then counts the completed ones. With
/// the delayed update the gradients of the final step stay unapplied.
TrainingRun train(const ModelSpec& spec, std::span<const float> init, const Dataset& data, std::size_t steps,
                  const AdamHyper& h, const DpuConfig& dpu = {}, const EngineOptions& opt = {});

/// Throws Divergence when the run was halted.
void check_divergence(const TrainingRun& run);

/// CSV with columns step,loss,bytes_down,bytes_up,optimizer_invoked.
void write_csv(std::ostream& os, const TrainingRun& run);
nlohmann::json to_json(const TrainingRun& run);

}  // namespace offloadlab
