// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "offloadlab/training_engine.hpp"

#include <algorithm>
#include <future>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "offloadlab/error.hpp"

namespace offloadlab {

std::string_view to_string(TrainMode m) { return m == TrainMode::Sync ? "sync" : "dpu"; }

std::string_view to_string(DpuPhase p) {
    switch (p) {
        case DpuPhase::Warmup: return "warmup";
        case DpuPhase::SkipStep: return "skip";
        case DpuPhase::Steady: return "steady";
    }
    return "?";
}

void DpuConfig::validate() const {
    if (enable_after_steps < 1) throw Error(ErrorCode::InvalidArgument, "enable_after_steps must be >= 1");
}

DpuPhase DpuConfig::phase_for(std::uint64_t step) const {
    if (!enabled || step < enable_after_steps) return DpuPhase::Warmup;
    return step == enable_after_steps ? DpuPhase::SkipStep : DpuPhase::Steady;
}

void EngineOptions::validate() const {
    tile.validate();
    if (micro_batches < 1) throw Error(ErrorCode::InvalidArgument, "micro_batches must be >= 1");
}

namespace {

void check_shapes(const ToyModel& model, const OptimizerShard& shard) {
    shard.check_lengths();
    if (shard.size() != model.param_count()) {
        throw Error(ErrorCode::LengthMismatch,
                    fmt::format("shard holds {} elements, model has {}", shard.size(), model.param_count()));
    }
}

// Moves the gradients to the host one layer group at a time, last layer
// first, the order backward produces them. Only one group's gradients are
// resident on the accelerator at a time.
std::uint64_t offload_gradients(const ToyModel& model, std::span<const Half> g16, std::span<Half> host,
                                DeviceLedger& ledger, std::uint64_t step) {
    const auto groups = model.spec().groups();
    std::uint64_t moved = 0;
    for (auto it = groups.rbegin(); it != groups.rend(); ++it) {
        const std::uint64_t bytes = 2 * static_cast<std::uint64_t>(it->count);
        ledger.accel_alloc(bytes);
        std::copy_n(g16.begin() + static_cast<std::ptrdiff_t>(it->first), it->count,
                    host.begin() + static_cast<std::ptrdiff_t>(it->first));
        ledger.record(step, Direction::AccelToHost, bytes, TransferTag::Gradient);
        ledger.accel_free(bytes);
        moved += bytes;
    }
    return moved;
}

// Copies staged parameters onto the accelerator in tile-sized transfers.
std::uint64_t write_back(std::span<const Half> staging, ToyModel& model, DeviceLedger& ledger, std::uint64_t step,
                         std::size_t tile_width) {
    HalfBuffer& device = model.p16_device();
    std::uint64_t moved = 0;
    for (std::size_t first = 0; first < staging.size(); first += tile_width) {
        const std::size_t count = std::min(tile_width, staging.size() - first);
        std::copy_n(staging.begin() + static_cast<std::ptrdiff_t>(first), count,
                    device.begin() + static_cast<std::ptrdiff_t>(first));
        ledger.record(step, Direction::HostToAccel, 2 * static_cast<std::uint64_t>(count), TransferTag::Parameter);
        moved += 2 * static_cast<std::uint64_t>(count);
    }
    return moved;
}

}  // namespace

void reserve_buffers(const ToyModel& model, DeviceLedger& ledger, bool delayed) {
    const std::uint64_t m = model.param_count();
    ledger.accel_alloc(2 * m);
    ledger.host_alloc(12 * m + 2 * m);
    if (delayed) ledger.host_alloc(2 * m + 2 * m);
}

void release_buffers(const ToyModel& model, DeviceLedger& ledger, bool delayed) {
    const std::uint64_t m = model.param_count();
    ledger.accel_free(2 * m);
    ledger.host_free(12 * m + 2 * m);
    if (delayed) ledger.host_free(2 * m + 2 * m);
}

StepTrace step_sync(ToyModel& model, OptimizerShard& shard, const BatchView& batch, const AdamHyper& h,
                    DeviceLedger& ledger, std::uint64_t step, const EngineOptions& opt) {
    opt.validate();
    check_shapes(model, shard);
    if (step == 0) throw Error(ErrorCode::StepZero, "training steps are 1-based");

    StepTrace trace;
    trace.step = step;
    trace.phase = DpuPhase::Warmup;
    trace.params_version_used = model.param_version();

    const ForwardBackward fb = forward_backward(model, batch, opt.micro_batches);
    trace.loss = fb.loss;

    HalfBuffer host_grad(fb.g16.size());
    trace.bytes_up = offload_gradients(model, fb.g16, host_grad, ledger, step);

    ++shard.step;
    std::uint64_t down = 0;
    adam_update_tiled(shard, host_grad, h, opt.tile, model.p16_device(), [&](std::size_t, std::size_t count) {
        ledger.record(step, Direction::HostToAccel, 2 * static_cast<std::uint64_t>(count), TransferTag::Parameter);
        down += 2 * static_cast<std::uint64_t>(count);
    });
    trace.bytes_down = down;
    trace.optimizer_invoked = true;
    trace.optimizer_grad_step = step;
    model.set_param_version(step);
    return trace;
}

StepTrace step_dpu(ToyModel& model, OptimizerShard& shard, const BatchView& batch, const AdamHyper& h,
                   DeviceLedger& ledger, DpuState& state, const EngineOptions& opt) {
    state.config.validate();
    const std::uint64_t step = state.step + 1;
    const DpuPhase phase = state.config.phase_for(step);
    if (phase == DpuPhase::Warmup) {
        StepTrace trace = step_sync(model, shard, batch, h, ledger, step, opt);
        state.step = step;
        return trace;
    }

    opt.validate();
    check_shapes(model, shard);
    const std::size_t n = model.param_count();
    state.pending.resize(n);
    state.incoming.resize(n);
    state.staging.resize(n);

    StepTrace trace;
    trace.step = step;
    trace.phase = phase;
    trace.params_version_used = model.param_version();

    if (phase == DpuPhase::SkipStep) {
        // Gradients go to the host, but the optimizer waits for the next step.
        const ForwardBackward fb = forward_backward(model, batch, opt.micro_batches);
        trace.loss = fb.loss;
        trace.bytes_up = offload_gradients(model, fb.g16, state.pending, ledger, step);
        state.pending_step = step;
        state.has_pending = true;
        state.step = step;
        return trace;
    }

    if (!state.has_pending || state.pending_step + 1 != step) {
        throw Error(ErrorCode::ConsistencyFailure,
                    fmt::format("step {} expects the gradients of step {} to be pending", step, step - 1));
    }

    const auto host_update = [&] {
        ++shard.step;
        adam_update_tiled(shard, state.pending, h, opt.tile, state.staging);
    };

    // The host update only touches the optimizer states and the staging
    // buffer, the accelerator side only reads p16_device, so the two halves
    // of the step are independent until the barrier.
    std::future<void> update;
    if (state.config.overlap_threads) {
        update = std::async(std::launch::async, host_update);
    } else {
        host_update();
    }
    try {
        const ForwardBackward fb = forward_backward(model, batch, opt.micro_batches);
        trace.loss = fb.loss;
        trace.bytes_up = offload_gradients(model, fb.g16, state.incoming, ledger, step);
    } catch (...) {
        if (update.valid()) update.wait();
        throw;
    }
    if (update.valid()) update.get();

    // Barrier: the new parameters land before the next forward.
    trace.bytes_down = write_back(state.staging, model, ledger, step, opt.tile.tile_width);
    trace.optimizer_invoked = true;
    trace.optimizer_grad_step = state.pending_step;
    model.set_param_version(state.pending_step);

    std::swap(state.pending, state.incoming);
    state.pending_step = step;
    state.step = step;
    return trace;
}

BatchView batch_for_step(const Dataset& data, std::size_t batch_size, std::uint64_t step) {
    const BatchView all = data.view();
    if (batch_size == 0 || batch_size >= data.rows) return all;
    const std::size_t batches = (data.rows + batch_size - 1) / batch_size;
    const std::size_t k = static_cast<std::size_t>((step - 1) % batches);
    const std::size_t first = k * batch_size;
    return all.slice(first, std::min(batch_size, data.rows - first));
}

TrainingRun train(const ModelSpec& spec, std::span<const float> init, const Dataset& data, std::size_t steps,
                  const AdamHyper& h, const DpuConfig& dpu, const EngineOptions& opt) {
    if (steps < 1) throw Error(ErrorCode::InvalidArgument, "steps must be >= 1");
    h.validate();
    dpu.validate();
    opt.validate();

    ToyModel model(spec, init);
    OptimizerShard shard = OptimizerShard::from_params(init);

    TrainingRun run;
    run.mode = dpu.enabled ? TrainMode::Dpu : TrainMode::Sync;
    run.dpu = dpu;
    run.losses.reserve(steps);
    run.trace.reserve(steps);
    reserve_buffers(model, run.ledger, dpu.enabled);

    DpuState state;
    state.config = dpu;
    for (std::uint64_t s = 1; s <= steps; ++s) {
        const BatchView batch = batch_for_step(data, opt.batch_size, s);
        try {
            StepTrace t = dpu.enabled ? step_dpu(model, shard, batch, h, run.ledger, state, opt)
                                      : step_sync(model, shard, batch, h, run.ledger, s, opt);
            run.losses.push_back(t.loss);
            run.trace.push_back(t);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NonFiniteLoss) throw;
            run.diverged = true;
            break;
        }
    }

    release_buffers(model, run.ledger, dpu.enabled);
    run.steps = run.losses.size();
    run.final_params = shard.p32;
    run.final_p16 = model.p16_device();
    return run;
}

void check_divergence(const TrainingRun& run) {
    if (run.diverged) {
        throw Error(ErrorCode::Divergence, fmt::format("loss became non-finite at step {}", run.steps + 1));
    }
}

void write_csv(std::ostream& os, const TrainingRun& run) {
    os << "step,loss,bytes_down,bytes_up,optimizer_invoked\n";
    for (const StepTrace& t : run.trace) {
        fmt::print(os, "{},{:.9g},{},{},{}\n", t.step, t.loss, t.bytes_down, t.bytes_up,
                   t.optimizer_invoked ? 1 : 0);
    }
}

nlohmann::json to_json(const TrainingRun& run) {
    std::uint64_t down = 0;
    std::uint64_t up = 0;
    nlohmann::json skipped = nlohmann::json::array();
    for (const StepTrace& t : run.trace) {
        down += t.bytes_down;
        up += t.bytes_up;
        if (!t.optimizer_invoked) skipped.push_back(t.step);
    }
    return {{"schema_version", 1},
            {"mode", to_string(run.mode)},
            {"dpu", {{"enabled", run.dpu.enabled}, {"enable_after_steps", run.dpu.enable_after_steps}}},
            {"param_count", run.final_params.size()},
            {"steps", run.steps},
            {"diverged", run.diverged},
            {"final_loss", run.final_loss()},
            {"bytes_down", down},
            {"bytes_up", up},
            {"skipped_optimizer_steps", skipped},
            {"peak_accel_bytes", run.ledger.peak_accel_bytes()},
            {"peak_host_bytes", run.ledger.peak_host_bytes()}};
}

}  // namespace offloadlab
