// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "offloadlab/dp_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <future>
#include <map>
#include <optional>

#include <fmt/format.h>

#include "offloadlab/error.hpp"

namespace offloadlab {

std::vector<IndexRange> partition_indices(std::size_t m, std::size_t k) {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "worker count must be >= 1");
    std::vector<IndexRange> out(k);
    std::size_t first = 0;
    for (std::size_t r = 0; r < k; ++r) {
        out[r] = {first, m / k + (r < m % k ? 1 : 0)};
        first += out[r].count;
    }
    return out;
}

template <typename T>
std::vector<std::vector<T>> reduce_scatter(const std::vector<std::vector<T>>& grads,
                                           const std::vector<IndexRange>& ranges) {
    if (grads.empty()) throw Error(ErrorCode::InvalidArgument, "reduce_scatter needs at least one input");
    const std::size_t m = grads.front().size();
    for (const auto& g : grads) {
        if (g.size() != m) throw Error(ErrorCode::LengthMismatch, "reduce_scatter inputs differ in length");
    }
    if (!ranges.empty() && ranges.back().end() != m) {
        throw Error(ErrorCode::LengthMismatch, "ranges do not cover the gradient");
    }
    const double k = static_cast<double>(grads.size());
    std::vector<std::vector<T>> shards(ranges.size());
    for (std::size_t r = 0; r < ranges.size(); ++r) {
        shards[r].resize(ranges[r].count);
        for (std::size_t i = 0; i < ranges[r].count; ++i) {
            double sum = 0.0;
            for (const auto& g : grads) sum += g[ranges[r].first + i];
            shards[r][i] = static_cast<T>(sum / k);
        }
    }
    return shards;
}

template std::vector<std::vector<float>> reduce_scatter(const std::vector<std::vector<float>>&,
                                                        const std::vector<IndexRange>&);
template std::vector<std::vector<double>> reduce_scatter(const std::vector<std::vector<double>>&,
                                                         const std::vector<IndexRange>&);

std::vector<WorkerState> make_workers(const ModelSpec& spec, std::span<const float> init, std::size_t k) {
    const auto ranges = partition_indices(init.size(), k);
    std::vector<WorkerState> workers;
    workers.reserve(k);
    for (std::size_t r = 0; r < k; ++r) {
        workers.push_back(WorkerState{r, ranges[r], ToyModel(spec, init),
                                      OptimizerShard::from_params(init.subspan(ranges[r].first, ranges[r].count)),
                                      HalfBuffer(ranges[r].count), DeviceLedger{}});
    }
    return workers;
}

namespace {

template <typename Fn>
void for_each_worker(std::size_t k, bool parallel, const Fn& fn) {
    if (!parallel || k == 1) {
        for (std::size_t r = 0; r < k; ++r) fn(r);
        return;
    }
    std::vector<std::future<void>> done;
    done.reserve(k);
    for (std::size_t r = 0; r < k; ++r) done.push_back(std::async(std::launch::async, fn, r));
    for (auto& f : done) f.wait();
    for (auto& f : done) f.get();
}

}  // namespace

float dp_step(std::vector<WorkerState>& workers, const BatchView& global_batch, const AdamHyper& h,
              std::uint64_t step, const DpOptions& opt) {
    const std::size_t k = workers.size();
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "dp_step needs at least one worker");
    if (global_batch.rows == 0) throw Error(ErrorCode::EmptyBatch, "global batch has no rows");
    opt.engine.validate();
    const std::size_t m = workers.front().replica.param_count();
    const auto rows = partition_indices(global_batch.rows, k);

    // Forward/backward on each worker's slice, kept as double sums.
    std::vector<GradientSums> sums(k);
    for_each_worker(k, opt.parallel, [&](std::size_t r) {
        sums[r].grad_sum.assign(m, 0.0);
        if (rows[r].count == 0) return;
        const std::vector<float> params = widen(workers[r].replica.p16_device());
        const BatchView slice = global_batch.slice(rows[r].first, rows[r].count);
        for (const IndexRange& micro : partition_indices(slice.rows, std::min(opt.engine.micro_batches, slice.rows))) {
            const GradientSums part = gradient_sums(workers[r].replica.spec(), params, slice.slice(micro.first, micro.count));
            sums[r].loss_sum += part.loss_sum;
            sums[r].normalizer += part.normalizer;
            for (std::size_t i = 0; i < m; ++i) sums[r].grad_sum[i] += part.grad_sum[i];
        }
    });

    double normalizer = 0.0;
    double loss_sum = 0.0;
    for (const GradientSums& s : sums) {
        normalizer += s.normalizer;
        loss_sum += s.loss_sum;
    }
    const auto loss = static_cast<float>(loss_sum / normalizer);
    if (!std::isfinite(loss)) throw Error(ErrorCode::NonFiniteLoss, fmt::format("loss is {}", loss));

    // Scaled so the mean over workers is the full-batch mean gradient. With
    // one worker this is sum * 1 / normalizer, the single-device value.
    std::vector<std::vector<double>> contributions(k);
    for (std::size_t r = 0; r < k; ++r) {
        contributions[r] = std::move(sums[r].grad_sum);
        for (double& g : contributions[r]) g = g * static_cast<double>(k) / normalizer;
    }
    std::vector<IndexRange> ranges(k);
    for (std::size_t r = 0; r < k; ++r) ranges[r] = workers[r].range;
    const auto averaged = reduce_scatter(contributions, ranges);
    std::vector<std::vector<float>> shards(k);
    for (std::size_t r = 0; r < k; ++r) shards[r].assign(averaged[r].begin(), averaged[r].end());

    // Each worker offloads and updates only its own partition.
    for_each_worker(k, opt.parallel, [&](std::size_t r) {
        WorkerState& w = workers[r];
        const std::uint64_t bytes = 2 * static_cast<std::uint64_t>(w.range.count);
        if (bytes == 0) return;
        w.g16_partition = narrow(shards[r]);
        w.ledger.accel_alloc(bytes);
        w.ledger.record(step, Direction::AccelToHost, bytes, TransferTag::Gradient);
        w.ledger.accel_free(bytes);

        ++w.shard.step;
        const std::span<Half> own(w.replica.p16_device().data() + w.range.first, w.range.count);
        adam_update_tiled(w.shard, w.g16_partition, h, opt.engine.tile, own, [&](std::size_t, std::size_t count) {
            w.ledger.record(step, Direction::HostToAccel, 2 * static_cast<std::uint64_t>(count),
                            TransferTag::Parameter);
        });
    });

    // Parameter gather as a sequence of broadcasts, one per owner.
    for (std::size_t r = 0; r < k; ++r) {
        const WorkerState& src = workers[r];
        if (src.range.count == 0) continue;
        const auto* from = src.replica.p16_device().data() + src.range.first;
        for (std::size_t peer = 0; peer < k; ++peer) {
            if (peer == r) continue;
            std::copy_n(from, src.range.count, workers[peer].replica.p16_device().data() + src.range.first);
            workers[r].ledger.record(step, Direction::AccelToAccel, 2 * static_cast<std::uint64_t>(src.range.count),
                                     TransferTag::Parameter);
        }
    }
    for (WorkerState& w : workers) w.replica.set_param_version(step);
    return loss;
}

bool replicas_consistent(const std::vector<WorkerState>& workers) {
    if (workers.empty()) return true;
    const HalfBuffer& first = workers.front().replica.p16_device();
    return std::all_of(workers.begin() + 1, workers.end(), [&](const WorkerState& w) {
        const HalfBuffer& other = w.replica.p16_device();
        return other.size() == first.size() &&
               std::memcmp(other.data(), first.data(), first.size() * sizeof(Half)) == 0;
    });
}

DpRun run_dp(const ModelSpec& spec, std::span<const float> init, const Dataset& data, std::size_t steps,
             std::size_t k, const AdamHyper& h, const DpOptions& opt) {
    if (steps < 1) throw Error(ErrorCode::InvalidArgument, "steps must be >= 1");
    h.validate();
    opt.engine.validate();
    std::vector<WorkerState> workers = make_workers(spec, init, k);
    const std::uint64_t m = init.size();
    for (WorkerState& w : workers) {
        w.ledger.accel_alloc(2 * m);
        w.ledger.host_alloc(14 * static_cast<std::uint64_t>(w.range.count));
    }

    DpRun run;
    run.report.workers = k;
    run.workers.resize(k);
    for (std::uint64_t s = 1; s <= steps; ++s) {
        const BatchView batch = batch_for_step(data, opt.engine.batch_size, s);
        float loss = 0.0f;
        try {
            loss = dp_step(workers, batch, h, s, opt);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NonFiniteLoss) throw;
            run.report.diverged = true;
            break;
        }
        run.report.replica_consistent = run.report.replica_consistent && replicas_consistent(workers);
        for (std::size_t r = 0; r < k; ++r) {
            StepTrace t;
            t.step = s;
            t.loss = loss;
            t.optimizer_invoked = workers[r].range.count > 0;
            t.optimizer_grad_step = t.optimizer_invoked ? s : 0;
            t.params_version_used = s - 1;
            run.workers[r].losses.push_back(loss);
            run.workers[r].trace.push_back(t);
        }
    }

    // Per-step traffic, per worker and summed over workers.
    std::map<std::uint64_t, StepTraffic> total;
    for (std::size_t r = 0; r < k; ++r) {
        WorkerState& w = workers[r];
        const auto per_step = w.ledger.per_step();
        for (StepTrace& t : run.workers[r].trace) {
            const auto it = per_step.find(t.step);
            if (it == per_step.end()) continue;
            t.bytes_down = it->second.host_to_accel;
            t.bytes_up = it->second.accel_to_host;
            StepTraffic& sum = total[t.step];
            sum.host_to_accel += it->second.host_to_accel;
            sum.accel_to_host += it->second.accel_to_host;
            sum.fabric += it->second.fabric;
        }
        w.ledger.accel_free(2 * m);
        w.ledger.host_free(14 * static_cast<std::uint64_t>(w.range.count));
    }
    std::optional<std::uint64_t> first_link;
    for (const auto& [step, traffic] : total) {
        if (first_link && *first_link != traffic.host_link()) run.report.host_link_constant = false;
        if (!first_link) first_link = traffic.host_link();
        run.report.host_link_bytes_per_step = std::max(run.report.host_link_bytes_per_step, traffic.host_link());
        run.report.fabric_bytes_per_step = std::max(run.report.fabric_bytes_per_step, traffic.fabric);
    }

    for (std::size_t r = 0; r < k; ++r) {
        WorkerState& w = workers[r];
        TrainingRun& out = run.workers[r];
        out.mode = TrainMode::Sync;
        out.steps = out.losses.size();
        out.diverged = run.report.diverged;
        out.final_params = w.shard.p32;
        out.final_p16 = w.replica.p16_device();
        run.report.max_worker_host_bytes = std::max(run.report.max_worker_host_bytes, w.ledger.peak_host_bytes());
        run.report.total_host_bytes += w.ledger.peak_host_bytes();
        run.final_params.insert(run.final_params.end(), w.shard.p32.begin(), w.shard.p32.end());
        out.ledger = std::move(w.ledger);
    }
    run.report.steps = run.workers.front().steps;
    run.final_p16 = run.workers.front().final_p16;
    return run;
}

double relative_distance(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "relative_distance length mismatch");
    double diff = 0.0;
    double norm = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        diff += d * d;
        norm += static_cast<double>(b[i]) * b[i];
    }
    if (norm == 0.0) return diff == 0.0 ? 0.0 : INFINITY;
    return std::sqrt(diff / norm);
}

nlohmann::json to_json(const DpReport& r) {
    return {{"schema_version", 1},
            {"K", r.workers},
            {"steps", r.steps},
            {"host_link_bytes_per_step", r.host_link_bytes_per_step},
            {"host_link_constant", r.host_link_constant},
            {"fabric_bytes_per_step", r.fabric_bytes_per_step},
            {"max_worker_host_bytes", r.max_worker_host_bytes},
            {"total_host_bytes", r.total_host_bytes},
            {"replica_consistent", r.replica_consistent},
            {"diverged", r.diverged}};
}

void write_worker_csv(std::ostream& os, const TrainingRun& worker) { write_csv(os, worker); }

}  // namespace offloadlab
