// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Host-side mixed-precision Adam.
//
// The update applied to every element, with step >= 1:
//
//   m     = fma(g, 1 - beta1, beta1 * m)
//   v     = fma(g * g, 1 - beta2, beta2 * v)
//   denom = fma(sqrt(v), 1 / sqrt(1 - beta2^step), eps)
//   p     = fma(m / denom, -alpha / (1 - beta1^step), p)
//
// eps is added after the second-moment bias correction, not before it.
// There is no weight decay.
//
// Two implementations share this contract: a scalar reference and a tiled
// kernel that splits the index range across workers, processes each tile in
// unrolled lane groups and streams finished tiles back to the fp16 buffer
// while the next tile is being computed. Every element goes through the same
// operation sequence in both, so their outputs are bitwise equal for any
// tile or worker configuration.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "offloadlab/half.hpp"

namespace offloadlab {

struct AdamHyper {
    double alpha = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

/// Host-resident fp32 model states for a contiguous parameter range.
struct OptimizerShard {
    std::vector<float> p32;
    std::vector<float> m32;
    std::vector<float> v32;
    std::uint64_t step = 0;

    static OptimizerShard from_params(std::span<const float> params);

    std::size_t size() const { return p32.size(); }
    std::uint64_t state_bytes() const { return 12 * static_cast<std::uint64_t>(size()); }
    void check_lengths() const;

    friend bool operator==(const OptimizerShard&, const OptimizerShard&) = default;
};

struct TileConfig {
    std::size_t tile_width = 4096 * 8;  // elements per write-back tile
    std::size_t unroll_width = 8;       // lane groups per inner iteration
    std::size_t lane_width = 8;         // elements per lane group
    std::size_t worker_count = 1;

    void validate() const;
};

/// Both corrections for a given step, in the working precision.
template <typename Real>
struct BiasCorrection {
    Real step_size;       // -alpha / (1 - beta1^step)
    Real inv_sqrt_beta2;  // 1 / sqrt(1 - beta2^step)
};

BiasCorrection<double> bias_correction(const AdamHyper& h, std::uint64_t step);

/// Per-call constants in the working precision. Computed in double and
/// rounded once, so every kernel sees the same values.
template <typename Real>
struct AdamConstants {
    Real beta1;
    Real one_minus_beta1;
    Real beta2;
    Real one_minus_beta2;
    Real eps;
    BiasCorrection<Real> bias;

    static AdamConstants make(const AdamHyper& h, std::uint64_t step) {
        const BiasCorrection<double> bc = bias_correction(h, step);
        return {static_cast<Real>(h.beta1),
                static_cast<Real>(1.0 - h.beta1),
                static_cast<Real>(h.beta2),
                static_cast<Real>(1.0 - h.beta2),
                static_cast<Real>(h.eps),
                {static_cast<Real>(bc.step_size), static_cast<Real>(bc.inv_sqrt_beta2)}};
    }
};

/// Scalar reference, in place. `step` is the already-incremented counter.
/// Instantiated for float (the production precision) and double (for
/// checking the formula itself against hand-computed values).
template <typename Real>
void adam_reference_update(std::span<Real> p, std::span<Real> m, std::span<Real> v, std::span<const Real> g,
                           const AdamHyper& h, std::uint64_t step);

/// Applies one step to `shard` using fp32 gradients. The caller increments
/// shard.step beforehand.
OptimizerShard adam_step_reference(OptimizerShard shard, std::span<const float> g32, const AdamHyper& h);

/// The reference path for fp16 gradients: widen, update, narrow every p32
/// element into `out`.
void adam_reference_pipeline(OptimizerShard& shard, std::span<const Half> g16, const AdamHyper& h,
                             std::span<Half> out);

/// Called once per finished tile, in tile order, from the write-back thread.
using TileWrittenFn = std::function<void(std::size_t first, std::size_t count)>;

void adam_update_tiled(OptimizerShard& shard, std::span<const Half> g16, const AdamHyper& h, const TileConfig& t,
                       std::span<Half> out, const TileWrittenFn& on_tile = {});

OptimizerShard adam_step_tiled(OptimizerShard shard, std::span<const Half> g16, const AdamHyper& h,
                               const TileConfig& t, std::span<Half> out, const TileWrittenFn& on_tile = {});

struct BenchReport {
    std::size_t elements = 0;
    std::size_t steps = 0;
    TileConfig tile;
    double reference_secs = 0.0;
    double tiled_secs = 0.0;
    double speedup = 0.0;
    std::string checksum;  // FNV-1a of the final p32 bytes
};

/// Runs both paths on identical seeded inputs, checks bitwise equivalence
/// (EquivalenceFailure otherwise) and reports wall time.
BenchReport bench_adam(std::size_t elements, std::size_t steps, const TileConfig& t, std::uint64_t seed = 0x5EEDu);

/// Bit-pattern comparison of all three state vectors and the step counter.
bool bitwise_equal(const OptimizerShard& a, const OptimizerShard& b);
bool bitwise_equal(std::span<const float> a, std::span<const float> b);

std::string fnv1a_hex(std::span<const float> values);

nlohmann::json to_json(const TileConfig& t);
nlohmann::json to_json(const BenchReport& r);

}  // namespace offloadlab
