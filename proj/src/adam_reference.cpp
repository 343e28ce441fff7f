// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

// Scalar reference Adam. Built with vectorization disabled.

#include <cmath>
#include <cstring>

#include "offloadlab/adam.hpp"
#include "offloadlab/error.hpp"

namespace offloadlab {

void AdamHyper::validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw Error(ErrorCode::InvalidArgument, "alpha must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw Error(ErrorCode::InvalidArgument, "beta1 must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw Error(ErrorCode::InvalidArgument, "beta2 must be in [0, 1)");
    if (!(eps > 0.0) || !std::isfinite(eps)) throw Error(ErrorCode::InvalidArgument, "eps must be > 0");
}

void TileConfig::validate() const {
    if (tile_width < 1 || unroll_width < 1 || lane_width < 1 || worker_count < 1) {
        throw Error(ErrorCode::InvalidTileConfig, "tile_width, unroll_width, lane_width and worker_count must be >= 1");
    }
}

OptimizerShard OptimizerShard::from_params(std::span<const float> params) {
    OptimizerShard s;
    s.p32.assign(params.begin(), params.end());
    s.m32.assign(params.size(), 0.0f);
    s.v32.assign(params.size(), 0.0f);
    return s;
}

void OptimizerShard::check_lengths() const {
    if (m32.size() != p32.size() || v32.size() != p32.size()) {
        throw Error(ErrorCode::LengthMismatch, "p32, m32 and v32 must have the same length");
    }
}

BiasCorrection<double> bias_correction(const AdamHyper& h, std::uint64_t step) {
    if (step == 0) throw Error(ErrorCode::StepZero, "step must be incremented before the update");
    const double s = static_cast<double>(step);
    return {-h.alpha / (1.0 - std::pow(h.beta1, s)), 1.0 / std::sqrt(1.0 - std::pow(h.beta2, s))};
}

template <typename Real>
void adam_reference_update(std::span<Real> p, std::span<Real> m, std::span<Real> v, std::span<const Real> g,
                           const AdamHyper& h, std::uint64_t step) {
    h.validate();
    const std::size_t n = p.size();
    if (m.size() != n || v.size() != n || g.size() != n) {
        throw Error(ErrorCode::LengthMismatch, "gradient and state lengths differ");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(p[i]) || !std::isfinite(m[i]) || !std::isfinite(v[i]) || !std::isfinite(g[i])) {
            throw Error(ErrorCode::NonFiniteInput, "non-finite value at index " + std::to_string(i));
        }
    }
    const auto c = AdamConstants<Real>::make(h, step);
    for (std::size_t i = 0; i < n; ++i) {
        const Real grad = g[i];
        m[i] = std::fma(grad, c.one_minus_beta1, c.beta1 * m[i]);
        v[i] = std::fma(grad * grad, c.one_minus_beta2, c.beta2 * v[i]);
        const Real denom = std::fma(std::sqrt(v[i]), c.bias.inv_sqrt_beta2, c.eps);
        p[i] = std::fma(m[i] / denom, c.bias.step_size, p[i]);
    }
}

template void adam_reference_update<float>(std::span<float>, std::span<float>, std::span<float>,
                                           std::span<const float>, const AdamHyper&, std::uint64_t);
template void adam_reference_update<double>(std::span<double>, std::span<double>, std::span<double>,
                                            std::span<const double>, const AdamHyper&, std::uint64_t);

OptimizerShard adam_step_reference(OptimizerShard shard, std::span<const float> g32, const AdamHyper& h) {
    shard.check_lengths();
    adam_reference_update<float>(shard.p32, shard.m32, shard.v32, g32, h, shard.step);
    return shard;
}

void adam_reference_pipeline(OptimizerShard& shard, std::span<const Half> g16, const AdamHyper& h,
                             std::span<Half> out) {
    shard.check_lengths();
    if (g16.size() != shard.size() || out.size() != shard.size()) {
        throw Error(ErrorCode::LengthMismatch, "gradient/output length differs from the shard");
    }
    std::vector<float> g32(g16.size());
    for (std::size_t i = 0; i < g16.size(); ++i) g32[i] = half_to_float(g16[i]);
    adam_reference_update<float>(shard.p32, shard.m32, shard.v32, g32, h, shard.step);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = float_to_half(shard.p32[i]);
}

bool bitwise_equal(std::span<const float> a, std::span<const float> b) {
    return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size_bytes()) == 0);
}

bool bitwise_equal(const OptimizerShard& a, const OptimizerShard& b) {
    return a.step == b.step && bitwise_equal(a.p32, b.p32) && bitwise_equal(a.m32, b.m32) &&
           bitwise_equal(a.v32, b.v32);
}

}  // namespace offloadlab
