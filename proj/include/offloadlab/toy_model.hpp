// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Small models with hand-written gradients, used as the accelerator-side
// workload of the offload engine.
//
// Parameter layout is flat. Linear regression has d weights and no bias.
// Logistic regression has d weights followed by one bias. An MLP stores, per
// layer, the row-major (out x in) weight matrix followed by the out biases;
// hidden layers use tanh and the output layer is linear.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "offloadlab/half.hpp"

namespace offloadlab {

enum class ModelKind : std::uint8_t { LinearRegression, LogisticRegression, Mlp };

std::string_view to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view name);  // linreg | logreg | mlp

struct ParamGroup {
    std::size_t first;
    std::size_t count;
};

struct ModelSpec {
    ModelKind kind = ModelKind::LinearRegression;
    std::vector<std::size_t> layer_sizes;  // {d, 1} for the regressions

    static ModelSpec linear(std::size_t features);
    static ModelSpec logistic(std::size_t features);
    static ModelSpec mlp(std::vector<std::size_t> layer_sizes);

    void validate() const;
    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.back(); }
    std::size_t param_count() const;
    /// One group per layer, in forward order.
    std::vector<ParamGroup> groups() const;
};

struct BatchView {
    std::span<const float> x;  // rows x features, row-major
    std::span<const float> y;  // rows x targets, row-major
    std::size_t rows = 0;
    std::size_t features = 0;
    std::size_t targets = 0;

    BatchView slice(std::size_t first, std::size_t count) const;
};

struct Dataset {
    std::size_t rows = 0;
    std::size_t features = 0;
    std::size_t targets = 1;
    std::vector<float> x;
    std::vector<float> y;

    BatchView view() const;
};

/// y = X w with w drawn from N(0, 1) and X from N(0, 1), plus optional noise.
Dataset make_linear_dataset(std::size_t rows, std::size_t features, std::uint64_t seed, float noise = 0.0f);

/// Two Gaussian blobs with unit variance centred at -mu*1 (label 0) and +mu*1
/// (label 1), alternating labels by row.
Dataset make_blobs(std::size_t rows, std::size_t features, std::uint64_t seed, float mu = 0.5f);

/// Smooth nonlinear targets for an MLP: y_j = sin(x . a_j).
Dataset make_regression_dataset(std::size_t rows, std::size_t features, std::size_t targets, std::uint64_t seed);

/// Zeros for the regressions, scaled uniform (Glorot) weights and zero
/// biases for an MLP.
std::vector<float> initial_parameters(const ModelSpec& spec, std::uint64_t seed);

struct LossAndGradient {
    float loss = 0.0f;
    std::vector<float> gradient;
};

/// Unnormalized per-batch sums: the loss and gradient are these divided by
/// `normalizer` (rows, times outputs for an MLP). Sums over disjoint row
/// ranges add up to the sums of their union up to double rounding.
struct GradientSums {
    double loss_sum = 0.0;
    std::vector<double> grad_sum;
    double normalizer = 0.0;
};

GradientSums gradient_sums(const ModelSpec& spec, std::span<const float> params, const BatchView& batch);
LossAndGradient finalize(const GradientSums& sums);

/// Mean loss over the batch and its exact gradient, in fp32 with double
/// accumulation across rows. Throws EmptyBatch or LengthMismatch.
LossAndGradient loss_and_gradient(const ModelSpec& spec, std::span<const float> params, const BatchView& batch);
float loss_only(const ModelSpec& spec, std::span<const float> params, const BatchView& batch);

/// Accelerator-side model. p16_device always holds the last written-back
/// parameters; param_version is the last training step whose gradient is
/// reflected in them (0 before any update).
class ToyModel {
public:
    ToyModel(ModelSpec spec, std::span<const float> initial_params);

    const ModelSpec& spec() const { return spec_; }
    std::size_t param_count() const { return p16_device_.size(); }
    std::uint64_t p16_bytes() const { return 2 * static_cast<std::uint64_t>(param_count()); }

    HalfBuffer& p16_device() { return p16_device_; }
    const HalfBuffer& p16_device() const { return p16_device_; }

    std::uint64_t param_version() const { return param_version_; }
    void set_param_version(std::uint64_t v) { param_version_ = v; }

private:
    ModelSpec spec_;
    HalfBuffer p16_device_;
    std::uint64_t param_version_ = 0;
};

/// Gradients from the widened device parameters, still in fp32, averaged
/// over `micro_batches` contiguous slices of the batch weighted by row count.
LossAndGradient device_gradients(const ToyModel& model, const BatchView& batch, std::size_t micro_batches = 1);

struct ForwardBackward {
    float loss = 0.0f;
    HalfBuffer g16;
};

/// device_gradients narrowed to fp16. Throws NonFiniteLoss.
ForwardBackward forward_backward(const ToyModel& model, const BatchView& batch, std::size_t micro_batches = 1);

}  // namespace offloadlab
