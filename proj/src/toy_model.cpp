// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "offloadlab/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "offloadlab/error.hpp"

namespace offloadlab {

std::string_view to_string(ModelKind k) {
    switch (k) {
        case ModelKind::LinearRegression: return "linreg";
        case ModelKind::LogisticRegression: return "logreg";
        case ModelKind::Mlp: return "mlp";
    }
    return "?";
}

ModelKind parse_model_kind(std::string_view name) {
    if (name == "linreg") return ModelKind::LinearRegression;
    if (name == "logreg") return ModelKind::LogisticRegression;
    if (name == "mlp") return ModelKind::Mlp;
    throw Error(ErrorCode::InvalidArgument, fmt::format("unknown model kind '{}'", name));
}

ModelSpec ModelSpec::linear(std::size_t features) { return {ModelKind::LinearRegression, {features, 1}}; }

ModelSpec ModelSpec::logistic(std::size_t features) { return {ModelKind::LogisticRegression, {features, 1}}; }

ModelSpec ModelSpec::mlp(std::vector<std::size_t> layer_sizes) { return {ModelKind::Mlp, std::move(layer_sizes)}; }

void ModelSpec::validate() const {
    if (layer_sizes.size() < 2) throw Error(ErrorCode::InvalidArgument, "a model needs input and output sizes");
    if (std::any_of(layer_sizes.begin(), layer_sizes.end(), [](std::size_t s) { return s == 0; })) {
        throw Error(ErrorCode::InvalidArgument, "layer sizes must be >= 1");
    }
    if (kind != ModelKind::Mlp && (layer_sizes.size() != 2 || layer_sizes[1] != 1)) {
        throw Error(ErrorCode::InvalidArgument, "regression models take layer sizes {d, 1}");
    }
}

std::size_t ModelSpec::param_count() const {
    switch (kind) {
        case ModelKind::LinearRegression: return input_dim();
        case ModelKind::LogisticRegression: return input_dim() + 1;
        case ModelKind::Mlp: break;
    }
    std::size_t total = 0;
    for (std::size_t l = 1; l < layer_sizes.size(); ++l) total += layer_sizes[l] * (layer_sizes[l - 1] + 1);
    return total;
}

std::vector<ParamGroup> ModelSpec::groups() const {
    if (kind != ModelKind::Mlp) return {{0, param_count()}};
    std::vector<ParamGroup> out;
    std::size_t first = 0;
    for (std::size_t l = 1; l < layer_sizes.size(); ++l) {
        const std::size_t count = layer_sizes[l] * (layer_sizes[l - 1] + 1);
        out.push_back({first, count});
        first += count;
    }
    return out;
}

BatchView BatchView::slice(std::size_t first, std::size_t count) const {
    if (first + count > rows) throw Error(ErrorCode::InvalidArgument, "batch slice out of range");
    return {x.subspan(first * features, count * features), y.subspan(first * targets, count * targets), count,
            features, targets};
}

BatchView Dataset::view() const { return {x, y, rows, features, targets}; }

Dataset make_linear_dataset(std::size_t rows, std::size_t features, std::uint64_t seed, float noise) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    std::vector<float> w(features);
    for (float& v : w) v = normal(rng);
    Dataset d{rows, features, 1, std::vector<float>(rows * features), std::vector<float>(rows)};
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < features; ++j) {
            d.x[r * features + j] = normal(rng);
            acc += static_cast<double>(d.x[r * features + j]) * w[j];
        }
        d.y[r] = static_cast<float>(acc) + noise * normal(rng);
    }
    return d;
}

Dataset make_blobs(std::size_t rows, std::size_t features, std::uint64_t seed, float mu) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    Dataset d{rows, features, 1, std::vector<float>(rows * features), std::vector<float>(rows)};
    for (std::size_t r = 0; r < rows; ++r) {
        const float label = static_cast<float>(r % 2);
        const float centre = label > 0.0f ? mu : -mu;
        for (std::size_t j = 0; j < features; ++j) d.x[r * features + j] = centre + normal(rng);
        d.y[r] = label;
    }
    return d;
}

Dataset make_regression_dataset(std::size_t rows, std::size_t features, std::size_t targets, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    std::vector<float> a(features * targets);
    for (float& v : a) v = normal(rng) / std::sqrt(static_cast<float>(features));
    Dataset d{rows, features, targets, std::vector<float>(rows * features), std::vector<float>(rows * targets)};
    for (float& v : d.x) v = normal(rng);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t t = 0; t < targets; ++t) {
            float dot = 0.0f;
            for (std::size_t j = 0; j < features; ++j) dot += d.x[r * features + j] * a[t * features + j];
            d.y[r * targets + t] = std::sin(dot);
        }
    }
    return d;
}

std::vector<float> initial_parameters(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::vector<float> params(spec.param_count(), 0.0f);
    if (spec.kind != ModelKind::Mlp) return params;
    std::mt19937_64 rng(seed);
    std::size_t offset = 0;
    for (std::size_t l = 1; l < spec.layer_sizes.size(); ++l) {
        const std::size_t in = spec.layer_sizes[l - 1];
        const std::size_t out = spec.layer_sizes[l];
        const float limit = std::sqrt(6.0f / static_cast<float>(in + out));
        std::uniform_real_distribution<float> uniform(-limit, limit);
        for (std::size_t i = 0; i < in * out; ++i) params[offset + i] = uniform(rng);
        offset += out * (in + 1);
    }
    return params;
}

namespace {

void check_batch(const ModelSpec& spec, std::span<const float> params, const BatchView& batch) {
    spec.validate();
    if (batch.rows == 0) throw Error(ErrorCode::EmptyBatch, "batch has no rows");
    if (params.size() != spec.param_count()) {
        throw Error(ErrorCode::LengthMismatch,
                    fmt::format("expected {} parameters, got {}", spec.param_count(), params.size()));
    }
    if (batch.features != spec.input_dim() || batch.targets != spec.output_dim() ||
        batch.x.size() != batch.rows * batch.features || batch.y.size() != batch.rows * batch.targets) {
        throw Error(ErrorCode::LengthMismatch, "batch shape does not match the model");
    }
}

float dot(std::span<const float> a, std::span<const float> b) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

GradientSums linear_regression(std::span<const float> w, const BatchView& batch) {
    const std::size_t d = batch.features;
    GradientSums out{0.0, std::vector<double>(d, 0.0), static_cast<double>(batch.rows)};
    double& loss = out.loss_sum;
    std::vector<double>& grad = out.grad_sum;
    for (std::size_t r = 0; r < batch.rows; ++r) {
        const auto x = batch.x.subspan(r * d, d);
        const float residual = dot(x, w) - batch.y[r];
        loss += static_cast<double>(residual) * residual;
        for (std::size_t j = 0; j < d; ++j) grad[j] += 2.0 * static_cast<double>(residual) * x[j];
    }
    return out;
}

GradientSums logistic_regression(std::span<const float> params, const BatchView& batch) {
    const std::size_t d = batch.features;
    const auto w = params.first(d);
    const float bias = params[d];
    GradientSums out{0.0, std::vector<double>(d + 1, 0.0), static_cast<double>(batch.rows)};
    double& loss = out.loss_sum;
    std::vector<double>& grad = out.grad_sum;
    for (std::size_t r = 0; r < batch.rows; ++r) {
        const auto x = batch.x.subspan(r * d, d);
        const float z = dot(x, w) + bias;
        const float y = batch.y[r];
        // log(1 + e^z) - y z, evaluated without overflow.
        loss += static_cast<double>(std::max(z, 0.0f) + std::log1p(std::exp(-std::abs(z))) - y * z);
        const float sigmoid = 1.0f / (1.0f + std::exp(-z));
        const double err = static_cast<double>(sigmoid - y);
        for (std::size_t j = 0; j < d; ++j) grad[j] += err * x[j];
        grad[d] += err;
    }
    return out;
}

GradientSums mlp(const ModelSpec& spec, std::span<const float> params, const BatchView& batch) {
    const auto& sizes = spec.layer_sizes;
    const std::size_t layers = sizes.size() - 1;
    std::vector<std::size_t> offsets(layers);
    for (std::size_t l = 0, off = 0; l < layers; ++l) {
        offsets[l] = off;
        off += sizes[l + 1] * (sizes[l] + 1);
    }

    GradientSums sums{0.0, std::vector<double>(params.size(), 0.0),
                      static_cast<double>(batch.rows) * static_cast<double>(sizes.back())};
    double& loss = sums.loss_sum;
    std::vector<double>& grad = sums.grad_sum;
    std::vector<std::vector<float>> act(layers + 1);
    for (std::size_t l = 0; l <= layers; ++l) act[l].resize(sizes[l]);
    std::vector<float> delta;
    std::vector<float> next_delta;

    for (std::size_t r = 0; r < batch.rows; ++r) {
        std::copy_n(batch.x.begin() + static_cast<std::ptrdiff_t>(r * batch.features), batch.features,
                    act[0].begin());
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t in = sizes[l];
            const std::size_t out = sizes[l + 1];
            const float* weights = params.data() + offsets[l];
            const float* bias = weights + out * in;
            for (std::size_t o = 0; o < out; ++o) {
                const float z = dot(act[l], std::span<const float>(weights + o * in, in)) + bias[o];
                act[l + 1][o] = l + 1 == layers ? z : std::tanh(z);
            }
        }

        const std::size_t targets = sizes.back();
        delta.assign(targets, 0.0f);
        for (std::size_t t = 0; t < targets; ++t) {
            const float diff = act[layers][t] - batch.y[r * targets + t];
            loss += static_cast<double>(diff) * diff;
            delta[t] = 2.0f * diff;
        }

        for (std::size_t l = layers; l-- > 0;) {
            const std::size_t in = sizes[l];
            const std::size_t out = sizes[l + 1];
            const float* weights = params.data() + offsets[l];
            double* gw = grad.data() + offsets[l];
            double* gb = gw + out * in;
            for (std::size_t o = 0; o < out; ++o) {
                for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += static_cast<double>(delta[o]) * act[l][i];
                gb[o] += delta[o];
            }
            if (l == 0) break;
            next_delta.assign(in, 0.0f);
            for (std::size_t o = 0; o < out; ++o) {
                for (std::size_t i = 0; i < in; ++i) next_delta[i] += weights[o * in + i] * delta[o];
            }
            for (std::size_t i = 0; i < in; ++i) next_delta[i] *= 1.0f - act[l][i] * act[l][i];
            delta.swap(next_delta);
        }
    }

    return sums;
}

}  // namespace

GradientSums gradient_sums(const ModelSpec& spec, std::span<const float> params, const BatchView& batch) {
    check_batch(spec, params, batch);
    switch (spec.kind) {
        case ModelKind::LinearRegression: return linear_regression(params, batch);
        case ModelKind::LogisticRegression: return logistic_regression(params, batch);
        case ModelKind::Mlp: break;
    }
    return mlp(spec, params, batch);
}

LossAndGradient finalize(const GradientSums& sums) {
    LossAndGradient out{static_cast<float>(sums.loss_sum / sums.normalizer), std::vector<float>(sums.grad_sum.size())};
    for (std::size_t i = 0; i < out.gradient.size(); ++i) {
        out.gradient[i] = static_cast<float>(sums.grad_sum[i] / sums.normalizer);
    }
    return out;
}

LossAndGradient loss_and_gradient(const ModelSpec& spec, std::span<const float> params, const BatchView& batch) {
    return finalize(gradient_sums(spec, params, batch));
}

float loss_only(const ModelSpec& spec, std::span<const float> params, const BatchView& batch) {
    return loss_and_gradient(spec, params, batch).loss;
}

ToyModel::ToyModel(ModelSpec spec, std::span<const float> initial_params) : spec_(std::move(spec)) {
    spec_.validate();
    if (initial_params.size() != spec_.param_count()) {
        throw Error(ErrorCode::LengthMismatch, "initial parameter count does not match the model");
    }
    p16_device_ = narrow(initial_params);
}

LossAndGradient device_gradients(const ToyModel& model, const BatchView& batch, std::size_t micro_batches) {
    const std::vector<float> params = widen(model.p16_device());
    if (micro_batches <= 1 || batch.rows <= 1) return loss_and_gradient(model.spec(), params, batch);

    const std::size_t parts = std::min(micro_batches, batch.rows);
    std::vector<double> grad(params.size(), 0.0);
    double loss = 0.0;
    std::size_t first = 0;
    for (std::size_t k = 0; k < parts; ++k) {
        const std::size_t count = batch.rows / parts + (k < batch.rows % parts ? 1 : 0);
        const LossAndGradient part = loss_and_gradient(model.spec(), params, batch.slice(first, count));
        const double weight = static_cast<double>(count) / static_cast<double>(batch.rows);
        loss += weight * part.loss;
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += weight * part.gradient[i];
        first += count;
    }
    LossAndGradient out{static_cast<float>(loss), std::vector<float>(params.size())};
    for (std::size_t i = 0; i < grad.size(); ++i) out.gradient[i] = static_cast<float>(grad[i]);
    return out;
}

ForwardBackward forward_backward(const ToyModel& model, const BatchView& batch, std::size_t micro_batches) {
    LossAndGradient lg = device_gradients(model, batch, micro_batches);
    if (!std::isfinite(lg.loss)) throw Error(ErrorCode::NonFiniteLoss, fmt::format("loss is {}", lg.loss));
    return {lg.loss, narrow(lg.gradient)};
}

}  // namespace offloadlab
