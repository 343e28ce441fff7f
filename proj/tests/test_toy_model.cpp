// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "offloadlab/error.hpp"
#include "offloadlab/toy_model.hpp"
#include "toy_oracle.hpp"

using namespace offloadlab;

TEST(ToyModel, LinearRegressionClosedForm) {
    const Dataset d{2, 1, 1, {1.0f, 2.0f}, {2.0f, 4.0f}};
    const ModelSpec spec = ModelSpec::linear(1);
    const LossAndGradient lg = loss_and_gradient(spec, std::vector<float>{0.0f}, d.view());
    EXPECT_FLOAT_EQ(lg.loss, 10.0f);
    // 2 X^T (X p - y) / n = 2 * (1 * -2 + 2 * -4) / 2
    EXPECT_FLOAT_EQ(lg.gradient[0], -10.0f);

    const ToyModel model(spec, std::vector<float>{0.0f});
    const ForwardBackward fb = forward_backward(model, d.view());
    EXPECT_FLOAT_EQ(fb.loss, 10.0f);
    EXPECT_EQ(fb.g16[0], float_to_half(-10.0f));
}

TEST(ToyModel, GradientVanishesAtLeastSquaresOptimum) {
    const Dataset d{2, 1, 1, {1.0f, 2.0f}, {2.0f, 4.0f}};
    const ToyModel model(ModelSpec::linear(1), std::vector<float>{2.0f});
    const ForwardBackward fb = forward_backward(model, d.view());
    EXPECT_EQ(fb.loss, 0.0f);
    EXPECT_EQ(half_to_float(fb.g16[0]), 0.0f);

    // Multi-feature noiseless data: the generating weights are the optimum.
    const Dataset lin = make_linear_dataset(64, 4, 3);
    std::vector<float> w(4);
    {
        // Recover w by solving the normal equations in double.
        std::vector<double> a(16, 0.0), b(4, 0.0);
        for (std::size_t r = 0; r < lin.rows; ++r) {
            for (std::size_t i = 0; i < 4; ++i) {
                b[i] += lin.x[r * 4 + i] * static_cast<double>(lin.y[r]);
                for (std::size_t j = 0; j < 4; ++j) a[i * 4 + j] += lin.x[r * 4 + i] * static_cast<double>(lin.x[r * 4 + j]);
            }
        }
        for (std::size_t c = 0; c < 4; ++c) {
            for (std::size_t r = c + 1; r < 4; ++r) {
                const double f = a[r * 4 + c] / a[c * 4 + c];
                for (std::size_t k = c; k < 4; ++k) a[r * 4 + k] -= f * a[c * 4 + k];
                b[r] -= f * b[c];
            }
        }
        std::vector<double> x(4);
        for (std::size_t r = 4; r-- > 0;) {
            double s = b[r];
            for (std::size_t k = r + 1; k < 4; ++k) s -= a[r * 4 + k] * x[k];
            x[r] = s / a[r * 4 + r];
            w[r] = static_cast<float>(x[r]);
        }
    }
    const LossAndGradient lg = loss_and_gradient(ModelSpec::linear(4), w, lin.view());
    for (float g : lg.gradient) EXPECT_NEAR(g, 0.0f, 1e-5f);
}

TEST(ToyModel, AnalyticGradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(77);
    for (int instance = 0; instance < 100; ++instance) {
        const oracle::Instance inst = oracle::random_instance(rng, instance % 3);
        const LossAndGradient lg = loss_and_gradient(inst.spec, inst.params, inst.data.view());
        const std::vector<double> fd = oracle::central_differences(inst, 1e-3);
        EXPECT_LE(oracle::relative_error(lg.gradient, fd), 1e-4) << "instance " << instance;
        const double exact = oracle::loss(inst.spec, oracle::to_double(inst.params), inst.data);
        EXPECT_NEAR(lg.loss, exact, 1e-5 * std::max(1.0, std::abs(exact))) << "instance " << instance;
    }
}

TEST(ToyModel, MicroBatchesAverageToTheFullBatch) {
    const Dataset d = make_regression_dataset(37, 3, 2, 5);
    const ModelSpec spec = ModelSpec::mlp({3, 5, 2});
    const ToyModel model(spec, initial_parameters(spec, 5));
    const LossAndGradient full = device_gradients(model, d.view(), 1);
    for (std::size_t parts : {2u, 5u, 37u, 100u}) {
        const LossAndGradient split = device_gradients(model, d.view(), parts);
        EXPECT_NEAR(split.loss, full.loss, 1e-6f);
        EXPECT_LE(oracle::relative_error(split.gradient, oracle::to_double(full.gradient)), 1e-6);
    }
}

TEST(ToyModel, GradientSumsAreAdditiveOverRows) {
    const Dataset d = make_blobs(20, 3, 9);
    const ModelSpec spec = ModelSpec::logistic(3);
    const std::vector<float> p = {0.3f, -0.2f, 0.1f, 0.05f};
    const GradientSums all = gradient_sums(spec, p, d.view());
    const GradientSums a = gradient_sums(spec, p, d.view().slice(0, 7));
    const GradientSums b = gradient_sums(spec, p, d.view().slice(7, 13));
    EXPECT_DOUBLE_EQ(a.normalizer + b.normalizer, all.normalizer);
    EXPECT_NEAR(a.loss_sum + b.loss_sum, all.loss_sum, 1e-12);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(a.grad_sum[i] + b.grad_sum[i], all.grad_sum[i], 1e-12);
}

TEST(ToyModel, SpecsAndGroups) {
    EXPECT_EQ(ModelSpec::linear(5).param_count(), 5u);
    EXPECT_EQ(ModelSpec::logistic(5).param_count(), 6u);
    const ModelSpec mlp = ModelSpec::mlp({4, 8, 3});
    EXPECT_EQ(mlp.param_count(), 8u * 5 + 3u * 9);
    const auto groups = mlp.groups();
    ASSERT_EQ(groups.size(), 2u);
    EXPECT_EQ(groups[0].first, 0u);
    EXPECT_EQ(groups[0].count, 40u);
    EXPECT_EQ(groups[1].first, 40u);
    EXPECT_EQ(groups[1].count, 27u);
    EXPECT_EQ(ModelSpec::logistic(5).groups().size(), 1u);

    EXPECT_EQ(parse_model_kind("mlp"), ModelKind::Mlp);
    EXPECT_EQ(to_string(ModelKind::LinearRegression), "linreg");
    EXPECT_THROW(parse_model_kind("cnn"), Error);
    EXPECT_THROW(ModelSpec::mlp({4}).validate(), Error);
    EXPECT_THROW(ModelSpec::mlp({4, 0, 1}).validate(), Error);
    EXPECT_THROW((ModelSpec{ModelKind::LinearRegression, {3, 2}}.validate()), Error);
}

TEST(ToyModel, Errors) {
    const ModelSpec spec = ModelSpec::linear(2);
    const Dataset d = make_linear_dataset(4, 2, 1);
    auto code_of = [](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::IoError;
    };
    EXPECT_EQ(code_of([&] { loss_and_gradient(spec, std::vector<float>{0, 0}, d.view().slice(0, 0)); }),
              ErrorCode::EmptyBatch);
    EXPECT_EQ(code_of([&] { loss_and_gradient(spec, std::vector<float>{0}, d.view()); }), ErrorCode::LengthMismatch);
    EXPECT_EQ(code_of([&] { loss_and_gradient(ModelSpec::linear(3), std::vector<float>{0, 0, 0}, d.view()); }),
              ErrorCode::LengthMismatch);
    EXPECT_EQ(code_of([&] { ToyModel(spec, std::vector<float>{0}); }), ErrorCode::LengthMismatch);
    EXPECT_THROW(d.view().slice(3, 2), Error);

    // Parameters that overflow fp16 make the loss non-finite.
    const ToyModel huge(spec, std::vector<float>{1e6f, 0.0f});
    EXPECT_EQ(code_of([&] { forward_backward(huge, d.view()); }), ErrorCode::NonFiniteLoss);
}

TEST(ToyModel, DatasetsAreSeeded) {
    const Dataset a = make_blobs(10, 3, 4);
    const Dataset b = make_blobs(10, 3, 4);
    const Dataset c = make_blobs(10, 3, 5);
    EXPECT_EQ(a.x, b.x);
    EXPECT_NE(a.x, c.x);
    for (std::size_t r = 0; r < a.rows; ++r) EXPECT_EQ(a.y[r], static_cast<float>(r % 2));
    const Dataset reg = make_regression_dataset(6, 2, 3, 1);
    EXPECT_EQ(reg.x.size(), 12u);
    EXPECT_EQ(reg.y.size(), 18u);
    for (float y : reg.y) EXPECT_LE(std::abs(y), 1.0f);
    EXPECT_EQ(make_linear_dataset(5, 2, 1).y, make_linear_dataset(5, 2, 1).y);
}

TEST(ToyModel, InitialParameters) {
    EXPECT_EQ(initial_parameters(ModelSpec::logistic(3), 1), std::vector<float>(4, 0.0f));
    const ModelSpec mlp = ModelSpec::mlp({4, 6, 2});
    const auto p = initial_parameters(mlp, 1);
    ASSERT_EQ(p.size(), mlp.param_count());
    const float limit = std::sqrt(6.0f / 10.0f);
    for (std::size_t i = 0; i < 24; ++i) EXPECT_LE(std::abs(p[i]), limit);
    for (std::size_t i = 24; i < 30; ++i) EXPECT_EQ(p[i], 0.0f);  // first-layer biases
    EXPECT_EQ(initial_parameters(mlp, 1), p);
}

TEST(ToyModel, DeviceCopyIsFp16) {
    const std::vector<float> init = {0.1f, 1.0f / 3.0f};
    const ToyModel m(ModelSpec::linear(2), init);
    EXPECT_EQ(m.p16_bytes(), 4u);
    EXPECT_EQ(m.param_version(), 0u);
    EXPECT_EQ(m.p16_device()[1], float_to_half(1.0f / 3.0f));
}
