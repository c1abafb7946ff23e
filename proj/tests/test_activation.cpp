#include <gtest/gtest.h>

#include "curvinit/activation.hpp"
#include "curvinit/errors.hpp"

using namespace curvinit;

TEST(ActivationEval, TanhAtZero) {
    const auto a = activation_eval(act::Tanh{}, 0.0);
    EXPECT_EQ(a.value, 0.0);
    EXPECT_EQ(a.d1, 1.0);
    EXPECT_EQ(a.d2, 0.0);
}

TEST(ActivationEval, ReluNegativeBranch) {
    const auto a = activation_eval(act::ReLU{}, -1.0);
    EXPECT_EQ(a.value, 0.0);
    EXPECT_EQ(a.d1, 0.0);
    EXPECT_EQ(a.d2, 0.0);
}

TEST(ActivationEval, ReluKinkUsesZeroSubgradient) {
    const auto a = activation_eval(act::ReLU{}, 0.0);
    EXPECT_EQ(a.value, 0.0);
    EXPECT_EQ(a.d1, 0.0);
    EXPECT_EQ(a.d2, 0.0);
}

TEST(ActivationEval, TanhAtPointOne) {
    // tanh(0.1), 1 - tanh^2, -2 tanh (1 - tanh^2)
    const auto a = activation_eval(act::Tanh{}, 0.1);
    EXPECT_NEAR(a.value, 0.09966799462495582, 1e-15);
    EXPECT_NEAR(a.d1, 0.9900662908474398, 1e-15);
    EXPECT_NEAR(a.d2, -0.19735584350906515, 1e-15);
    EXPECT_NEAR(a.value, 0.099668, 1e-6);
    EXPECT_NEAR(a.d1, 0.990066, 1e-6);
}

TEST(ActivationEval, SigmoidDerivativesMatchFiniteDifferences) {
    for (double u : {-30.0, -2.0, -0.3, 0.0, 0.7, 3.0, 30.0}) {
        const double h = 1e-5;
        const auto a = activation_eval(act::Sigmoid{}, u);
        const auto p = activation_eval(act::Sigmoid{}, u + h);
        const auto m = activation_eval(act::Sigmoid{}, u - h);
        EXPECT_NEAR(a.d1, (p.value - m.value) / (2 * h), 1e-9) << u;
        EXPECT_NEAR(a.d2, (p.d1 - m.d1) / (2 * h), 1e-9) << u;
        EXPECT_TRUE(std::isfinite(a.value));
    }
    EXPECT_EQ(activation_eval(act::Sigmoid{}, 0.0).value, 0.5);
}

TEST(ActivationEval, TanhSecondDerivativeMatchesFiniteDifferences) {
    for (double u : {-1.5, -0.2, 0.05, 0.9}) {
        const double h = 1e-5;
        EXPECT_NEAR(activation_eval(act::Tanh{}, u).d2,
                    (activation_eval(act::Tanh{}, u + h).d1 - activation_eval(act::Tanh{}, u - h).d1) / (2 * h), 1e-9);
    }
}

TEST(ActivationEval, LeakyRelu) {
    const act::LeakyReLU l{0.1};
    EXPECT_DOUBLE_EQ(activation_eval(l, -2.0).value, -0.2);
    EXPECT_DOUBLE_EQ(activation_eval(l, -2.0).d1, 0.1);
    EXPECT_DOUBLE_EQ(activation_eval(l, 3.0).value, 3.0);
    EXPECT_DOUBLE_EQ(activation_eval(l, 3.0).d1, 1.0);
    EXPECT_DOUBLE_EQ(activation_eval(l, 0.0).d1, 0.1);
    EXPECT_EQ(activation_eval(l, 3.0).d2, 0.0);
}

TEST(ActivationEval, DropoutScalesByMaskOverKeepRate) {
    const act::Dropout d{0.5, 0};
    const auto kept = activation_eval(d, 3.0, 1.0);
    EXPECT_DOUBLE_EQ(kept.value, 6.0);
    EXPECT_DOUBLE_EQ(kept.d1, 2.0);
    EXPECT_EQ(kept.d2, 0.0);
    const auto dropped = activation_eval(d, 3.0, 0.0);
    EXPECT_EQ(dropped.value, 0.0);
    EXPECT_EQ(dropped.d1, 0.0);
}

TEST(ActivationName, RoundTripsEveryKind) {
    const std::vector<ActivationKind> kinds = {act::Linear{}, act::Tanh{}, act::Sigmoid{}, act::ReLU{},
                                               act::LeakyReLU{0.2}, act::Dropout{0.8, 0}, act::Dropout{0.25, 7}};
    for (const auto& k : kinds) {
        const std::string name = activation_name(k);
        EXPECT_EQ(activation_name(parse_activation(name)), name);
    }
    EXPECT_EQ(activation_name(act::LeakyReLU{0.2}), "leaky_relu:0.2");
    EXPECT_EQ(activation_name(act::Dropout{0.25, 7}), "dropout:0.25:7");
    EXPECT_EQ(activation_name(act::Dropout{0.8, 0}), "dropout:0.8");
}

TEST(ActivationName, ParseDefaults) {
    const auto l = parse_activation("leaky_relu");
    ASSERT_TRUE(std::holds_alternative<act::LeakyReLU>(l));
    EXPECT_DOUBLE_EQ(std::get<act::LeakyReLU>(l).slope, 0.01);
}

TEST(ActivationName, RejectsBadText) {
    EXPECT_THROW(parse_activation("swish"), InvalidInput);
    EXPECT_THROW(parse_activation("tanh:2"), InvalidInput);
    EXPECT_THROW(parse_activation("dropout"), InvalidInput);
    EXPECT_THROW(parse_activation("dropout:0"), InvalidInput);
    EXPECT_THROW(parse_activation("dropout:1.5"), InvalidInput);
    EXPECT_THROW(parse_activation("leaky_relu:-1"), InvalidInput);
    EXPECT_THROW(parse_activation("leaky_relu:abc"), InvalidInput);
}

TEST(ActivationValidate, KeepRateBounds) {
    EXPECT_NO_THROW(validate(act::Dropout{1.0, 0}));
    EXPECT_THROW(validate(act::Dropout{0.0, 0}), InvalidInput);
    EXPECT_THROW(validate(act::Dropout{-0.1, 0}), InvalidInput);
}
