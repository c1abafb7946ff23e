#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace curvinit;

namespace {

Network scalar_net(double w, const ActivationKind& a = act::Linear{}) {
    return Network({Layer{Matrix::Constant(1, 1, w), Vector::Zero(1), a}});
}

Vector one(double x) { return Vector::Constant(1, x); }

Matrix random_direction(const Network& net, std::size_t k, Rng& rng) {
    return normal_matrix(net.layer(k).weights.rows(), net.layer(k).weights.cols(), 1.0, rng);
}

struct Sample {
    Network net;
    Vector x;
    LossKind kind;
    Target t;
};

Sample random_sample(const ActivationKind& a, std::uint64_t seed, double input_norm, std::size_t layers = 3) {
    Rng rng(derive_seed(seed, {77}));
    Network net = oracle::random_net(layers, 2, 6, a, seed, 0.7, 0.0);
    Vector x = oracle::random_input(static_cast<Eigen::Index>(net.d_in()), input_norm, rng);
    if (seed % 2 && net.d_out() >= 2)
        return {net, x, loss::SoftmaxCrossEntropy{net.d_out()}, std::size_t(seed % net.d_out())};
    Vector t = normal_vector(static_cast<Eigen::Index>(net.d_out()), 1.0, rng);
    return {net, x, loss::SquaredError{}, t};
}

}  // namespace

TEST(ApproxQuadform, LinearRegressionIsExact) {
    const Network net = scalar_net(0.3);
    const auto tr = forward(net, one(1));
    EXPECT_DOUBLE_EQ(approx_quadform(net, tr, loss::SquaredError{}, one(1), {0, Matrix::Ones(1, 1)}), 2.0);
}

TEST(ApproxQuadform, QuadraticHomogeneity) {
    Rng rng(1);
    for (std::uint64_t s = 0; s < 30; ++s) {
        const auto smp = random_sample(act::Tanh{}, s, 0.5);
        const auto tr = forward(smp.net, smp.x);
        const std::size_t k = s % smp.net.depth();
        const Matrix g = random_direction(smp.net, k, rng);
        const double q = approx_quadform(smp.net, tr, smp.kind, smp.t, {k, g});
        EXPECT_NEAR(approx_quadform(smp.net, tr, smp.kind, smp.t, {k, 2.0 * g}), 4.0 * q, 1e-10 * std::abs(q));
        const double alpha = -1.7;
        EXPECT_NEAR(approx_quadform(smp.net, tr, smp.kind, smp.t, {k, alpha * g}), alpha * alpha * q, 1e-10 * std::abs(q));
        EXPECT_GE(q, -1e-10);
    }
}

TEST(ApproxQuadform, ProbeErrors) {
    const Network net = oracle::random_net(2, 3, 3, act::Tanh{}, 1);
    const auto tr = forward(net, Vector::Zero(3));
    const Target t = Vector(Vector::Zero(3));
    EXPECT_THROW(approx_quadform(net, tr, loss::SquaredError{}, t, {0, Matrix::Ones(2, 3)}), ShapeMismatch);
    EXPECT_THROW(approx_quadform(net, tr, loss::SquaredError{}, t, {2, Matrix::Ones(3, 3)}), IndexOutOfRange);
    EXPECT_THROW(fd_quadform(net, Vector::Zero(3), loss::SquaredError{}, t, {0, Matrix::Zero(3, 3)}), InvalidInput);
    EXPECT_THROW(fd_quadform(net, Vector::Zero(3), loss::SquaredError{}, t, {0, Matrix::Ones(3, 3)}, -1.0), InvalidInput);
}

TEST(ApproxQuadform, MatchesDenseBruteForceHessian) {
    Rng rng(2);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto smp = random_sample(s % 2 ? ActivationKind{act::Tanh{}} : ActivationKind{act::Sigmoid{}}, s, 0.8);
        const auto tr = forward(smp.net, smp.x);
        const std::size_t k = s % smp.net.depth();
        const Matrix hz = loss_hessian(smp.kind, tr.output(), smp.t);
        const Matrix dense = oracle::dense_approx_hessian(smp.net, k, smp.x, hz);
        const Matrix g = random_direction(smp.net, k, rng);
        const Vector gv = Eigen::Map<const Vector>(g.data(), g.size());
        EXPECT_LT(oracle::rel_err(approx_quadform(smp.net, tr, smp.kind, smp.t, {k, g}), gv.dot(dense * gv)), 1e-6);
        const Matrix hvp = approx_hvp(smp.net, tr, smp.kind, smp.t, {k, g});
        const Vector expect = dense * gv;
        EXPECT_LT(oracle::rel_err(Vector(Eigen::Map<const Vector>(hvp.data(), hvp.size())), expect), 1e-6);
    }
}

// A 5-layer tanh net at small input: most first-layer probes agree with the
// exact quadratic form to within rtol 1.
TEST(ApproxQuadform, FirstLayerAgreementOnSmallInputs) {
    const std::vector<LayerSpec> spec = {{10, 16, act::Tanh{}}, {16, 16, act::Tanh{}}, {16, 16, act::Tanh{}},
                                         {16, 16, act::Tanh{}}, {16, 4, act::Linear{}}};
    int within = 0, valid = 0;
    for (std::uint64_t p = 0; p < 100; ++p) {
        const Network net = initialize(spec, InitScheme::glorot(), derive_seed(5, {p}));
        Rng rng(derive_seed(6, {p}));
        const Vector x = oracle::random_input(10, 0.1, rng);
        const Target t = std::size_t(p % 4);
        const LossKind kind = loss::SoftmaxCrossEntropy{4};
        const CurvatureProbe probe{0, random_direction(net, 0, rng)};
        const auto rep = make_report(net, approx_quadform(net, forward(net, x), kind, t, probe), fd_quadform(net, x, kind, t, probe));
        if (rep.degenerate()) continue;
        ++valid;
        within += *rep.rtol <= 1.0;
    }
    ASSERT_GT(valid, 50);
    EXPECT_GE(static_cast<double>(within) / valid, 0.78) << within << "/" << valid;
}

TEST(ApproxHvp, InducesTheQuadformAndIsSymmetric) {
    Rng rng(3);
    for (std::uint64_t s = 0; s < 30; ++s) {
        const auto smp = random_sample(s % 3 ? ActivationKind{act::Tanh{}} : ActivationKind{act::LeakyReLU{0.1}}, s, 0.5);
        const auto tr = forward(smp.net, smp.x);
        const std::size_t k = s % smp.net.depth();
        const Matrix g1 = random_direction(smp.net, k, rng), g2 = random_direction(smp.net, k, rng);
        const double q = approx_quadform(smp.net, tr, smp.kind, smp.t, {k, g1});
        const Matrix h1 = approx_hvp(smp.net, tr, smp.kind, smp.t, {k, g1});
        const Matrix h2 = approx_hvp(smp.net, tr, smp.kind, smp.t, {k, g2});
        EXPECT_NEAR(inner(h1, g1), q, 1e-10 * std::max(std::abs(q), 1e-300));
        const double a = inner(h1, g2), b = inner(h2, g1);
        EXPECT_NEAR(a, b, 1e-10 * std::max({std::abs(a), std::abs(b), 1e-300}));
    }
}

TEST(ApproxHvp, LinearRegression) {
    const Network net = scalar_net(0.0);
    const Matrix h = approx_hvp(net, forward(net, one(1)), loss::SquaredError{}, one(1), {0, Matrix::Ones(1, 1)});
    EXPECT_EQ(h, Matrix::Constant(1, 1, 2.0));
}

TEST(FactorizedV, ExactForLinearNets) {
    Rng rng(4);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Network net = oracle::random_net(4, 2, 6, act::Linear{}, s, 0.7, 0.0);
        const auto tr = forward(net, oracle::random_input(static_cast<Eigen::Index>(net.d_in()), 1.0, rng));
        for (std::size_t k = 0; k < net.depth(); ++k) {
            const CurvatureProbe probe{k, random_direction(net, k, rng)};
            EXPECT_LT(oracle::rel_err(factorized_v(net, tr, probe), approx_v(net, tr, probe)), 1e-12);
        }
    }
}

TEST(FactorizedV, FirstLayerHasNoLinearizedSegment) {
    Rng rng(5);
    const Network net = oracle::random_net(3, 2, 6, act::Tanh{}, 9, 0.7, 0.3);
    const auto tr = forward(net, oracle::random_input(static_cast<Eigen::Index>(net.d_in()), 1.0, rng));
    const CurvatureProbe probe{0, random_direction(net, 0, rng)};
    EXPECT_EQ(factorized_v(net, tr, probe), approx_v(net, tr, probe));
}

TEST(FactorizedV, LinearizationGapShrinksSuperlinearly) {
    const std::vector<double> scales = {0.1, 0.05, 0.025};
    std::vector<double> gaps(scales.size(), 0.0);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Network net = oracle::random_net(4, 3, 6, act::Tanh{}, 300 + s, 0.7, 0.0);
        Rng rng(derive_seed(s, {1}));
        const Vector dir = oracle::random_input(static_cast<Eigen::Index>(net.d_in()), 1.0, rng);
        const CurvatureProbe probe{2, random_direction(net, 2, rng)};
        for (std::size_t i = 0; i < scales.size(); ++i) {
            const auto tr = forward(net, scales[i] * dir);
            gaps[i] += std::log((factorized_v(net, tr, probe) - approx_v(net, tr, probe)).norm());
        }
    }
    for (auto& g : gaps) g = std::exp(g / 20);
    EXPECT_GE(loglog_slope(scales, gaps), 2.5);
}

TEST(FdQuadform, PureQuadratic) {
    // L = w^2 with w the only weight (x = 1, t = 0)
    const Network net = scalar_net(0.0);
    for (double eps : {0.5, 0.25, 1.0})
        EXPECT_EQ(fd_quadform(net, one(1), loss::SquaredError{}, one(0), {0, Matrix::Ones(1, 1)}, eps), 2.0);
}

TEST(FdQuadform, LinearRegression) {
    const Network net = scalar_net(0.37);
    EXPECT_NEAR(fd_quadform(net, one(1), loss::SquaredError{}, one(1), {0, Matrix::Ones(1, 1)}, 1e-3), 2.0, 1e-9);
}

TEST(FdQuadform, ReluNetsAwayFromKinksAreExact) {
    Rng rng(6);
    int checked = 0;
    for (std::uint64_t s = 0; checked < 30; ++s) {
        ASSERT_LT(s, 1000u);
        const auto smp = random_sample(s % 2 ? ActivationKind{act::ReLU{}} : ActivationKind{act::LeakyReLU{0.2}}, s, 0.1);
        const std::size_t k = s % smp.net.depth();
        const CurvatureProbe probe{k, random_direction(smp.net, k, rng)};
        const double eps = default_fd_step(smp.net, probe);
        const auto tr = forward(smp.net, smp.x);
        bool close = false;
        for (std::size_t i = k; i < smp.net.depth(); ++i) close |= (tr.preacts[i].array().abs() <= 10 * eps).any();
        if (close) continue;
        ++checked;
        const double approx = approx_quadform(smp.net, tr, smp.kind, smp.t, probe);
        const double exact = fd_quadform(smp.net, smp.x, smp.kind, smp.t, probe, eps);
        if (std::abs(exact) < 1e-10) continue;
        EXPECT_LT(oracle::rel_err(approx, exact), 1e-3) << s;
    }
}

TEST(FdQuadform, DropoutNeedsPinnedSeed) {
    const Network net = oracle::random_net(2, 3, 4, act::Dropout{0.5, 0}, 3);
    const Vector x = Vector::Constant(static_cast<Eigen::Index>(net.d_in()), 0.1);
    const Target t = Vector(Vector::Zero(static_cast<Eigen::Index>(net.d_out())));
    const CurvatureProbe probe{0, Matrix::Ones(net.layer(0).weights.rows(), net.layer(0).weights.cols())};
    EXPECT_THROW(fd_quadform(net, x, loss::SquaredError{}, t, probe), InvalidInput);
    EXPECT_THROW(fd_hvp(net, x, loss::SquaredError{}, t, probe), InvalidInput);
    // dropout scales linearly, so with a pinned mask the approximation is exact
    const double fd = fd_quadform(net, x, loss::SquaredError{}, t, probe, std::nullopt, 17);
    const double ap = approx_quadform(net, forward(net, x, 17), loss::SquaredError{}, t, probe);
    EXPECT_LT(oracle::rel_err(ap, fd), 1e-6);
}

TEST(FdQuadform, NonFiniteLossIsReported) {
    const Network net = scalar_net(1e300);
    EXPECT_THROW(fd_quadform(net, one(1e10), loss::SquaredError{}, one(0), {0, Matrix::Ones(1, 1)}), NonFinite);
    EXPECT_THROW(fd_hvp(net, one(1e10), loss::SquaredError{}, one(0), {0, Matrix::Ones(1, 1)}), NonFinite);
}

TEST(FdQuadform, DefaultStep) {
    Network net({Layer{Matrix::Constant(2, 2, 2.0), Vector::Zero(2), act::Tanh{}}});
    EXPECT_DOUBLE_EQ(default_fd_step(net, {0, Matrix::Constant(2, 2, 0.5)}), 1e-3 * 4.0 / 1.0);
    net = Network({Layer{Matrix::Constant(2, 2, 0.1), Vector::Zero(2), act::Tanh{}}});
    EXPECT_DOUBLE_EQ(default_fd_step(net, {0, Matrix::Constant(2, 2, 1.0)}), 1e-3 / 2.0);
}

TEST(FdHvp, ConsistentWithFdQuadform) {
    Rng rng(7);
    for (std::uint64_t s = 0; s < 30; ++s) {
        const auto smp = random_sample(act::Tanh{}, s, 0.5);
        const std::size_t k = s % smp.net.depth();
        const CurvatureProbe probe{k, random_direction(smp.net, k, rng)};
        const double q = fd_quadform(smp.net, smp.x, smp.kind, smp.t, probe);
        if (std::abs(q) < 1e-6) continue;
        EXPECT_LT(oracle::rel_err(inner(fd_hvp(smp.net, smp.x, smp.kind, smp.t, probe), probe.direction), q), 1e-3) << s;
    }
}

TEST(FdHvp, LinearActivationsMatchApprox) {
    Rng rng(8);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto smp = random_sample(act::Linear{}, s, 1.0);
        const std::size_t k = s % smp.net.depth();
        const CurvatureProbe probe{k, random_direction(smp.net, k, rng)};
        const Matrix ap = approx_hvp(smp.net, forward(smp.net, smp.x), smp.kind, smp.t, probe);
        EXPECT_LT(oracle::rel_err(ap, fd_hvp(smp.net, smp.x, smp.kind, smp.t, probe)), 1e-6) << s;
    }
}

TEST(FdHvp, MostlyCloseToApproxOnSmallTanhInputs) {
    Rng rng(9);
    int close = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto smp = random_sample(act::Tanh{}, 1000 + s, 0.1);
        const std::size_t k = s % smp.net.depth();
        const CurvatureProbe probe{k, random_direction(smp.net, k, rng)};
        const Matrix fd = fd_hvp(smp.net, smp.x, smp.kind, smp.t, probe);
        const Matrix ap = approx_hvp(smp.net, forward(smp.net, smp.x), smp.kind, smp.t, probe);
        close += (fd - ap).norm() / fd.norm() < 1.0;
    }
    EXPECT_GE(close, 70);
}

TEST(FdHvp, Symmetric) {
    Rng rng(10);
    for (std::uint64_t s = 0; s < 30; ++s) {
        const auto smp = random_sample(act::Tanh{}, 2000 + s, 0.5);
        const std::size_t k = s % smp.net.depth();
        const Matrix g1 = random_direction(smp.net, k, rng), g2 = random_direction(smp.net, k, rng);
        const double a = inner(fd_hvp(smp.net, smp.x, smp.kind, smp.t, {k, g1}, 1e-4), g2);
        const double b = inner(fd_hvp(smp.net, smp.x, smp.kind, smp.t, {k, g2}, 1e-4), g1);
        EXPECT_NEAR(a, b, 1e-5 * std::max({std::abs(a), std::abs(b), 1e-8})) << s;
    }
}

TEST(CrossesKink, DetectsUnitsNearZero) {
    Network net({Layer{Matrix::Identity(2, 2), Vector::Zero(2), act::ReLU{}}});
    Vector x(2);
    x << 1.0, 1e-9;
    EXPECT_TRUE(crosses_kink(net, x, {0, Matrix::Ones(2, 2)}, 1e-3));
    x << 1.0, -0.5;
    EXPECT_FALSE(crosses_kink(net, x, {0, Matrix::Ones(2, 2)}, 1e-3));
    net = Network({Layer{Matrix::Identity(2, 2), Vector::Zero(2), act::Tanh{}}});
    x << 1.0, 0.0;
    EXPECT_FALSE(crosses_kink(net, x, {0, Matrix::Ones(2, 2)}, 1e-3));
}

TEST(QuadformReport, RtolFloorAndDegenerate) {
    const Network net = scalar_net(1.0);
    const auto rep = make_report(net, 1.0, 0.0);
    EXPECT_DOUBLE_EQ(*rep.rtol, 1.0 / QuadformReport::rtol_floor);
    EXPECT_TRUE(rep.degenerate());
    const auto ok = make_report(net, 1.5, 1.0);
    EXPECT_DOUBLE_EQ(*ok.rtol, 0.5);
    EXPECT_FALSE(ok.degenerate());
    const auto bare = make_report(net, 1.0, std::nullopt);
    EXPECT_FALSE(bare.rtol.has_value());
    EXPECT_TRUE(bare.warnings.empty());
    EXPECT_EQ(make_report(scalar_net(1.0, act::Sigmoid{}), 1.0, 1.0).warnings.size(), 1u);
}

TEST(TopEigenvalue, IsotropicOperator) {
    const auto e = top_eigenvalue([](const Matrix& g) -> Matrix { return 2.0 * g; }, 3, 4, 100, 1e-10, 1);
    EXPECT_DOUBLE_EQ(e.eigenvalue, 2.0);
    EXPECT_EQ(e.iterations, 1u);
}

TEST(TopEigenvalue, DiagonalPattern) {
    Matrix d(1, 2);
    d << 1, 3;
    const double tol = 1e-8;
    const auto e = top_eigenvalue([&](const Matrix& g) -> Matrix { return g.cwiseProduct(d); }, 1, 2, 1000, tol, 2);
    EXPECT_NEAR(e.eigenvalue, 3.0, 3.0 * 1e-6);
}

TEST(TopEigenvalue, MatchesDenseEigensolver) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        Rng rng(s);
        const Matrix b = normal_matrix(5, 5, 1.0, rng);
        const Matrix a = b * b.transpose();
        const auto e = top_eigenvalue([&](const Matrix& g) -> Matrix { return a * g; }, 5, 1, 100000, 1e-13, s);
        EXPECT_LT(oracle::rel_err(e.eigenvalue, oracle::top_eigenvalue_dense(a)), 1e-6) << s;
    }
}

TEST(TopEigenvalue, ZeroAndBadOperators) {
    const auto z = top_eigenvalue([](const Matrix& g) -> Matrix { return Matrix::Zero(g.rows(), g.cols()); }, 2, 2, 50, 1e-8, 0);
    EXPECT_EQ(z.eigenvalue, 0.0);
    EXPECT_EQ(z.iterations, 1u);
    EXPECT_THROW(top_eigenvalue([](const Matrix& g) -> Matrix { return g * std::nan(""); }, 2, 2, 50, 1e-8, 0), NonFinite);
    EXPECT_THROW(top_eigenvalue([](const Matrix& g) -> Matrix { return g; }, 2, 2, 0, 1e-8, 0), InvalidInput);
    EXPECT_THROW(top_eigenvalue([](const Matrix& g) -> Matrix { return g.transpose(); }, 2, 3, 10, 1e-8, 0), ShapeMismatch);
}

TEST(TopEigenvalue, RedrawsOrthogonalStart) {
    // Rank-one operator along a fixed direction: almost any start works, and
    // the answer must not depend on the seed.
    Matrix u = Matrix::Zero(3, 1);
    u(2) = 1.0;
    auto op = [&](const Matrix& g) -> Matrix { return 4.0 * u * (u.transpose() * g); };
    for (std::uint64_t s = 0; s < 5; ++s) EXPECT_NEAR(top_eigenvalue(op, 3, 1, 100, 1e-12, s).eigenvalue, 4.0, 1e-12);
}

TEST(TopAlgebraicEigenvalue, IndefiniteOperators) {
    Matrix d(1, 3);
    d << -5, 1, 2;
    EXPECT_NEAR(top_eigenvalue([&](const Matrix& g) -> Matrix { return g.cwiseProduct(d); }, 1, 3, 10000, 1e-12, 1).eigenvalue,
                -5.0, 1e-8);
    EXPECT_NEAR(
        top_algebraic_eigenvalue([&](const Matrix& g) -> Matrix { return g.cwiseProduct(d); }, 1, 3, 10000, 1e-12, 1).eigenvalue,
        2.0, 1e-6);
    for (std::uint64_t s = 0; s < 10; ++s) {
        Rng rng(s);
        const Matrix b = normal_matrix(5, 5, 1.0, rng);
        const Matrix a = b + b.transpose() - 3.0 * Matrix::Identity(5, 5);
        const auto e = top_algebraic_eigenvalue([&](const Matrix& g) -> Matrix { return a * g; }, 5, 1, 100000, 1e-13, s);
        EXPECT_NEAR(e.eigenvalue, oracle::top_eigenvalue_dense(a), 1e-5) << s;
    }
    // all negative: the largest is the one nearest zero
    EXPECT_NEAR(top_algebraic_eigenvalue([](const Matrix& g) -> Matrix { return -g; }, 2, 2, 100, 1e-12, 0).eigenvalue, -1.0,
                1e-12);
}

TEST(ApproxHessianOperator, DominatesEveryProbeAndMatchesDenseOracle) {
    const Network net = oracle::random_net(3, 3, 5, act::Tanh{}, 21, 0.7, 0.0);
    const Dataset data = synth_dataset(SynthKind::LinReg, 6, net.d_in(), net.d_out(), 0.5, 4);
    const LossKind kind = loss::SquaredError{};
    const ApproxHessian h(net, data, kind, 1, 6);
    const auto e = top_eigenvalue(h, h.rows(), h.cols(), 5000, 1e-12, 3);

    Matrix dense = Matrix::Zero(h.rows() * h.cols(), h.rows() * h.cols());
    for (std::size_t i = 0; i < data.size(); ++i)
        dense += oracle::dense_approx_hessian(net, 1, data.input(i), loss_hessian(kind, forward(net, data.input(i)).output(), data.target(i)));
    dense /= static_cast<double>(data.size());
    EXPECT_LT(oracle::rel_err(e.eigenvalue, oracle::top_eigenvalue_dense(dense)), 1e-5);

    Rng rng(5);
    for (int p = 0; p < 50; ++p) {
        const Matrix g = normal_matrix(h.rows(), h.cols(), 1.0, rng);
        EXPECT_GE(e.eigenvalue, h.quadform(g) / g.squaredNorm() - 1e-8);
    }
}

TEST(BatchQuadform, MeanOverSamples) {
    const Network net = oracle::random_net(3, 4, 4, act::Tanh{}, 22, 0.7, 0.0);
    const Dataset data = synth_dataset(SynthKind::Blobs, 32, 4, 4, 0.1, 5);
    const LossKind kind = loss::SoftmaxCrossEntropy{4};
    Rng rng(6);
    const CurvatureProbe probe{1, random_direction(net, 1, rng)};

    const double single = approx_quadform(net, forward(net, data.input(0)), kind, data.target(0), probe);
    EXPECT_DOUBLE_EQ(batch_quadform(net, data, kind, probe, 1), single);

    Dataset dup = data.head(1);
    dup.inputs = data.inputs.topRows(1).replicate(32, 1);
    dup.targets = std::vector<std::size_t>(32, std::get<std::vector<std::size_t>>(data.targets)[0]);
    EXPECT_NEAR(batch_quadform(net, dup, kind, probe, 32), single, 1e-14 * std::abs(single));

    double approx_sum = 0, fd_sum = 0;
    for (std::size_t i = 0; i < 32; ++i) {
        approx_sum += approx_quadform(net, forward(net, data.input(i)), kind, data.target(i), probe);
        fd_sum += fd_quadform(net, data.input(i), kind, data.target(i), probe);
    }
    const double batch_ap = batch_quadform(net, data, kind, probe, 32);
    const double batch_fd = batch_fd_quadform(net, data, kind, probe, 32);
    EXPECT_NEAR(batch_ap, approx_sum / 32, 1e-12 * std::abs(batch_ap));
    EXPECT_NEAR(batch_fd, fd_sum / 32, 1e-12 * std::abs(batch_fd));
}

TEST(BatchQuadform, Errors) {
    const Network net = oracle::random_net(2, 3, 3, act::Tanh{}, 23);
    Dataset empty;
    empty.inputs.resize(0, 3);
    empty.targets = Matrix(0, 3);
    const CurvatureProbe probe{0, Matrix::Ones(3, 3)};
    EXPECT_THROW(batch_quadform(net, empty, loss::SquaredError{}, probe, 4), InvalidInput);
    const Dataset data = synth_dataset(SynthKind::LinReg, 4, 3, 3, 0.1, 1);
    EXPECT_THROW(batch_quadform(net, data, loss::SquaredError{}, probe, 0), InvalidInput);
    EXPECT_THROW(ApproxHessian(net, data, loss::SquaredError{}, 5, 4), IndexOutOfRange);
}

TEST(JacobianProductNorm, Examples) {
    const Network id({Layer{Matrix::Identity(4, 4), Vector::Zero(4), act::Linear{}},
                      Layer{Matrix::Identity(4, 4), Vector::Zero(4), act::Linear{}}});
    EXPECT_NEAR(jacobian_product_norm(id, forward(id, Vector::Ones(4)), 0, 1), 1.0, 1e-12);
    const Network three = scalar_net(3.0);
    EXPECT_NEAR(jacobian_product_norm(three, forward(three, one(1)), 0, 0), 3.0, 1e-12);
    EXPECT_THROW(jacobian_product_norm(id, forward(id, Vector::Ones(4)), 1, 0), IndexOutOfRange);
    EXPECT_THROW(jacobian_product_norm(id, forward(id, Vector::Ones(4)), 0, 2), IndexOutOfRange);
}

TEST(JacobianProductNorm, MatchesSvdOracle) {
    Rng rng(11);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Network net = oracle::random_net(4, 3, 8, act::Tanh{}, 400 + s);
        const auto tr = forward(net, oracle::random_input(static_cast<Eigen::Index>(net.d_in()), 1.0, rng));
        const Matrix p = layer_jacobian(net, tr, 2) * layer_jacobian(net, tr, 1);
        EXPECT_LT(oracle::rel_err(jacobian_product_norm(net, tr, 1, 2), oracle::spectral_norm_dense(p)), 1e-6);
    }
}

TEST(JacobianProductNorm, RandomGaussianLayer) {
    std::vector<LayerSpec> spec = {{64, 64, act::Linear{}}};
    double sum = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Network net = initialize(spec, InitScheme::fixed(1.0 / 8.0), s);
        sum += jacobian_product_norm(net, forward(net, Vector::Zero(64)), 0, 0);
    }
    EXPECT_NEAR(sum / 20, 2.0, 0.3);
}
