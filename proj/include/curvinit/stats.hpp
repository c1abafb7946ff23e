#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "curvinit/errors.hpp"
#include "curvinit/init.hpp"
#include "curvinit/loss.hpp"
#include "curvinit/network.hpp"
#include "curvinit/random.hpp"

namespace curvinit {

namespace detail {

/// Centers and scales to unit Euclidean norm; throws on constant input.
inline std::vector<double> standardize(std::span<const double> xs, const char* which) {
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    std::vector<double> out(xs.size());
    double ss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out[i] = xs[i] - mean;
        ss += out[i] * out[i];
    }
    const double norm = std::sqrt(ss);
    if (!(norm > 1e-300) || norm <= 1e-14 * std::sqrt(n) * std::max(1.0, std::abs(mean)))
        throw DegenerateInput(std::string(which) + " sequence is constant");
    for (auto& v : out) v /= norm;
    return out;
}

inline void check_pair(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw InvalidInput("sequences differ in length");
    if (xs.size() < 3) throw InvalidInput("correlation needs at least three samples");
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace detail

/// Sample Pearson correlation coefficient.
inline double pearson_r(std::span<const double> xs, std::span<const double> ys) {
    detail::check_pair(xs, ys);
    const auto a = detail::standardize(xs, "first");
    const auto b = detail::standardize(ys, "second");
    return std::clamp(detail::dot(a, b), -1.0, 1.0);
}

/// Two-sided permutation p-value for Pearson's r:
/// (1 + #{perms with |r_perm| >= |r_obs|}) / (n_perm + 1).
inline double permutation_p_value(std::span<const double> xs, std::span<const double> ys, std::size_t n_perm,
                                  std::uint64_t seed) {
    detail::check_pair(xs, ys);
    if (n_perm < 100) throw InvalidInput("permutation test needs at least 100 permutations");
    const auto a = detail::standardize(xs, "first");
    auto b = detail::standardize(ys, "second");
    const double observed = std::abs(detail::dot(a, b));
    // ties within rounding count as "at least as extreme"
    const double threshold = observed * (1.0 - 1e-12);
    Rng rng(derive_seed(seed, {0x9e6du}));
    std::size_t hits = 0;
    for (std::size_t p = 0; p < n_perm; ++p) {
        std::shuffle(b.begin(), b.end(), rng);
        if (std::abs(detail::dot(a, b)) >= threshold) ++hits;
    }
    return static_cast<double>(1 + hits) / static_cast<double>(n_perm + 1);
}

struct CorrelationReport {
    double r = 0.0;
    double p_value = 1.0;
    std::size_t n_samples = 0;
    std::size_t n_permutations = 0;
    std::uint64_t seed = 0;
    std::string pair;

    bool significant(double alpha = 0.05) const { return p_value < alpha; }
};

inline CorrelationReport correlate(std::span<const double> xs, std::span<const double> ys, std::size_t n_perm,
                                   std::uint64_t seed, std::string pair) {
    CorrelationReport rep;
    rep.r = pearson_r(xs, ys);
    rep.p_value = permutation_p_value(xs, ys, n_perm, seed);
    rep.n_samples = xs.size();
    rep.n_permutations = n_perm;
    rep.seed = seed;
    rep.pair = std::move(pair);
    return rep;
}

/// How recorded components enter Pearson's r. Raw values have zero linear
/// correlation whenever the weights are symmetric about zero (for
/// z = w2 w1 x, Cov(w2 w1, w2) = E[w1] E[w2^2] = 0), so dependence between
/// gradient factors shows up in their second moments: `Squared` correlates
/// the squared components.
enum class CorrelationStatistic { Raw, Squared };

struct CorrelationOptions {
    LossKind loss = loss::SquaredError{};
    std::size_t output_component = 0;
    /// Layer whose Jacobian J^(k) = D_{z^(k)} z^(k+1) is sampled; defaults to the last one.
    std::optional<std::size_t> jacobian_layer;
    std::size_t jacobian_row = 0;
    std::size_t jacobian_col = 0;
    /// Sample D_{W^(k)} z^(k+1) (row, col) = f'(u_row) z^(k)_col instead of the layer Jacobian.
    bool weight_jacobian = false;
    /// Also correlate two loss/output components when set.
    std::optional<std::size_t> second_output_component;
    std::size_t n_perm = 999;
    CorrelationStatistic statistic = CorrelationStatistic::Squared;
    std::uint64_t seed = 0;
};

/// Re-initializes the network n_inits times per seed, records fixed components
/// of D_{z^(n)} L and of a layer Jacobian at one data point, and reports the
/// dependence per seed and pair (pairs ordered per seed).
inline std::vector<CorrelationReport> correlation_experiment(std::span<const LayerSpec> spec, const InitScheme& scheme,
                                                             const Vector& data_point, const Target& target,
                                                             std::size_t n_seeds, std::size_t n_inits,
                                                             const CorrelationOptions& opt = {}) {
    check_chained(spec);
    if (n_inits < 100) throw InvalidInput("correlation experiment needs at least 100 initializations per seed");
    const std::size_t n = spec.size();
    const std::size_t jl = opt.jacobian_layer.value_or(n - 1);
    if (jl >= n) throw IndexOutOfRange("jacobian layer out of range");
    if (opt.output_component >= spec.back().d_out) throw IndexOutOfRange("output component out of range");
    if (opt.second_output_component && *opt.second_output_component >= spec.back().d_out)
        throw IndexOutOfRange("second output component out of range");
    if (opt.jacobian_row >= spec[jl].d_out || opt.jacobian_col >= spec[jl].d_in)
        throw IndexOutOfRange("jacobian component out of range");

    auto transform = [&](double v) { return opt.statistic == CorrelationStatistic::Squared ? v * v : v; };
    const std::string jac_name = (opt.weight_jacobian ? "dz/dW" : "J") + std::to_string(jl) + "[" + std::to_string(opt.jacobian_row) + "," +
                                 std::to_string(opt.jacobian_col) + "]";
    const std::string loss_name = "dL/dz[" + std::to_string(opt.output_component) + "]";

    std::vector<CorrelationReport> out;
    for (std::size_t s = 0; s < n_seeds; ++s) {
        const std::uint64_t seed = derive_seed(opt.seed, {0xc0u, s});
        std::vector<double> grad_a, grad_b, jac;
        grad_a.reserve(n_inits);
        jac.reserve(n_inits);
        for (std::size_t i = 0; i < n_inits; ++i) {
            const Network net = initialize(spec, scheme, derive_seed(seed, {i}));
            const ForwardTrace tr = forward(net, data_point);
            const Vector g = loss_grad(opt.loss, tr.output(), target);
            grad_a.push_back(transform(g(static_cast<Eigen::Index>(opt.output_component))));
            if (opt.second_output_component)
                grad_b.push_back(transform(g(static_cast<Eigen::Index>(*opt.second_output_component))));
            const auto row = static_cast<Eigen::Index>(opt.jacobian_row);
            const auto col = static_cast<Eigen::Index>(opt.jacobian_col);
            const double factor = opt.weight_jacobian ? tr.inputs[jl](col) : net.layer(jl).weights(row, col);
            const double j = tr.slopes[jl](row) * factor;
            jac.push_back(transform(j));
        }
        out.push_back(correlate(grad_a, jac, opt.n_perm, derive_seed(seed, {1}), loss_name + " vs " + jac_name));
        if (opt.second_output_component)
            out.push_back(correlate(grad_a, grad_b, opt.n_perm, derive_seed(seed, {2}),
                                    loss_name + " vs dL/dz[" + std::to_string(*opt.second_output_component) + "]"));
    }
    return out;
}

// Monte-Carlo checks of the norm-scaling identities behind the init schemes.
// Each returns the measured mean factor; expected values are in the comments.

namespace detail {

inline Vector random_unit(Eigen::Index n, Rng& rng) {
    Vector v = normal_vector(n, 1.0, rng);
    return v / v.norm();
}

}  // namespace detail

/// E||w z||^2 / ||z||^2 for w ~ N(0, sigma^2) of shape [n, m]; expected n sigma^2.
inline double forward_norm_factor(std::size_t n, std::size_t m, double sigma, std::size_t trials, std::uint64_t seed) {
    Rng rng(derive_seed(seed, {0xf0u}));
    double acc = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const Matrix w = normal_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m), sigma, rng);
        acc += (w * detail::random_unit(static_cast<Eigen::Index>(m), rng)).squaredNorm();
    }
    return acc / static_cast<double>(trials);
}

/// E||z'^T w||^2 / ||z'||^2 for w of shape [n, m]; expected m sigma^2.
inline double backward_norm_factor(std::size_t n, std::size_t m, double sigma, std::size_t trials, std::uint64_t seed) {
    Rng rng(derive_seed(seed, {0xb0u}));
    double acc = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const Matrix w = normal_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m), sigma, rng);
        acc += (detail::random_unit(static_cast<Eigen::Index>(n), rng).transpose() * w).squaredNorm();
    }
    return acc / static_cast<double>(trials);
}

/// E||max(u, 0)||^2 / E||u||^2 for symmetric zero-centred u; expected 1/2.
inline double relu_forward_factor(std::size_t n, std::size_t trials, std::uint64_t seed) {
    Rng rng(derive_seed(seed, {0x7e1u}));
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const Vector u = normal_vector(static_cast<Eigen::Index>(n), 1.0, rng);
        num += u.cwiseMax(0.0).squaredNorm();
        den += u.squaredNorm();
    }
    return num / den;
}

/// E||diag(B) z / q||^2 for unit z and B_i ~ Bern(q): the squared-norm factor
/// of a dropout Jacobian with keep rate q. Expected 1/q.
inline double dropout_jacobian_factor(std::size_t d, double keep_rate, std::size_t trials, std::uint64_t seed) {
    if (!(keep_rate > 0.0 && keep_rate <= 1.0)) throw InvalidInput("keep rate must lie in (0, 1]");
    Rng rng(derive_seed(seed, {0xd0u}));
    std::bernoulli_distribution keep(keep_rate);
    double acc = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const Vector z = detail::random_unit(static_cast<Eigen::Index>(d), rng);
        double s = 0.0;
        for (Eigen::Index i = 0; i < z.size(); ++i)
            if (keep(rng)) s += z(i) * z(i);
        acc += s / (keep_rate * keep_rate);
    }
    return acc / static_cast<double>(trials);
}

}  // namespace curvinit
