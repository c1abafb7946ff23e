#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "curvinit/dataset.hpp"
#include "curvinit/errors.hpp"
#include "curvinit/loss.hpp"
#include "curvinit/network.hpp"
#include "curvinit/random.hpp"

namespace curvinit {

/// A direction in the weight space of one layer; same shape as that layer's weights.
struct CurvatureProbe {
    std::size_t layer = 0;
    Matrix direction;
};

/// Approximate quadratic form, optionally graded against the finite-difference oracle.
struct QuadformReport {
    static constexpr double rtol_floor = 1e-12;
    /// Exact values below this magnitude are excluded from rtol tables.
    static constexpr double degenerate_threshold = 1e-10;

    double approx = 0.0;
    std::optional<double> exact_fd;
    std::optional<double> rtol;
    std::vector<std::string> warnings;

    bool degenerate() const { return exact_fd && std::abs(*exact_fd) < degenerate_threshold; }
};

/// Diagnostics attached to curvature results. Sigmoid breaks the f(0) = 0
/// assumption behind the small-input approximation.
inline std::vector<std::string> curvature_warnings(const Network& net) {
    std::vector<std::string> w;
    if (net.has_sigmoid()) w.emplace_back("sigmoid activation has f(0) != 0; the approximation error bound does not apply");
    return w;
}

inline QuadformReport make_report(const Network& net, double approx, std::optional<double> exact) {
    QuadformReport r;
    r.approx = approx;
    r.exact_fd = exact;
    if (exact) r.rtol = std::abs(approx - *exact) / std::max(std::abs(*exact), QuadformReport::rtol_floor);
    r.warnings = curvature_warnings(net);
    return r;
}

/// Frobenius inner product of two equally shaped matrices.
inline double inner(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

namespace detail {

inline void check_probe(const Network& net, const CurvatureProbe& probe) {
    if (probe.layer >= net.depth())
        throw IndexOutOfRange("probe layer " + std::to_string(probe.layer) + " out of range");
    const Layer& l = net.layer(probe.layer);
    if (probe.direction.rows() != l.weights.rows() || probe.direction.cols() != l.weights.cols())
        throw ShapeMismatch("probe direction shape differs from layer " + std::to_string(probe.layer) + " weights");
}

}  // namespace detail

/// Linearized output perturbation v = B^(k+1) diag(f'(u^(k))) (g z^(k)), where
/// B^(k+1) is the Jacobian from the input of layer k+1 to the output.
inline Vector approx_v(const Network& net, const ForwardTrace& trace, const CurvatureProbe& probe) {
    detail::check_trace(net, trace);
    detail::check_probe(net, probe);
    const std::size_t k = probe.layer;
    Vector a = activation_slopes(net, trace, k).cwiseProduct(probe.direction * trace.inputs[k]);
    return push_forward(net, trace, k + 1, net.depth(), std::move(a));
}

/// g^T H g with the curvature term dropped: v^T H_z v.
inline double approx_quadform(const Network& net, const ForwardTrace& trace, const LossKind& kind, const Target& t,
                              const CurvatureProbe& probe) {
    const Vector v = approx_v(net, trace, probe);
    return v.dot(loss_hessian(kind, trace.output(), t) * v);
}

/// Gradient of the approximate quadratic form's bilinear extension:
/// <approx_hvp(g), h> = v(g)^T H_z v(h) for every h.
inline Matrix approx_hvp(const Network& net, const ForwardTrace& trace, const LossKind& kind, const Target& t,
                         const CurvatureProbe& probe) {
    const std::size_t k = probe.layer;
    const Vector v = approx_v(net, trace, probe);
    const Vector y = loss_hessian(kind, trace.output(), t) * v;
    const Vector back = activation_slopes(net, trace, k).cwiseProduct(pull_back(net, trace, k + 1, net.depth(), y));
    return back * trace.inputs[k].transpose();
}

/// Fully linearized v: the layer input z^(k) is replaced by the Jacobian
/// product J^(k-1) ... J^(0) z^(0) evaluated along the trace.
inline Vector factorized_v(const Network& net, const ForwardTrace& trace, const CurvatureProbe& probe) {
    detail::check_trace(net, trace);
    detail::check_probe(net, probe);
    const std::size_t k = probe.layer;
    const Vector input = push_forward(net, trace, 0, k, trace.inputs[0]);
    Vector a = activation_slopes(net, trace, k).cwiseProduct(probe.direction * input);
    return push_forward(net, trace, k + 1, net.depth(), std::move(a));
}

/// Default finite-difference step: 1e-3 * max(1, ||W_k||) / ||g||.
inline double default_fd_step(const Network& net, const CurvatureProbe& probe) {
    detail::check_probe(net, probe);
    const double gnorm = probe.direction.stableNorm();
    if (gnorm == 0.0) throw InvalidInput("probe direction is zero");
    return 1e-3 * std::max(1.0, net.layer(probe.layer).weights.stableNorm()) / gnorm;
}

namespace detail {

inline std::uint64_t oracle_dropout_seed(const Network& net, std::optional<std::uint64_t> seed) {
    if (net.has_dropout() && !seed)
        throw InvalidInput("finite-difference oracle on a dropout network needs a pinned dropout seed");
    return seed.value_or(0);
}

inline double perturbed_loss(const Network& net, const Vector& x, const LossKind& kind, const Target& t,
                             const CurvatureProbe& probe, double step, std::uint64_t dropout_seed) {
    const Network moved = net.with_weights(probe.layer, net.layer(probe.layer).weights + step * probe.direction);
    const double l = loss_eval(kind, forward(moved, x, dropout_seed).output(), t);
    if (!std::isfinite(l)) throw NonFinite("loss is not finite under the finite-difference perturbation");
    return l;
}

inline Matrix perturbed_gradient(const Network& net, const Vector& x, const LossKind& kind, const Target& t,
                                 const CurvatureProbe& probe, double step, std::uint64_t dropout_seed) {
    const Network moved = net.with_weights(probe.layer, net.layer(probe.layer).weights + step * probe.direction);
    const ForwardTrace tr = forward(moved, x, dropout_seed);
    const Vector og = loss_grad(kind, tr.output(), t);
    if (!og.allFinite()) throw NonFinite("loss gradient is not finite under the finite-difference perturbation");
    // only layer k is needed: back-propagate down to it
    const std::size_t k = probe.layer;
    const Vector du = tr.slopes[k].cwiseProduct(pull_back(moved, tr, k + 1, moved.depth(), og));
    return du * tr.inputs[k].transpose();
}

inline double resolve_step(const Network& net, const CurvatureProbe& probe, std::optional<double> eps) {
    const double step = eps ? *eps : default_fd_step(net, probe);
    if (!(step > 0.0) || !std::isfinite(step)) throw InvalidInput("finite-difference step must be positive");
    return step;
}

}  // namespace detail

/// Second central difference of the loss along g in layer k's weights; the
/// exact quadratic form up to O(eps^2).
inline double fd_quadform(const Network& net, const Vector& x, const LossKind& kind, const Target& t,
                          const CurvatureProbe& probe, std::optional<double> eps = std::nullopt,
                          std::optional<std::uint64_t> dropout_seed = std::nullopt) {
    detail::check_probe(net, probe);
    const double h = detail::resolve_step(net, probe, eps);
    const std::uint64_t seed = detail::oracle_dropout_seed(net, dropout_seed);
    const double plus = detail::perturbed_loss(net, x, kind, t, probe, h, seed);
    const double mid = detail::perturbed_loss(net, x, kind, t, probe, 0.0, seed);
    const double minus = detail::perturbed_loss(net, x, kind, t, probe, -h, seed);
    return (plus - 2.0 * mid + minus) / (h * h);
}

/// Central difference of the layer-k weight gradient along g: the exact
/// Hessian-vector product up to O(eps^2).
inline Matrix fd_hvp(const Network& net, const Vector& x, const LossKind& kind, const Target& t,
                     const CurvatureProbe& probe, std::optional<double> eps = std::nullopt,
                     std::optional<std::uint64_t> dropout_seed = std::nullopt) {
    detail::check_probe(net, probe);
    const double h = detail::resolve_step(net, probe, eps);
    const std::uint64_t seed = detail::oracle_dropout_seed(net, dropout_seed);
    return (detail::perturbed_gradient(net, x, kind, t, probe, h, seed) -
            detail::perturbed_gradient(net, x, kind, t, probe, -h, seed)) /
           (2.0 * h);
}

/// True if a piecewise-linear unit at or after layer k sits closer to its kink
/// than ten times its own displacement under the +/-eps perturbation. The
/// finite-difference oracle is invalid for such probes.
inline bool crosses_kink(const Network& net, const Vector& x, const CurvatureProbe& probe, std::optional<double> eps = std::nullopt,
                         std::uint64_t dropout_seed = 0) {
    detail::check_probe(net, probe);
    const double h = detail::resolve_step(net, probe, eps);
    const std::size_t k = probe.layer;
    const ForwardTrace base = forward(net, x, dropout_seed);
    const Matrix& w = net.layer(k).weights;
    const ForwardTrace up = forward(net.with_weights(k, w + h * probe.direction), x, dropout_seed);
    const ForwardTrace down = forward(net.with_weights(k, w - h * probe.direction), x, dropout_seed);
    for (std::size_t i = k; i < net.depth(); ++i) {
        const auto& a = net.layer(i).activation;
        if (!std::holds_alternative<act::ReLU>(a) && !std::holds_alternative<act::LeakyReLU>(a)) continue;
        const Vector& u = base.preacts[i];
        const Vector shift = (up.preacts[i] - u).cwiseAbs().cwiseMax((down.preacts[i] - u).cwiseAbs());
        for (Eigen::Index j = 0; j < u.size(); ++j)
            if (std::abs(u(j)) <= 10.0 * shift(j)) return true;
    }
    return false;
}

struct EigenEstimate {
    double eigenvalue = 0.0;
    std::size_t iterations = 0;
};

/// Power iteration for the dominant eigenvalue of a symmetric PSD operator on
/// [rows, cols] matrices. Stops when successive Rayleigh quotients agree to
/// relative tolerance `tol`, or when the iterate is an eigenvector to that
/// tolerance. The seeded start is redrawn once if it is nearly orthogonal to
/// the range of the operator.
template <class Operator>
EigenEstimate top_eigenvalue(Operator&& hvp, Eigen::Index rows, Eigen::Index cols, std::size_t iters, double tol,
                             std::uint64_t seed) {
    if (iters < 1) throw InvalidInput("power iteration needs at least one iteration");
    if (rows < 1 || cols < 1) throw InvalidInput("power iteration needs a nonempty shape");
    Rng rng(derive_seed(seed, {0x9e11u}));

    auto apply = [&](const Matrix& x) {
        Matrix y = hvp(x);
        if (y.rows() != rows || y.cols() != cols) throw ShapeMismatch("operator changed the probe shape");
        if (!y.allFinite()) throw NonFinite("operator returned non-finite values");
        return y;
    };

    Matrix x = normal_matrix(rows, cols, 1.0, rng);
    x /= x.norm();
    Matrix y = apply(x);
    if (y.norm() == 0.0) return {0.0, 1};
    double rq = inner(x, y);
    if (rq < 1e-14) {
        x = normal_matrix(rows, cols, 1.0, rng);
        x /= x.norm();
        y = apply(x);
        if (y.norm() == 0.0) return {0.0, 1};
        rq = inner(x, y);
    }
    if ((y - rq * x).norm() <= tol * std::abs(rq)) return {rq, 1};

    for (std::size_t it = 2; it <= iters; ++it) {
        x = y / y.norm();
        y = apply(x);
        if (y.norm() == 0.0) return {0.0, it};
        const double next = inner(x, y);
        const bool settled = std::abs(next - rq) <= tol * std::abs(next) || (y - next * x).norm() <= tol * std::abs(next);
        rq = next;
        if (settled) return {rq, it};
    }
    return {rq, iters};
}

/// Largest algebraic eigenvalue of a symmetric, possibly indefinite operator.
/// When the dominant eigenvalue is negative, iterate on H + |lambda| I, whose
/// spectrum is shifted to be nonnegative with the same top eigenvector.
template <class Operator>
EigenEstimate top_algebraic_eigenvalue(Operator&& hvp, Eigen::Index rows, Eigen::Index cols, std::size_t iters, double tol,
                                       std::uint64_t seed) {
    const EigenEstimate first = top_eigenvalue(hvp, rows, cols, iters, tol, seed);
    if (first.eigenvalue >= 0.0) return first;
    const double shift = -first.eigenvalue;
    const auto shifted = [&](const Matrix& x) -> Matrix { return hvp(x) + shift * x; };
    const EigenEstimate second = top_eigenvalue(shifted, rows, cols, iters, tol, derive_seed(seed, {1}));
    return {second.eigenvalue - shift, first.iterations + second.iterations};
}

/// Batch-mean approximate Hessian of one layer, with traces and loss Hessians
/// computed once so that repeated products (power iteration) are cheap.
class ApproxHessian {
public:
    ApproxHessian(Network net, const Dataset& data, LossKind kind, std::size_t layer, std::size_t sample_limit,
                  std::uint64_t dropout_seed = 0)
        : net_(std::move(net)), layer_(layer) {
        if (data.size() == 0) throw InvalidInput("dataset is empty");
        if (sample_limit < 1) throw InvalidInput("sample_limit must be at least 1");
        if (layer >= net_.depth()) throw IndexOutOfRange("layer index " + std::to_string(layer) + " out of range");
        const std::size_t n = std::min(sample_limit, data.size());
        traces_.reserve(n);
        hz_.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            traces_.push_back(forward(net_, data.input(i), dropout_seed));
            hz_.push_back(loss_hessian(kind, traces_.back().output(), data.target(i)));
        }
    }

    Eigen::Index rows() const { return net_.layer(layer_).weights.rows(); }
    Eigen::Index cols() const { return net_.layer(layer_).weights.cols(); }
    std::size_t samples() const { return traces_.size(); }
    const Network& network() const { return net_; }

    double quadform(const Matrix& g) const {
        const CurvatureProbe probe{layer_, g};
        double sum = 0.0;
        for (std::size_t i = 0; i < traces_.size(); ++i) {
            const Vector v = approx_v(net_, traces_[i], probe);
            sum += v.dot(hz_[i] * v);
        }
        return sum / static_cast<double>(traces_.size());
    }

    Matrix operator()(const Matrix& g) const {
        const CurvatureProbe probe{layer_, g};
        Matrix acc = Matrix::Zero(rows(), cols());
        for (std::size_t i = 0; i < traces_.size(); ++i) {
            const ForwardTrace& tr = traces_[i];
            const Vector y = hz_[i] * approx_v(net_, tr, probe);
            const Vector back = tr.slopes[layer_].cwiseProduct(pull_back(net_, tr, layer_ + 1, net_.depth(), y));
            acc.noalias() += back * tr.inputs[layer_].transpose();
        }
        return acc / static_cast<double>(traces_.size());
    }

private:
    Network net_;
    std::size_t layer_;
    std::vector<ForwardTrace> traces_;
    std::vector<Matrix> hz_;
};

/// Batch-mean exact Hessian product via central differences of the batch gradient.
class FdHessian {
public:
    FdHessian(Network net, const Dataset& data, LossKind kind, std::size_t layer, std::size_t sample_limit,
              std::optional<double> eps = std::nullopt, std::optional<std::uint64_t> dropout_seed = std::nullopt)
        : net_(std::move(net)), data_(data.head(sample_limit)), kind_(std::move(kind)), layer_(layer), eps_(eps),
          seed_(detail::oracle_dropout_seed(net_, dropout_seed)) {
        if (data.size() == 0) throw InvalidInput("dataset is empty");
        if (sample_limit < 1) throw InvalidInput("sample_limit must be at least 1");
        if (layer >= net_.depth()) throw IndexOutOfRange("layer index " + std::to_string(layer) + " out of range");
    }

    Eigen::Index rows() const { return net_.layer(layer_).weights.rows(); }
    Eigen::Index cols() const { return net_.layer(layer_).weights.cols(); }

    double quadform(const Matrix& g) const {
        const CurvatureProbe probe{layer_, g};
        double sum = 0.0;
        for (std::size_t i = 0; i < data_.size(); ++i)
            sum += fd_quadform(net_, data_.input(i), kind_, data_.target(i), probe, eps_, seed_);
        return sum / static_cast<double>(data_.size());
    }

    Matrix operator()(const Matrix& g) const {
        const CurvatureProbe probe{layer_, g};
        Matrix acc = Matrix::Zero(rows(), cols());
        for (std::size_t i = 0; i < data_.size(); ++i)
            acc += fd_hvp(net_, data_.input(i), kind_, data_.target(i), probe, eps_, seed_);
        return acc / static_cast<double>(data_.size());
    }

private:
    Network net_;
    Dataset data_;
    LossKind kind_;
    std::size_t layer_;
    std::optional<double> eps_;
    std::uint64_t seed_;
};

/// Mean of approx_quadform over the first sample_limit samples, in index order.
inline double batch_quadform(const Network& net, const Dataset& data, const LossKind& kind, const CurvatureProbe& probe,
                             std::size_t sample_limit, std::uint64_t dropout_seed = 0) {
    detail::check_probe(net, probe);
    return ApproxHessian(net, data, kind, probe.layer, sample_limit, dropout_seed).quadform(probe.direction);
}

/// Mean of fd_quadform over the first sample_limit samples (the exact quadratic
/// form of the batch-mean loss).
inline double batch_fd_quadform(const Network& net, const Dataset& data, const LossKind& kind, const CurvatureProbe& probe,
                                std::size_t sample_limit, std::optional<double> eps = std::nullopt,
                                std::optional<std::uint64_t> dropout_seed = std::nullopt) {
    detail::check_probe(net, probe);
    return FdHessian(net, data, kind, probe.layer, sample_limit, eps, dropout_seed).quadform(probe.direction);
}

/// Spectral norm of J^(to) ... J^(from) by power iteration on P^T P, applying
/// the factors one at a time.
inline double jacobian_product_norm(const Network& net, const ForwardTrace& trace, std::size_t from_layer,
                                    std::size_t to_layer, std::size_t iters = 2000, double tol = 1e-12,
                                    std::uint64_t seed = 0) {
    detail::check_trace(net, trace);
    if (from_layer > to_layer) throw IndexOutOfRange("from_layer must not exceed to_layer");
    if (to_layer >= net.depth()) throw IndexOutOfRange("to_layer " + std::to_string(to_layer) + " out of range");
    const auto dim = static_cast<Eigen::Index>(net.layer(from_layer).d_in());
    auto gram = [&](const Matrix& x) -> Matrix {
        const Vector p = push_forward(net, trace, from_layer, to_layer + 1, x.col(0));
        return pull_back(net, trace, from_layer, to_layer + 1, p);
    };
    const auto est = top_eigenvalue(gram, dim, 1, iters, tol, seed);
    return std::sqrt(std::max(0.0, est.eigenvalue));
}

}  // namespace curvinit
