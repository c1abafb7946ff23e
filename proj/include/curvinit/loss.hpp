#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <type_traits>
#include <variant>

#include <Eigen/Dense>

#include "curvinit/errors.hpp"

namespace curvinit {

namespace loss {

/// L(z, t) = ||z - t||^2 with a dense target vector.
struct SquaredError {};

/// L(z, t) = -log softmax(z)[t] with a class-index target.
struct SoftmaxCrossEntropy {
    std::size_t num_classes = 2;
};

}  // namespace loss

using LossKind = std::variant<loss::SquaredError, loss::SoftmaxCrossEntropy>;

/// Class index for cross-entropy, dense vector for squared error.
using Target = std::variant<std::size_t, Eigen::VectorXd>;

namespace detail {

inline const Eigen::VectorXd& regression_target(const Eigen::VectorXd& z, const Target& t) {
    const auto* v = std::get_if<Eigen::VectorXd>(&t);
    if (!v) throw InvalidInput("squared error needs a vector target");
    if (v->size() != z.size()) throw ShapeMismatch("target length differs from output length");
    return *v;
}

inline std::size_t class_target(const loss::SoftmaxCrossEntropy& ce, const Eigen::VectorXd& z, const Target& t) {
    if (ce.num_classes < 2) throw InvalidInput("cross-entropy needs at least two classes");
    if (static_cast<std::size_t>(z.size()) != ce.num_classes) throw ShapeMismatch("output length differs from class count");
    const auto* c = std::get_if<std::size_t>(&t);
    if (!c) throw InvalidInput("cross-entropy needs a class-index target");
    if (*c >= ce.num_classes) throw InvalidInput("class index " + std::to_string(*c) + " out of range");
    return *c;
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
    Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp();
    return e / e.sum();
}

}  // namespace detail

inline double loss_eval(const LossKind& kind, const Eigen::VectorXd& z, const Target& t) {
    return std::visit(
        [&](const auto& k) -> double {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, loss::SquaredError>) {
                return (z - detail::regression_target(z, t)).squaredNorm();
            } else {
                const std::size_t c = detail::class_target(k, z, t);
                const double m = z.maxCoeff();
                const double lse = m + std::log((z.array() - m).exp().sum());
                return lse - z(static_cast<Eigen::Index>(c));
            }
        },
        kind);
}

inline Eigen::VectorXd loss_grad(const LossKind& kind, const Eigen::VectorXd& z, const Target& t) {
    return std::visit(
        [&](const auto& k) -> Eigen::VectorXd {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, loss::SquaredError>) {
                return 2.0 * (z - detail::regression_target(z, t));
            } else {
                const std::size_t c = detail::class_target(k, z, t);
                Eigen::VectorXd g = detail::softmax(z);
                g(static_cast<Eigen::Index>(c)) -= 1.0;
                return g;
            }
        },
        kind);
}

/// D^2_z L: 2I for squared error, diag(p) - p p^T for softmax cross-entropy.
inline Eigen::MatrixXd loss_hessian(const LossKind& kind, const Eigen::VectorXd& z, const Target& t) {
    return std::visit(
        [&](const auto& k) -> Eigen::MatrixXd {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, loss::SquaredError>) {
                detail::regression_target(z, t);
                return 2.0 * Eigen::MatrixXd::Identity(z.size(), z.size());
            } else {
                detail::class_target(k, z, t);
                const Eigen::VectorXd p = detail::softmax(z);
                Eigen::MatrixXd h = -p * p.transpose();
                h.diagonal() += p;
                return h;
            }
        },
        kind);
}

}  // namespace curvinit
