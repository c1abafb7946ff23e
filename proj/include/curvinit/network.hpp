#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "curvinit/activation.hpp"
#include "curvinit/errors.hpp"
#include "curvinit/random.hpp"

namespace curvinit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct LayerSpec {
    std::size_t d_in = 1;
    std::size_t d_out = 1;
    ActivationKind activation = act::Linear{};
};

/// One dense layer: z_next = f(weights * z + bias), weights of shape [d_out, d_in].
struct Layer {
    Matrix weights;
    Vector bias;
    ActivationKind activation = act::Linear{};

    std::size_t d_in() const { return static_cast<std::size_t>(weights.cols()); }
    std::size_t d_out() const { return static_cast<std::size_t>(weights.rows()); }
};

/// Immutable dense feed-forward network.
class Network {
public:
    Network() = default;

    explicit Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
        if (layers_.empty()) throw InvalidInput("network needs at least one layer");
        for (std::size_t k = 0; k < layers_.size(); ++k) {
            const Layer& l = layers_[k];
            const std::string where = "layer " + std::to_string(k);
            if (l.weights.rows() < 1 || l.weights.cols() < 1) throw ShapeMismatch(where + ": empty weight matrix");
            if (l.bias.size() != l.weights.rows()) throw ShapeMismatch(where + ": bias length differs from d_out");
            if (k > 0 && l.d_in() != layers_[k - 1].d_out())
                throw ShapeMismatch(where + ": d_in " + std::to_string(l.d_in()) + " does not match previous d_out " +
                                    std::to_string(layers_[k - 1].d_out()));
            if (!l.weights.allFinite() || !l.bias.allFinite()) throw NonFinite(where + ": non-finite parameter");
            validate(l.activation);
        }
    }

    std::size_t depth() const { return layers_.size(); }
    std::size_t d_in() const { return layers_.front().d_in(); }
    std::size_t d_out() const { return layers_.back().d_out(); }

    const Layer& layer(std::size_t k) const {
        if (k >= layers_.size()) throw IndexOutOfRange("layer index " + std::to_string(k) + " out of range");
        return layers_[k];
    }

    std::span<const Layer> layers() const { return layers_; }

    std::vector<LayerSpec> spec() const {
        std::vector<LayerSpec> out;
        out.reserve(layers_.size());
        for (const auto& l : layers_) out.push_back({l.d_in(), l.d_out(), l.activation});
        return out;
    }

    bool has_dropout() const {
        for (const auto& l : layers_)
            if (is_dropout(l.activation)) return true;
        return false;
    }

    bool has_sigmoid() const {
        for (const auto& l : layers_)
            if (std::holds_alternative<act::Sigmoid>(l.activation)) return true;
        return false;
    }

    /// Copy with layer k's weights replaced.
    Network with_weights(std::size_t k, Matrix weights) const {
        Network copy = *this;
        Layer& l = copy.layers_.at(k);
        if (weights.rows() != l.weights.rows() || weights.cols() != l.weights.cols())
            throw ShapeMismatch("replacement weights have the wrong shape");
        l.weights = std::move(weights);
        return copy;
    }

private:
    std::vector<Layer> layers_;
};

/// Everything recorded by one forward pass. inputs[k] is the input of layer k
/// (inputs[n] is the network output), preacts[k] = W_k inputs[k] + b_k, and
/// masks[k] holds the 0/1 dropout draw for dropout layers (empty otherwise).
/// slopes[k] caches f'(preacts[k]) so derivative queries do not re-evaluate
/// the activation.
struct ForwardTrace {
    std::vector<Vector> inputs;
    std::vector<Vector> preacts;
    std::vector<Vector> masks;
    std::vector<Vector> slopes;

    std::size_t depth() const { return preacts.size(); }
    const Vector& output() const { return inputs.back(); }
};

namespace detail {

inline Vector dropout_mask(const act::Dropout& d, std::size_t units, std::uint64_t dropout_seed, std::size_t layer) {
    Rng rng(derive_seed(dropout_seed, {static_cast<std::uint64_t>(layer), d.mask_seed}));
    std::bernoulli_distribution keep(d.keep_rate);
    Vector mask(static_cast<Eigen::Index>(units));
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask(i) = keep(rng) ? 1.0 : 0.0;
    return mask;
}

inline void check_trace(const Network& net, const ForwardTrace& trace) {
    if (trace.depth() != net.depth() || trace.inputs.size() != net.depth() + 1 || trace.slopes.size() != net.depth())
        throw ShapeMismatch("trace does not belong to this network");
}

}  // namespace detail

/// Forward pass with a full trace. Dropout masks are a pure function of
/// (dropout_seed, layer index, mask_seed), so repeated calls agree exactly.
inline ForwardTrace forward(const Network& net, const Vector& x, std::uint64_t dropout_seed = 0) {
    if (static_cast<std::size_t>(x.size()) != net.d_in())
        throw ShapeMismatch("input has dimension " + std::to_string(x.size()) + ", network expects " +
                            std::to_string(net.d_in()));
    const std::size_t n = net.depth();
    ForwardTrace trace;
    trace.inputs.reserve(n + 1);
    trace.preacts.reserve(n);
    trace.masks.resize(n);
    trace.slopes.reserve(n);
    trace.inputs.push_back(x);
    for (std::size_t k = 0; k < n; ++k) {
        const Layer& l = net.layer(k);
        Vector u = l.weights * trace.inputs.back() + l.bias;
        Vector z(u.size());
        Vector slope(u.size());
        if (const auto* d = std::get_if<act::Dropout>(&l.activation))
            trace.masks[k] = detail::dropout_mask(*d, l.d_out(), dropout_seed, k);
        const bool masked = trace.masks[k].size() > 0;
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            const auto a = activation_eval(l.activation, u(i), masked ? trace.masks[k](i) : 1.0);
            z(i) = a.value;
            slope(i) = a.d1;
        }
        trace.preacts.push_back(std::move(u));
        trace.slopes.push_back(std::move(slope));
        trace.inputs.push_back(std::move(z));
    }
    return trace;
}

/// f'(u^(k)) element-wise (dropout masks applied).
inline const Vector& activation_slopes(const Network& net, const ForwardTrace& trace, std::size_t k) {
    if (k >= net.depth()) throw IndexOutOfRange("layer index " + std::to_string(k) + " out of range");
    return trace.slopes.at(k);
}

/// f''(u^(k)) element-wise.
inline Vector activation_curvatures(const Network& net, const ForwardTrace& trace, std::size_t k) {
    const Layer& l = net.layer(k);
    const Vector& u = trace.preacts.at(k);
    Vector d(u.size());
    const bool masked = trace.masks[k].size() == u.size();
    for (Eigen::Index i = 0; i < u.size(); ++i)
        d(i) = activation_eval(l.activation, u(i), masked ? trace.masks[k](i) : 1.0).d2;
    return d;
}

/// D_{z^(k)} z^(k+1) = diag(f'(u^(k))) * W_k.
inline Matrix layer_jacobian(const Network& net, const ForwardTrace& trace, std::size_t k) {
    detail::check_trace(net, trace);
    if (k >= net.depth()) throw IndexOutOfRange("layer_jacobian: index " + std::to_string(k) + " out of range");
    return activation_slopes(net, trace, k).asDiagonal() * net.layer(k).weights;
}

/// D_{z^(k)} z^(n) = J^(n-1) ... J^(k); identity for k = n.
inline Matrix output_jacobian(const Network& net, const ForwardTrace& trace, std::size_t k) {
    detail::check_trace(net, trace);
    const std::size_t n = net.depth();
    if (k > n) throw IndexOutOfRange("output_jacobian: index " + std::to_string(k) + " out of range");
    Matrix p = Matrix::Identity(static_cast<Eigen::Index>(net.d_out()), static_cast<Eigen::Index>(net.d_out()));
    for (std::size_t i = n; i-- > k;) p = p * layer_jacobian(net, trace, i);
    return p;
}

/// J^(to-1) ... J^(from) * vec, without forming the product. vec has length d_from.
inline Vector push_forward(const Network& net, const ForwardTrace& trace, std::size_t from, std::size_t to, Vector vec) {
    if (from > to || to > net.depth()) throw IndexOutOfRange("push_forward: bad layer range");
    for (std::size_t i = from; i < to; ++i) vec = activation_slopes(net, trace, i).cwiseProduct(net.layer(i).weights * vec);
    return vec;
}

/// (J^(to-1) ... J^(from))^T * vec. vec has length d_to.
inline Vector pull_back(const Network& net, const ForwardTrace& trace, std::size_t from, std::size_t to, Vector vec) {
    if (from > to || to > net.depth()) throw IndexOutOfRange("pull_back: bad layer range");
    for (std::size_t i = to; i-- > from;)
        vec = net.layer(i).weights.transpose() * activation_slopes(net, trace, i).cwiseProduct(vec);
    return vec;
}

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
};

/// Backpropagation of D_{z^(n)} L to every layer's weights and biases.
inline Gradients weight_gradient(const Network& net, const ForwardTrace& trace, const Vector& output_grad) {
    detail::check_trace(net, trace);
    if (static_cast<std::size_t>(output_grad.size()) != net.d_out()) throw ShapeMismatch("output_grad has the wrong length");
    const std::size_t n = net.depth();
    Gradients g;
    g.weights.resize(n);
    g.biases.resize(n);
    Vector dz = output_grad;
    for (std::size_t k = n; k-- > 0;) {
        Vector du = activation_slopes(net, trace, k).cwiseProduct(dz);
        g.weights[k] = du * trace.inputs[k].transpose();
        if (k > 0) dz = net.layer(k).weights.transpose() * du;
        g.biases[k] = std::move(du);
    }
    return g;
}

}  // namespace curvinit
