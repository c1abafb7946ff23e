#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "curvinit/curvature.hpp"
#include "curvinit/dataset.hpp"
#include "curvinit/errors.hpp"
#include "curvinit/format.hpp"
#include "curvinit/network.hpp"
#include "curvinit/random.hpp"

namespace curvinit {

namespace scheme {

/// Var = 2 / (d_in + d_out).
struct Glorot {};
/// Var = 1 / d_out: keeps the forward product norm stable.
struct ForwardStable {};
/// Var = 1 / d_in: keeps the backward product norm stable.
struct BackwardStable {};
struct Fixed {
    double std = 0.1;
};

}  // namespace scheme

struct InitScheme {
    std::variant<scheme::Glorot, scheme::ForwardStable, scheme::BackwardStable, scheme::Fixed> base;
    bool relu_correction = false;
    bool dropout_correction = false;

    static InitScheme glorot() { return {scheme::Glorot{}}; }
    static InitScheme forward_stable() { return {scheme::ForwardStable{}}; }
    static InitScheme backward_stable() { return {scheme::BackwardStable{}}; }
    static InitScheme fixed(double std) {
        InitScheme s{scheme::Fixed{std}};
        s.validate();
        return s;
    }

    InitScheme with_relu_correction(bool on = true) const {
        InitScheme s = *this;
        s.relu_correction = on;
        return s;
    }
    InitScheme with_dropout_correction(bool on = true) const {
        InitScheme s = *this;
        s.dropout_correction = on;
        return s;
    }

    void validate() const {
        if (const auto* f = std::get_if<scheme::Fixed>(&base))
            if (!(f->std > 0.0) || !std::isfinite(f->std)) throw InvalidInput("fixed init std must be positive and finite");
    }
};

/// Parses the CLI names `glorot`, `forward`, `backward`, `fixed:<std>`.
inline InitScheme parse_scheme(const std::string& text) {
    if (text == "glorot") return InitScheme::glorot();
    if (text == "forward") return InitScheme::forward_stable();
    if (text == "backward") return InitScheme::backward_stable();
    if (text.rfind("fixed:", 0) == 0) return InitScheme::fixed(parse_double(text.substr(6)));
    throw InvalidInput("unknown init scheme '" + text + "'");
}

inline std::string scheme_name(const InitScheme& s) {
    return std::visit(
        [](const auto& b) -> std::string {
            using B = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<B, scheme::Glorot>) return "glorot";
            else if constexpr (std::is_same_v<B, scheme::ForwardStable>) return "forward";
            else if constexpr (std::is_same_v<B, scheme::BackwardStable>) return "backward";
            else return "fixed:" + format_shortest(b.std);
        },
        s.base);
}

/// Weight std for one layer. The ReLU correction (divide by sqrt 2) applies
/// when the layer's own activation is ReLU; the dropout correction (divide by
/// sqrt(keep_rate)) applies when `next_activation` is a dropout.
inline double scheme_std(const InitScheme& s, const LayerSpec& layer, const ActivationKind& next_activation) {
    s.validate();
    if (layer.d_in < 1 || layer.d_out < 1) throw InvalidInput("layer dimensions must be positive");
    const double d_in = static_cast<double>(layer.d_in);
    const double d_out = static_cast<double>(layer.d_out);
    double std = std::visit(
        [&](const auto& b) -> double {
            using B = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<B, scheme::Glorot>) return std::sqrt(2.0 / (d_in + d_out));
            else if constexpr (std::is_same_v<B, scheme::ForwardStable>) return std::sqrt(1.0 / d_out);
            else if constexpr (std::is_same_v<B, scheme::BackwardStable>) return std::sqrt(1.0 / d_in);
            else return b.std;
        },
        s.base);
    if (s.relu_correction && std::holds_alternative<act::ReLU>(layer.activation)) std /= std::sqrt(2.0);
    if (s.dropout_correction)
        if (const auto* d = std::get_if<act::Dropout>(&next_activation)) std /= std::sqrt(d->keep_rate);
    return std;
}

inline void check_chained(std::span<const LayerSpec> spec) {
    if (spec.empty()) throw InvalidInput("layer spec is empty");
    for (std::size_t k = 0; k < spec.size(); ++k) {
        if (spec[k].d_in < 1 || spec[k].d_out < 1) throw InvalidInput("layer dimensions must be positive");
        if (k > 0 && spec[k].d_in != spec[k - 1].d_out) throw ShapeMismatch("layer spec is not dimension-chained");
        validate(spec[k].activation);
    }
}

/// Gaussian weights N(0, (scale * sigma_k)^2) and zero biases. The standard
/// normal draws depend only on (seed, layer), so changing `scale` rescales the
/// same network.
inline Network initialize(std::span<const LayerSpec> spec, const InitScheme& s, std::uint64_t seed, double scale = 1.0) {
    check_chained(spec);
    if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidInput("init scale must be positive and finite");
    std::vector<Layer> layers;
    layers.reserve(spec.size());
    for (std::size_t k = 0; k < spec.size(); ++k) {
        const double sigma = scale * scheme_std(s, spec[k], spec[k].activation);
        Rng rng(derive_seed(seed, {0x1417u, static_cast<std::uint64_t>(k)}));
        Layer l;
        l.weights = sigma * normal_matrix(static_cast<Eigen::Index>(spec[k].d_out), static_cast<Eigen::Index>(spec[k].d_in), 1.0, rng);
        l.bias = Vector::Zero(static_cast<Eigen::Index>(spec[k].d_out));
        l.activation = spec[k].activation;
        layers.push_back(std::move(l));
    }
    return Network(std::move(layers));
}

struct PowerIterationSettings {
    std::size_t iters = 500;
    double tol = 1e-8;
};

/// Top eigenvalue of the batch-averaged approximate Hessian of `layer`.
inline double approx_top_eigenvalue(const Network& net, const Dataset& data, const LossKind& kind, std::size_t layer,
                                    std::size_t sample_limit, std::uint64_t seed, PowerIterationSettings pi = {}) {
    const ApproxHessian h(net, data, kind, layer, sample_limit);
    return top_eigenvalue(h, h.rows(), h.cols(), pi.iters, pi.tol, seed).eigenvalue;
}

struct Calibration {
    double scale = 1.0;
    double achieved_eigenvalue = 0.0;
    std::size_t evaluations = 0;
};

/// Samples used for the calibration eigenvalue.
inline constexpr std::size_t calibration_batch = 64;

/// Finds one global factor s for every layer's base std so that the top
/// approximate Hessian eigenvalue at `layer` lands in [target/(1+tol), target*(1+tol)].
/// Brackets s in [2^-20, 2^20] by doubling or halving from 1, then bisects
/// geometrically at most max_bisect times.
inline Calibration calibrate_to_unit_hessian(std::span<const LayerSpec> spec, const InitScheme& base, const Dataset& data,
                                             const LossKind& kind, std::size_t layer, double target = 1.0,
                                             double tol = 0.1, std::size_t max_bisect = 60, std::uint64_t seed = 0) {
    check_chained(spec);
    if (!(target > 0.0)) throw InvalidInput("calibration target must be positive");
    if (!(tol > 0.0)) throw InvalidInput("calibration tolerance must be positive");
    if (data.size() == 0) throw InvalidInput("calibration needs data");
    if (layer >= spec.size()) throw IndexOutOfRange("calibration layer out of range");

    const std::size_t batch = std::min(calibration_batch, data.size());
    const double lo_band = target / (1.0 + tol);
    const double hi_band = target * (1.0 + tol);
    Calibration result;
    auto eigen_at = [&](double s) {
        ++result.evaluations;
        const double e = approx_top_eigenvalue(initialize(spec, base, seed, s), data, kind, layer, batch,
                                               derive_seed(seed, {0xca1u}));
        if (!std::isfinite(e)) throw NonFinite("non-finite eigenvalue at scale " + format_shortest(s));
        return e;
    };
    auto in_band = [&](double e) { return e >= lo_band && e <= hi_band; };

    constexpr int max_exponent = 20;
    double s = 1.0;
    double e = eigen_at(s);
    if (in_band(e)) return {s, e, result.evaluations};

    // bracket: lo has eigenvalue below target, hi above
    double lo = s, hi = s;
    double e_lo = e, e_hi = e;
    const bool grow = e < target;
    int exponent = 0;
    while (true) {
        if (++exponent > max_exponent)
            throw BracketNotFound("no scale in [2^-20, 2^20] brings the eigenvalue across " + format_shortest(target) +
                                  " (last eigenvalue " + format_shortest(e) + ")");
        s = grow ? s * 2.0 : s / 2.0;
        e = eigen_at(s);
        if (in_band(e)) return {s, e, result.evaluations};
        if (grow) {
            if (e > target) {
                hi = s, e_hi = e;
                break;
            }
            lo = s, e_lo = e;
        } else {
            if (e < target) {
                lo = s, e_lo = e;
                break;
            }
            hi = s, e_hi = e;
        }
    }

    double best_s = std::abs(std::log(e_lo / target)) < std::abs(std::log(e_hi / target)) ? lo : hi;
    double best_e = best_s == lo ? e_lo : e_hi;
    for (std::size_t i = 0; i < max_bisect; ++i) {
        const double mid = std::sqrt(lo * hi);
        const double em = eigen_at(mid);
        if (std::abs(std::log(em / target)) < std::abs(std::log(best_e / target))) best_s = mid, best_e = em;
        if (in_band(em)) break;
        if (em < target) lo = mid;
        else hi = mid;
    }
    return {best_s, best_e, result.evaluations};
}

}  // namespace curvinit
