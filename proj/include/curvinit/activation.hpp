#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <variant>

#include "curvinit/errors.hpp"
#include "curvinit/format.hpp"

namespace curvinit {

namespace act {

struct Linear {};
struct Tanh {};
struct Sigmoid {};
struct ReLU {};

struct LeakyReLU {
    double slope = 0.01;
};

/// Inverted dropout: surviving units are rescaled by 1/keep_rate. The mask is
/// drawn per forward trace; mask_seed distinguishes independent dropout layers.
struct Dropout {
    double keep_rate = 1.0;
    std::uint64_t mask_seed = 0;
};

}  // namespace act

using ActivationKind = std::variant<act::Linear, act::Tanh, act::Sigmoid, act::ReLU, act::LeakyReLU, act::Dropout>;

/// f(u), f'(u), f''(u) at a single point.
struct ActivationValue {
    double value;
    double d1;
    double d2;
};

inline void validate(const ActivationKind& kind) {
    if (const auto* l = std::get_if<act::LeakyReLU>(&kind)) {
        if (!std::isfinite(l->slope) || l->slope < 0.0)
            throw InvalidInput("leaky_relu slope must be finite and nonnegative");
    }
    if (const auto* d = std::get_if<act::Dropout>(&kind)) {
        if (!(d->keep_rate > 0.0 && d->keep_rate <= 1.0))
            throw InvalidInput("dropout keep_rate must lie in (0, 1]");
    }
}

inline bool is_dropout(const ActivationKind& kind) { return std::holds_alternative<act::Dropout>(kind); }

/// Evaluates the activation and its first two derivatives. `mask` is the
/// realized Bernoulli bit for dropout units and ignored otherwise. ReLU and
/// LeakyReLU use the subgradient f'(0) = 0 / slope at the kink.
inline ActivationValue activation_eval(const ActivationKind& kind, double u, double mask = 1.0) {
    return std::visit(
        [u, mask](const auto& a) -> ActivationValue {
            using A = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<A, act::Linear>) {
                return {u, 1.0, 0.0};
            } else if constexpr (std::is_same_v<A, act::Tanh>) {
                const double t = std::tanh(u);
                const double s = 1.0 - t * t;
                return {t, s, -2.0 * t * s};
            } else if constexpr (std::is_same_v<A, act::Sigmoid>) {
                // split on sign to avoid exp overflow
                const double s = u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
                const double d1 = s * (1.0 - s);
                return {s, d1, d1 * (1.0 - 2.0 * s)};
            } else if constexpr (std::is_same_v<A, act::ReLU>) {
                return u > 0.0 ? ActivationValue{u, 1.0, 0.0} : ActivationValue{0.0, 0.0, 0.0};
            } else if constexpr (std::is_same_v<A, act::LeakyReLU>) {
                return u > 0.0 ? ActivationValue{u, 1.0, 0.0} : ActivationValue{a.slope * u, a.slope, 0.0};
            } else {
                const double scale = mask / a.keep_rate;
                return {scale * u, scale, 0.0};
            }
        },
        kind);
}

/// Text name used by the network format and the CLI: `tanh`, `leaky_relu:0.1`,
/// `dropout:0.5` or `dropout:0.5:7` (keep rate, then mask seed when nonzero).
inline std::string activation_name(const ActivationKind& kind) {
    return std::visit(
        [](const auto& a) -> std::string {
            using A = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<A, act::Linear>) return "linear";
            else if constexpr (std::is_same_v<A, act::Tanh>) return "tanh";
            else if constexpr (std::is_same_v<A, act::Sigmoid>) return "sigmoid";
            else if constexpr (std::is_same_v<A, act::ReLU>) return "relu";
            else if constexpr (std::is_same_v<A, act::LeakyReLU>) return "leaky_relu:" + format_shortest(a.slope);
            else {
                std::string s = "dropout:" + format_shortest(a.keep_rate);
                if (a.mask_seed != 0) s += ":" + std::to_string(a.mask_seed);
                return s;
            }
        },
        kind);
}

inline ActivationKind parse_activation(const std::string& text) {
    const auto colon = text.find(':');
    const std::string name = text.substr(0, colon);
    const std::string param = colon == std::string::npos ? std::string{} : text.substr(colon + 1);
    auto require_no_param = [&]() {
        if (!param.empty()) throw InvalidInput("activation '" + name + "' takes no parameter");
    };
    ActivationKind kind;
    if (name == "linear") {
        require_no_param();
        kind = act::Linear{};
    } else if (name == "tanh") {
        require_no_param();
        kind = act::Tanh{};
    } else if (name == "sigmoid") {
        require_no_param();
        kind = act::Sigmoid{};
    } else if (name == "relu") {
        require_no_param();
        kind = act::ReLU{};
    } else if (name == "leaky_relu") {
        kind = act::LeakyReLU{param.empty() ? 0.01 : parse_double(param)};
    } else if (name == "dropout") {
        if (param.empty()) throw InvalidInput("dropout needs a keep rate, e.g. dropout:0.5");
        const auto second = param.find(':');
        act::Dropout d;
        d.keep_rate = parse_double(param.substr(0, second));
        if (second != std::string::npos) d.mask_seed = parse_uint(param.substr(second + 1));
        kind = d;
    } else {
        throw InvalidInput("unknown activation '" + text + "'");
    }
    validate(kind);
    return kind;
}

}  // namespace curvinit
