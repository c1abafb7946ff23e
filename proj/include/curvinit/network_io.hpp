#pragma once

#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "curvinit/format.hpp"
#include "curvinit/network.hpp"

namespace curvinit {

// Line-oriented text format:
//
//   layers=<n>
//   dims=<d_in>x<d_out> act=<name>[:<param>]
//   <d_out lines of d_in weights, row-major>
//   <one line of d_out biases>
//   ... repeated per layer
//
// Numbers are written with 17 significant digits, so a round trip is lossless.

inline void write_network(std::ostream& os, const Network& net) {
    os << "layers=" << net.depth() << '\n';
    for (const Layer& l : net.layers()) {
        os << "dims=" << l.d_in() << 'x' << l.d_out() << " act=" << activation_name(l.activation) << '\n';
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) {
                if (c) os << ' ';
                os << format_exact(l.weights(r, c));
            }
            os << '\n';
        }
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) {
            if (i) os << ' ';
            os << format_exact(l.bias(i));
        }
        os << '\n';
    }
}

inline std::string to_text(const Network& net) {
    std::ostringstream os;
    write_network(os, net);
    return os.str();
}

namespace detail {

inline std::string next_line(std::istream& is, const char* what) {
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) return line;
    }
    throw DataError(std::string("network file truncated: expected ") + what);
}

inline std::string strip_prefix(const std::string& token, const std::string& prefix) {
    if (token.rfind(prefix, 0) != 0) throw DataError("expected '" + prefix + "' in '" + token + "'");
    return token.substr(prefix.size());
}

inline Vector read_row(std::istream& is, std::size_t expected, const char* what) {
    std::istringstream row(next_line(is, what));
    Vector v(static_cast<Eigen::Index>(expected));
    std::string tok;
    std::size_t i = 0;
    while (row >> tok) {
        if (i == expected) throw DataError(std::string("too many entries in ") + what);
        try {
            v(static_cast<Eigen::Index>(i++)) = parse_double(tok);
        } catch (const InvalidInput& e) {
            throw DataError(e.what());
        }
    }
    if (i != expected) throw DataError(std::string("too few entries in ") + what);
    return v;
}

}  // namespace detail

inline Network read_network(std::istream& is) {
    std::size_t n = 0;
    try {
        n = parse_uint(detail::strip_prefix(detail::next_line(is, "header"), "layers="));
    } catch (const InvalidInput& e) {
        throw DataError(e.what());
    }
    if (n == 0) throw DataError("network file declares zero layers");
    std::vector<Layer> layers;
    layers.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::istringstream head(detail::next_line(is, "layer header"));
        std::string dims, act;
        if (!(head >> dims >> act)) throw DataError("malformed layer header");
        const std::string d = detail::strip_prefix(dims, "dims=");
        const auto x = d.find('x');
        if (x == std::string::npos) throw DataError("malformed dims '" + dims + "'");
        Layer l;
        std::size_t d_in = 0, d_out = 0;
        try {
            d_in = parse_uint(d.substr(0, x));
            d_out = parse_uint(d.substr(x + 1));
            l.activation = parse_activation(detail::strip_prefix(act, "act="));
        } catch (const InvalidInput& e) {
            throw DataError(e.what());
        }
        if (d_in == 0 || d_out == 0) throw DataError("layer dimensions must be positive");
        l.weights.resize(static_cast<Eigen::Index>(d_out), static_cast<Eigen::Index>(d_in));
        for (std::size_t r = 0; r < d_out; ++r) l.weights.row(static_cast<Eigen::Index>(r)) = detail::read_row(is, d_in, "weight row").transpose();
        l.bias = detail::read_row(is, d_out, "bias row");
        layers.push_back(std::move(l));
    }
    try {
        return Network(std::move(layers));
    } catch (const Error& e) {
        throw DataError(e.what());
    }
}

inline Network from_text(const std::string& text) {
    std::istringstream is(text);
    return read_network(is);
}

}  // namespace curvinit
