#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "curvinit/errors.hpp"
#include "curvinit/loss.hpp"
#include "curvinit/random.hpp"

namespace curvinit {

/// Inputs are stored one sample per row. Targets are either class indices
/// (num_classes > 0) or a dense regression matrix with one row per sample.
struct Dataset {
    Eigen::MatrixXd inputs;
    std::variant<std::vector<std::size_t>, Eigen::MatrixXd> targets;
    std::size_t num_classes = 0;
    std::string name;

    std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
    std::size_t input_dim() const { return static_cast<std::size_t>(inputs.cols()); }
    bool is_classification() const { return std::holds_alternative<std::vector<std::size_t>>(targets); }

    Eigen::VectorXd input(std::size_t i) const { return inputs.row(static_cast<Eigen::Index>(i)).transpose(); }

    Target target(std::size_t i) const {
        if (const auto* labels = std::get_if<std::vector<std::size_t>>(&targets)) return labels->at(i);
        return Eigen::VectorXd(std::get<Eigen::MatrixXd>(targets).row(static_cast<Eigen::Index>(i)).transpose());
    }

    void validate() const {
        if (size() == 0) throw DataError("dataset '" + name + "' is empty");
        if (!inputs.allFinite()) throw DataError("dataset '" + name + "' has non-finite inputs");
        if (const auto* labels = std::get_if<std::vector<std::size_t>>(&targets)) {
            if (labels->size() != size()) throw DataError("label count differs from sample count");
            for (auto c : *labels)
                if (c >= num_classes) throw DataError("class index " + std::to_string(c) + " out of range");
        } else {
            const auto& t = std::get<Eigen::MatrixXd>(targets);
            if (static_cast<std::size_t>(t.rows()) != size()) throw DataError("target rows differ from sample count");
            if (!t.allFinite()) throw DataError("dataset '" + name + "' has non-finite targets");
        }
    }

    /// The first n samples (all of them if n >= size()).
    Dataset head(std::size_t n) const {
        n = std::min(n, size());
        Dataset out{inputs.topRows(static_cast<Eigen::Index>(n)), {}, num_classes, name};
        if (const auto* labels = std::get_if<std::vector<std::size_t>>(&targets))
            out.targets = std::vector<std::size_t>(labels->begin(), labels->begin() + static_cast<std::ptrdiff_t>(n));
        else
            out.targets = Eigen::MatrixXd(std::get<Eigen::MatrixXd>(targets).topRows(static_cast<Eigen::Index>(n)));
        return out;
    }

    Dataset scaled(double factor) const {
        Dataset out = *this;
        out.inputs *= factor;
        return out;
    }

    double max_input_norm() const { return inputs.rowwise().norm().maxCoeff(); }
};

namespace detail {

inline std::uint32_t read_be32(std::istream& is, const std::string& path) {
    std::array<unsigned char, 4> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw DataError(path + ": truncated IDX header");
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

inline std::vector<unsigned char> read_payload(std::istream& is, std::size_t count, const std::string& path) {
    std::vector<unsigned char> bytes(count);
    if (count && !is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count)))
        throw DataError(path + ": truncated IDX payload");
    return bytes;
}

}  // namespace detail

/// Reads an MNIST image/label pair in IDX format (big-endian headers, magic
/// 2051 for images and 2049 for labels). Pixels are mapped to [0, 1].
inline Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw DataError("cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw DataError("cannot open " + labels_path);

    if (const auto magic = detail::read_be32(img, images_path); magic != 2051)
        throw DataError(images_path + ": wrong magic number " + std::to_string(magic) + " (expected 2051)");
    const std::size_t n_images = detail::read_be32(img, images_path);
    const std::size_t rows = detail::read_be32(img, images_path);
    const std::size_t cols = detail::read_be32(img, images_path);

    if (const auto magic = detail::read_be32(lab, labels_path); magic != 2049)
        throw DataError(labels_path + ": wrong magic number " + std::to_string(magic) + " (expected 2049)");
    const std::size_t n_labels = detail::read_be32(lab, labels_path);
    if (n_images != n_labels)
        throw DataError("image count " + std::to_string(n_images) + " differs from label count " + std::to_string(n_labels));
    if (n_images == 0 || rows * cols == 0) throw DataError(images_path + ": empty image set");

    const std::size_t pixels = rows * cols;
    const auto raw = detail::read_payload(img, n_images * pixels, images_path);
    const auto raw_labels = detail::read_payload(lab, n_labels, labels_path);

    Dataset d;
    d.name = "mnist";
    d.num_classes = 10;
    d.inputs.resize(static_cast<Eigen::Index>(n_images), static_cast<Eigen::Index>(pixels));
    for (std::size_t i = 0; i < n_images; ++i)
        for (std::size_t p = 0; p < pixels; ++p)
            d.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) = raw[i * pixels + p] / 255.0;
    std::vector<std::size_t> labels(raw_labels.begin(), raw_labels.end());
    const auto top = *std::max_element(labels.begin(), labels.end());
    d.num_classes = std::max<std::size_t>(10, top + 1);
    d.targets = std::move(labels);
    return d;
}

enum class SynthKind { Blobs, LinReg };

/// Deterministic desk-scale data.
///   Blobs: `classes_or_dout` Gaussian clusters around random unit-norm means
///          (noise std 0.25), labels assigned round-robin, then every input is
///          rescaled by one factor so that max ||x|| = scale.
///   LinReg: x ~ N(0, scale^2 / d_in) per entry, t = M x + N(0, 0.01^2) for a
///          hidden M ~ N(0, 1) of shape [dout, d_in].
inline Dataset synth_dataset(SynthKind kind, std::size_t n, std::size_t d_in, std::size_t classes_or_dout, double scale,
                             std::uint64_t seed) {
    if (n == 0 || d_in == 0 || classes_or_dout == 0) throw InvalidInput("synth_dataset: sizes must be positive");
    if (!(scale > 0.0)) throw InvalidInput("synth_dataset: scale must be positive");
    Rng rng(derive_seed(seed, {0x5a17u, static_cast<std::uint64_t>(kind)}));
    const auto N = static_cast<Eigen::Index>(n);
    const auto D = static_cast<Eigen::Index>(d_in);
    Dataset d;
    if (kind == SynthKind::Blobs) {
        if (classes_or_dout < 2) throw InvalidInput("blobs need at least two classes");
        d.name = "blobs";
        d.num_classes = classes_or_dout;
        Eigen::MatrixXd means(static_cast<Eigen::Index>(classes_or_dout), D);
        for (Eigen::Index c = 0; c < means.rows(); ++c) {
            Eigen::VectorXd m = normal_vector(D, 1.0, rng);
            means.row(c) = (m / m.norm()).transpose();
        }
        d.inputs.resize(N, D);
        std::vector<std::size_t> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = i % classes_or_dout;
            d.inputs.row(static_cast<Eigen::Index>(i)) =
                means.row(static_cast<Eigen::Index>(labels[i])) + normal_vector(D, 0.25, rng).transpose();
        }
        const double max_norm = d.inputs.rowwise().norm().maxCoeff();
        if (max_norm > 0.0) d.inputs *= scale / max_norm;
        d.targets = std::move(labels);
    } else {
        d.name = "linreg";
        const Eigen::MatrixXd hidden = normal_matrix(static_cast<Eigen::Index>(classes_or_dout), D, 1.0, rng);
        d.inputs = normal_matrix(N, D, scale / std::sqrt(static_cast<double>(d_in)), rng);
        Eigen::MatrixXd t = d.inputs * hidden.transpose();
        t += normal_matrix(N, t.cols(), 0.01, rng);
        d.targets = std::move(t);
    }
    return d;
}

}  // namespace curvinit
