#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "curvinit/dataset.hpp"
#include "curvinit/errors.hpp"
#include "curvinit/loss.hpp"
#include "curvinit/network.hpp"
#include "curvinit/random.hpp"

namespace curvinit {

struct TrainConfig {
    double learning_rate = 0.01;
    std::size_t epochs = 2;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    /// Applied to the inputs before training.
    double input_scale = 1.0;
    bool update_biases = true;

    void validate() const {
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InvalidInput("learning_rate must be >= 0");
        if (batch_size < 1) throw InvalidInput("batch_size must be at least 1");
        if (!(input_scale > 0.0)) throw InvalidInput("input_scale must be positive");
    }
};

struct TrainResult {
    Network net;
    /// Mean loss of every mini-batch, measured before its update.
    std::vector<double> loss_history;

    /// Mean of the per-batch losses of the last `batches` entries (the final epoch by default).
    double final_average_loss(std::size_t batches) const {
        if (loss_history.empty()) return 0.0;
        batches = std::min(batches, loss_history.size());
        return std::accumulate(loss_history.end() - static_cast<std::ptrdiff_t>(batches), loss_history.end(), 0.0) /
               static_cast<double>(batches);
    }
};

inline std::size_t batches_per_epoch(std::size_t samples, std::size_t batch_size) {
    return (samples + batch_size - 1) / batch_size;
}

/// Plain mini-batch SGD. Each epoch visits a permutation drawn from
/// (seed, epoch); dropout masks are redrawn for every batch.
inline TrainResult train_sgd(const Network& start, const Dataset& data, const LossKind& kind, const TrainConfig& cfg) {
    cfg.validate();
    data.validate();
    if (data.input_dim() != start.d_in()) throw ShapeMismatch("dataset inputs do not match the network");

    std::vector<Layer> layers(start.layers().begin(), start.layers().end());
    const std::size_t n = data.size();
    const std::size_t per_epoch = batches_per_epoch(n, cfg.batch_size);
    TrainResult result;
    result.loss_history.reserve(cfg.epochs * per_epoch);
    std::vector<std::size_t> order(n);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.seed, {0x5eedu, epoch}));
        std::shuffle(order.begin(), order.end(), rng);

        for (std::size_t b = 0; b < per_epoch; ++b) {
            const std::size_t batch_index = epoch * per_epoch + b;
            const std::size_t first = b * cfg.batch_size;
            const std::size_t last = std::min(n, first + cfg.batch_size);
            const double inv = 1.0 / static_cast<double>(last - first);
            const Network net(layers);
            const std::uint64_t dropout_seed = derive_seed(cfg.seed, {0xd40u, batch_index});

            std::vector<Matrix> gw(layers.size());
            std::vector<Vector> gb(layers.size());
            for (std::size_t k = 0; k < layers.size(); ++k) {
                gw[k] = Matrix::Zero(layers[k].weights.rows(), layers[k].weights.cols());
                gb[k] = Vector::Zero(layers[k].bias.size());
            }
            double batch_loss = 0.0;
            for (std::size_t j = first; j < last; ++j) {
                const std::size_t i = order[j];
                const ForwardTrace tr = forward(net, cfg.input_scale * data.input(i), dropout_seed);
                const Target t = data.target(i);
                batch_loss += loss_eval(kind, tr.output(), t);
                const Gradients g = weight_gradient(net, tr, loss_grad(kind, tr.output(), t));
                for (std::size_t k = 0; k < layers.size(); ++k) {
                    gw[k] += g.weights[k];
                    gb[k] += g.biases[k];
                }
            }
            batch_loss *= inv;
            if (!std::isfinite(batch_loss)) throw Divergence("training loss is not finite", batch_index);
            result.loss_history.push_back(batch_loss);

            for (std::size_t k = 0; k < layers.size(); ++k) {
                layers[k].weights -= (cfg.learning_rate * inv) * gw[k];
                if (cfg.update_biases) layers[k].bias -= (cfg.learning_rate * inv) * gb[k];
                if (!layers[k].weights.allFinite() || !layers[k].bias.allFinite())
                    throw Divergence("weights became non-finite", batch_index);
            }
        }
    }
    result.net = Network(std::move(layers));
    return result;
}

}  // namespace curvinit
