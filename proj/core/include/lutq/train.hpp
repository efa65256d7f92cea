#pragma once

#include <string>
#include <vector>

#include "lutq/layers.hpp"

namespace lutq {

struct TrainConfig {
    double learning_rate = 0.1;
    double momentum = 0.0; // classical momentum
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    std::size_t kmeans_interval = 1; // minibatches between k-means refreshes
    int kmeans_steps = 1;            // M
    std::uint64_t seed = 1;
};

// Momentum buffers, lazily sized on first use.
struct SgdState {
    std::vector<LayerGrads> velocity;
};

// w <- w - lr * g (with optional classical momentum); updates full-precision
// accumulators only, never the cached Q.
void sgd_step(Network& net, const Gradients& grads, const TrainConfig& cfg,
              SgdState* state = nullptr);

struct Dataset {
    Tensor features; // [N, D]
    std::vector<int> labels;
    std::size_t num_classes = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dims() const { return features.rank() == 2 ? features.dim(1) : 0; }
};

// Delimiter-separated numeric rows (comma/space/tab/semicolon), one sample
// per row with the class label in the last column.
Dataset load_dsv(const std::string& path);

// Synthetic Gaussian blobs: class centers evenly spaced on a circle of the
// given radius, features drawn with the given noise stddev. Fully determined
// by the seed.
Dataset make_blobs(std::uint64_t seed, std::size_t samples, std::size_t classes,
                   double noise = 0.5, double radius = 2.5);

struct LossGrad {
    double value;
    Tensor grad; // w.r.t. the network output
};

// Mean cross-entropy of softmax(logits) against integer labels; the gradient
// is w.r.t. the logits (fused, log-sum-exp stable). Training nets end in an
// Identity layer and hand their logits here.
LossGrad softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Mean squared error 0.5*||y - t||^2 / B, for regression-style fixtures.
LossGrad squared_error(const Tensor& y, const Tensor& target);

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> trace;
};

/**
 * LUT-Q training loop: every kmeans_interval minibatches each quantized
 * layer's (d, A) is refreshed with M k-means steps from the current w_full
 * before the forward pass; gradients flow to the accumulators via the
 * straight-through estimator; SGD updates the accumulators. Deterministic
 * given cfg.seed.
 */
TrainResult train(Network& net, const Dataset& data, const TrainConfig& cfg);

// Full-dataset evaluation with running statistics (training = false).
EpochStats evaluate(Network& net, const Dataset& data);

// Calibration pass: float activations over one batch, per-layer
// r = 2^ceil(log2 max activation), then frozen.
void calibrate_activation_ranges(Network& net, const Tensor& batch);

// Builders for the desk-scale MLPs used by the CLI and tests.
AffineLayer make_affine(Rng& rng, std::size_t in, std::size_t out, Activation act);
Network make_mlp(Rng& rng, std::size_t in, const std::vector<std::size_t>& hidden,
                 std::size_t classes);

} // namespace lutq
