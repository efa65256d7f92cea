#pragma once

#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "lutq/quantize.hpp"
#include "lutq/tensor.hpp"

namespace lutq {

enum class Activation { Identity, ReLU, Softmax };

enum class ActQuantScheme { None, Fp, Pow2 };

// Post-ReLU activation quantization to the one-sided range [0, r].
// range_r must be a power of two; calibrated once, then frozen.
struct ActQuantConfig {
    int n_bits = 8;
    ActQuantScheme scheme = ActQuantScheme::None;
    double range_r = 1.0;
    bool calibrated = false;
};

/**
 * Fully connected layer. w_full is the full-precision accumulator the
 * optimizer updates; when qcfg is set the forward pass uses the cached
 * lookup(dict, assign) instead, never w_full directly. Biases stay full
 * precision.
 */
struct AffineLayer {
    Tensor w_full; // [O, I]
    Tensor bias;   // [O]
    Activation activation = Activation::Identity;
    std::optional<QuantizerConfig> qcfg;
    std::optional<QuantizedWeight> qstate;
    std::optional<ActQuantConfig> act_quant;
};

// 2-D convolution with square zero padding; weights [O, I, Fh, Fw], inputs
// [B, I, H, W]. Quantization fields behave exactly as in AffineLayer.
struct Conv2DLayer {
    Tensor w_full; // [O, I, Fh, Fw]
    Tensor bias;   // [O]
    std::size_t stride = 1;
    std::size_t padding = 0;
    Activation activation = Activation::Identity;
    std::optional<QuantizerConfig> qcfg;
    std::optional<QuantizedWeight> qstate;
    std::optional<ActQuantConfig> act_quant;
};

enum class BnMode { Traditional, MultiplierLess };

/**
 * Batch normalization over features ([B, F] inputs) or channels
 * ([B, C, H, W] inputs). In MultiplierLess mode the scale actually applied
 * comes from rounding a = gamma / sqrt(var + eps) to a power of two; the
 * full-precision gamma keeps accumulating gradients through the rounding.
 */
struct BatchNormLayer {
    Tensor gamma, beta;
    Tensor running_mean, running_var;
    double epsilon = 1e-5;
    BnMode mode = BnMode::Traditional;
    double stat_momentum = 0.9;
};

using Layer = std::variant<AffineLayer, Conv2DLayer, BatchNormLayer>;

struct Network {
    std::vector<Layer> layers;
};

struct LayerTrace {
    Tensor input;
    Tensor pre_act;  // affine/conv: z before the activation
    Tensor act_preq; // activation output before activation quantization
    Tensor output;
    // batch norm
    Tensor xhat;
    Tensor inv_std;
    Tensor scale_eff; // multiplier applied to xhat (gamma, or its pow2-rounded stand-in)
};

struct ForwardTrace {
    std::vector<LayerTrace> layers;
    bool training = false;
};

/**
 * Runs the network on a batch. Quantized layers use their cached Q; batch
 * statistics are used when training (updating the running averages),
 * running statistics otherwise. Pass a trace to capture the intermediates
 * backward_ste needs.
 */
Tensor forward(Network& net, const Tensor& x_batch, bool training,
               ForwardTrace* trace = nullptr);

struct LayerGrads {
    Tensor w;     // affine/conv: gradient w.r.t. w_full (== gradient w.r.t. Q, STE)
    Tensor bias;
    Tensor gamma; // batch norm
    Tensor beta;
};

struct Gradients {
    std::vector<LayerGrads> layers;
};

/**
 * Backpropagation with the straight-through estimator: the lookup
 * quantizer is treated as identity, so the returned weight gradient is the
 * gradient w.r.t. Q of the quantized forward, delivered unchanged to w_full.
 * Activation quantizers backpropagate a clipped pass-through (1 inside
 * [0, r], 0 above). Multiplier-less batch norm updates the full-precision
 * gamma through the pow-2 rounding as pass-through.
 */
Gradients backward_ste(const Network& net, const Tensor& loss_grad, const ForwardTrace& trace);

// Refreshes every quantized layer's (dictionary, assignment) with
// `kmeans_steps` k-means iterations from the current w_full.
void refresh_quantization(Network& net, int kmeans_steps);

// Folded inference scale/offset of y = a*x + b. MultiplierLess mode
// returns the pow2-rounded scale.
std::pair<Tensor, Tensor> bn_fold_scale(const BatchNormLayer& layer);

// One-sided activation quantizer over [0, r] (helper shared with tests).
double quantize_activation(double a, const ActQuantConfig& cfg);

} // namespace lutq
