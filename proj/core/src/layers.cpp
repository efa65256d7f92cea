#include "lutq/layers.hpp"

#include <cmath>
#include <string>

namespace lutq {

namespace {

// Quantized layers never touch w_full in the forward pass.
template <class L>
const Tensor& effective_weight(const L& layer) {
    if (layer.qstate) return layer.qstate->q;
    if (layer.qcfg) {
        throw StateError("quantized layer has no dictionary/assignment state; "
                         "refresh_quantization must run before the forward pass");
    }
    return layer.w_full;
}

Tensor relu(const Tensor& z) {
    Tensor a = z;
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::max(0.0, a[i]);
    return a;
}

Tensor softmax_rows(const Tensor& z) {
    if (z.rank() != 2) throw DimensionError("softmax: expected a [B, O] tensor");
    const std::size_t B = z.dim(0), O = z.dim(1);
    Tensor p({B, O});
    for (std::size_t b = 0; b < B; ++b) {
        double m = z[b * O];
        for (std::size_t o = 1; o < O; ++o) m = std::max(m, z[b * O + o]);
        double s = 0.0;
        for (std::size_t o = 0; o < O; ++o) {
            double e = std::exp(z[b * O + o] - m);
            p[b * O + o] = e;
            s += e;
        }
        for (std::size_t o = 0; o < O; ++o) p[b * O + o] /= s;
    }
    return p;
}

Tensor apply_activation(const Tensor& z, Activation act) {
    switch (act) {
    case Activation::Identity: return z;
    case Activation::ReLU: return relu(z);
    case Activation::Softmax: return softmax_rows(z);
    }
    throw ArgumentError("unknown activation");
}

bool act_quant_active(const std::optional<ActQuantConfig>& cfg) {
    return cfg && cfg->scheme != ActQuantScheme::None;
}

Tensor apply_act_quant(const Tensor& a, const ActQuantConfig& cfg) {
    Tensor q = a;
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = quantize_activation(q[i], cfg);
    ensure_finite(q, "activation quantization");
    return q;
}

// dL/d(pre-activation) from dL/d(activation output).
Tensor activation_backward(const Tensor& g, Activation act, const Tensor& pre_act,
                           const Tensor& post_act) {
    switch (act) {
    case Activation::Identity: return g;
    case Activation::ReLU: {
        Tensor dz = g;
        for (std::size_t i = 0; i < dz.size(); ++i) {
            if (pre_act[i] <= 0.0) dz[i] = 0.0;
        }
        return dz;
    }
    case Activation::Softmax: {
        const std::size_t B = post_act.dim(0), O = post_act.dim(1);
        Tensor dz({B, O});
        for (std::size_t b = 0; b < B; ++b) {
            double dot = 0.0;
            for (std::size_t o = 0; o < O; ++o) dot += g[b * O + o] * post_act[b * O + o];
            for (std::size_t o = 0; o < O; ++o) {
                dz[b * O + o] = post_act[b * O + o] * (g[b * O + o] - dot);
            }
        }
        return dz;
    }
    }
    throw ArgumentError("unknown activation");
}

// ---------------------------------------------------------------------------
// Affine
// ---------------------------------------------------------------------------

Tensor affine_forward(const AffineLayer& layer, const Tensor& x, LayerTrace* t) {
    if (x.rank() != 2) throw DimensionError("affine: expected a [B, I] input");
    const Tensor& w = effective_weight(layer);
    const std::size_t B = x.dim(0), I = x.dim(1);
    const std::size_t O = w.dim(0);
    if (w.dim(1) != I) throw DimensionError("affine: input width does not match the layer");
    if (layer.bias.size() != O) throw DimensionError("affine: bias size mismatch");

    Tensor z({B, O});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t o = 0; o < O; ++o) {
            double acc = layer.bias[o];
            for (std::size_t i = 0; i < I; ++i) acc += w[o * I + i] * x[b * I + i];
            z[b * O + o] = acc;
        }
    }
    ensure_finite(z, "affine forward");

    Tensor a = apply_activation(z, layer.activation);
    Tensor out = a;
    if (act_quant_active(layer.act_quant)) {
        if (layer.activation != Activation::ReLU) {
            throw ArgumentError("activation quantization is only supported after ReLU");
        }
        out = apply_act_quant(a, *layer.act_quant);
    }
    if (t) {
        t->input = x;
        t->pre_act = std::move(z);
        t->act_preq = std::move(a);
        t->output = out;
    }
    return out;
}

void affine_backward(const AffineLayer& layer, const LayerTrace& t, const Tensor& g_out,
                     LayerGrads& grads, Tensor& g_in) {
    const Tensor& w = effective_weight(layer);
    const std::size_t B = t.input.dim(0), I = t.input.dim(1), O = w.dim(0);

    Tensor g = g_out;
    if (act_quant_active(layer.act_quant)) {
        const double r = layer.act_quant->range_r;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (t.act_preq[i] > r) g[i] = 0.0; // clipped pass-through
        }
    }
    Tensor dz = activation_backward(g, layer.activation, t.pre_act, t.act_preq);

    grads.w = Tensor({O, I});
    grads.bias = Tensor({O});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t o = 0; o < O; ++o) {
            const double d = dz[b * O + o];
            grads.bias[o] += d;
            for (std::size_t i = 0; i < I; ++i) grads.w[o * I + i] += d * t.input[b * I + i];
        }
    }
    g_in = Tensor({B, I});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t o = 0; o < O; ++o) {
            const double d = dz[b * O + o];
            for (std::size_t i = 0; i < I; ++i) g_in[b * I + i] += d * w[o * I + i];
        }
    }
}

// ---------------------------------------------------------------------------
// Conv2D
// ---------------------------------------------------------------------------

Tensor conv_forward(const Conv2DLayer& layer, const Tensor& x, LayerTrace* t) {
    if (x.rank() != 4) throw DimensionError("conv2d: expected a [B, C, H, W] input");
    const Tensor& w = effective_weight(layer);
    if (w.rank() != 4) throw DimensionError("conv2d: expected [O, I, Fh, Fw] weights");
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t O = w.dim(0), Fh = w.dim(2), Fw = w.dim(3);
    if (w.dim(1) != C) throw DimensionError("conv2d: channel count mismatch");
    const std::size_t s = layer.stride, p = layer.padding;
    if (H + 2 * p < Fh || W + 2 * p < Fw) throw DimensionError("conv2d: kernel larger than input");
    const std::size_t Ho = (H + 2 * p - Fh) / s + 1;
    const std::size_t Wo = (W + 2 * p - Fw) / s + 1;

    Tensor z({B, O, Ho, Wo});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t o = 0; o < O; ++o) {
            for (std::size_t i = 0; i < Ho; ++i) {
                for (std::size_t j = 0; j < Wo; ++j) {
                    double acc = layer.bias[o];
                    for (std::size_t c = 0; c < C; ++c) {
                        for (std::size_t u = 0; u < Fh; ++u) {
                            const std::ptrdiff_t yy =
                                static_cast<std::ptrdiff_t>(i * s + u) - static_cast<std::ptrdiff_t>(p);
                            if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(H)) continue;
                            for (std::size_t v = 0; v < Fw; ++v) {
                                const std::ptrdiff_t xx =
                                    static_cast<std::ptrdiff_t>(j * s + v) - static_cast<std::ptrdiff_t>(p);
                                if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(W)) continue;
                                acc += w(o, c, u, v) * x(b, c, static_cast<std::size_t>(yy),
                                                         static_cast<std::size_t>(xx));
                            }
                        }
                    }
                    z(b, o, i, j) = acc;
                }
            }
        }
    }
    ensure_finite(z, "conv2d forward");

    if (layer.activation == Activation::Softmax) {
        throw ArgumentError("conv2d: softmax activation is not supported on feature maps");
    }
    Tensor a = apply_activation(z, layer.activation);
    Tensor out = a;
    if (act_quant_active(layer.act_quant)) {
        if (layer.activation != Activation::ReLU) {
            throw ArgumentError("activation quantization is only supported after ReLU");
        }
        out = apply_act_quant(a, *layer.act_quant);
    }
    if (t) {
        t->input = x;
        t->pre_act = std::move(z);
        t->act_preq = std::move(a);
        t->output = out;
    }
    return out;
}

void conv_backward(const Conv2DLayer& layer, const LayerTrace& t, const Tensor& g_out,
                   LayerGrads& grads, Tensor& g_in) {
    const Tensor& w = effective_weight(layer);
    const Tensor& x = t.input;
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t O = w.dim(0), Fh = w.dim(2), Fw = w.dim(3);
    const std::size_t s = layer.stride, p = layer.padding;
    const std::size_t Ho = t.pre_act.dim(2), Wo = t.pre_act.dim(3);

    Tensor g = g_out;
    if (act_quant_active(layer.act_quant)) {
        const double r = layer.act_quant->range_r;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (t.act_preq[i] > r) g[i] = 0.0;
        }
    }
    Tensor dz = activation_backward(g, layer.activation, t.pre_act, t.act_preq);

    grads.w = Tensor({O, C, Fh, Fw});
    grads.bias = Tensor({O});
    g_in = Tensor({B, C, H, W});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t o = 0; o < O; ++o) {
            for (std::size_t i = 0; i < Ho; ++i) {
                for (std::size_t j = 0; j < Wo; ++j) {
                    const double d = dz(b, o, i, j);
                    if (d == 0.0) continue;
                    grads.bias[o] += d;
                    for (std::size_t c = 0; c < C; ++c) {
                        for (std::size_t u = 0; u < Fh; ++u) {
                            const std::ptrdiff_t yy =
                                static_cast<std::ptrdiff_t>(i * s + u) - static_cast<std::ptrdiff_t>(p);
                            if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(H)) continue;
                            for (std::size_t v = 0; v < Fw; ++v) {
                                const std::ptrdiff_t xx =
                                    static_cast<std::ptrdiff_t>(j * s + v) - static_cast<std::ptrdiff_t>(p);
                                if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(W)) continue;
                                grads.w(o, c, u, v) += d * x(b, c, static_cast<std::size_t>(yy),
                                                             static_cast<std::size_t>(xx));
                                g_in(b, c, static_cast<std::size_t>(yy),
                                     static_cast<std::size_t>(xx)) += d * w(o, c, u, v);
                            }
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

struct BnAxes {
    std::size_t features = 0; // per-feature/channel parameter count
    std::size_t groups = 0;   // samples normalized per feature
};

BnAxes bn_axes(const Tensor& x) {
    if (x.rank() == 2) return {x.dim(1), x.dim(0)};
    if (x.rank() == 4) return {x.dim(1), x.dim(0) * x.dim(2) * x.dim(3)};
    throw DimensionError("batch norm: expected [B, F] or [B, C, H, W] input");
}

// Flat iteration that visits every element of feature f.
template <class Fn>
void for_each_feature(const Tensor& x, std::size_t f, Fn&& fn) {
    if (x.rank() == 2) {
        const std::size_t B = x.dim(0), F = x.dim(1);
        for (std::size_t b = 0; b < B; ++b) fn(b * F + f);
    } else {
        const std::size_t B = x.dim(0), C = x.dim(1), S = x.dim(2) * x.dim(3);
        for (std::size_t b = 0; b < B; ++b) {
            const std::size_t base = (b * C + f) * S;
            for (std::size_t i = 0; i < S; ++i) fn(base + i);
        }
    }
}

Tensor bn_forward(BatchNormLayer& layer, const Tensor& x, bool training, LayerTrace* t) {
    const BnAxes ax = bn_axes(x);
    if (layer.gamma.size() != ax.features) throw DimensionError("batch norm: gamma size mismatch");

    Tensor mean({ax.features}), var({ax.features});
    if (training) {
        for (std::size_t f = 0; f < ax.features; ++f) {
            double s = 0.0;
            for_each_feature(x, f, [&](std::size_t i) { s += x[i]; });
            mean[f] = s / static_cast<double>(ax.groups);
            double v = 0.0;
            for_each_feature(x, f, [&](std::size_t i) {
                const double d = x[i] - mean[f];
                v += d * d;
            });
            var[f] = v / static_cast<double>(ax.groups);
        }
        const double m = layer.stat_momentum;
        for (std::size_t f = 0; f < ax.features; ++f) {
            layer.running_mean[f] = m * layer.running_mean[f] + (1.0 - m) * mean[f];
            layer.running_var[f] = m * layer.running_var[f] + (1.0 - m) * var[f];
        }
    } else {
        mean = layer.running_mean;
        var = layer.running_var;
    }

    Tensor inv_std({ax.features}), scale_eff({ax.features});
    for (std::size_t f = 0; f < ax.features; ++f) {
        inv_std[f] = 1.0 / std::sqrt(var[f] + layer.epsilon);
        if (layer.mode == BnMode::Traditional) {
            scale_eff[f] = layer.gamma[f];
        } else {
            // Forward uses the pow2-rounded inference scale; gamma itself
            // stays full precision for the optimizer.
            const double a = layer.gamma[f] * inv_std[f];
            const double a_hat = (a == 0.0) ? 0.0 : round_pow2(a);
            scale_eff[f] = a_hat / inv_std[f];
        }
    }

    Tensor xhat(x.shape()), y(x.shape());
    for (std::size_t f = 0; f < ax.features; ++f) {
        const double mu = mean[f], is = inv_std[f], sc = scale_eff[f], be = layer.beta[f];
        for_each_feature(x, f, [&](std::size_t i) {
            xhat[i] = (x[i] - mu) * is;
            y[i] = sc * xhat[i] + be;
        });
    }
    ensure_finite(y, "batch norm forward");
    if (t) {
        t->input = x;
        t->xhat = std::move(xhat);
        t->inv_std = std::move(inv_std);
        t->scale_eff = std::move(scale_eff);
        t->output = y;
    }
    return y;
}

void bn_backward(const LayerTrace& t, bool training, const Tensor& g_out, LayerGrads& grads,
                 Tensor& g_in) {
    const BnAxes ax = bn_axes(t.input);
    grads.gamma = Tensor({ax.features});
    grads.beta = Tensor({ax.features});
    g_in = Tensor(t.input.shape());
    const double n = static_cast<double>(ax.groups);
    for (std::size_t f = 0; f < ax.features; ++f) {
        double sum_g = 0.0, sum_gx = 0.0;
        for_each_feature(t.input, f, [&](std::size_t i) {
            sum_g += g_out[i];
            sum_gx += g_out[i] * t.xhat[i];
        });
        grads.beta[f] = sum_g;
        grads.gamma[f] = sum_gx; // STE through the pow2 rounding in MultiplierLess mode
        const double sc = t.scale_eff[f], is = t.inv_std[f];
        if (training) {
            for_each_feature(t.input, f, [&](std::size_t i) {
                const double dxhat = g_out[i] * sc;
                g_in[i] = is * (dxhat - (sc * sum_g) / n - t.xhat[i] * (sc * sum_gx) / n);
            });
        } else {
            for_each_feature(t.input, f,
                             [&](std::size_t i) { g_in[i] = g_out[i] * sc * is; });
        }
    }
}

} // namespace

double quantize_activation(double a, const ActQuantConfig& cfg) {
    if (cfg.scheme == ActQuantScheme::None) return a;
    if (a < 0.0) throw ArgumentError("activation quantizer: negative input (expects post-ReLU)");
    if (cfg.n_bits < 1) throw ArgumentError("activation quantizer: n_bits must be >= 1");
    const double r = cfg.range_r;
    if (!(r > 0.0) || !is_pow2_magnitude(r)) {
        throw ArgumentError("activation quantizer: range must be a positive power of two");
    }
    if (cfg.scheme == ActQuantScheme::Fp) {
        const double delta = r / (std::ldexp(1.0, cfg.n_bits) - 1.0);
        return std::min(r, delta * std::floor(a / delta + 0.5));
    }
    // pow2: {0} and 2^j levels up to r = 2^m, one-sided (no sign bit).
    int m_exp = 0;
    std::frexp(r, &m_exp);
    const int m = m_exp - 1; // r == 2^m
    const double zero_threshold =
        std::exp2(static_cast<double>(m) - std::ldexp(1.0, cfg.n_bits - 1) + 0.5);
    if (a <= zero_threshold) return 0.0;
    if (a > r) return r;
    return std::ldexp(1.0, static_cast<int>(std::floor(std::log2(a) + 0.5)));
}

Tensor forward(Network& net, const Tensor& x_batch, bool training, ForwardTrace* trace) {
    if (trace) {
        trace->layers.clear();
        trace->layers.resize(net.layers.size());
        trace->training = training;
    }
    Tensor cur = x_batch;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        LayerTrace* t = trace ? &trace->layers[li] : nullptr;
        cur = std::visit(
            [&](auto& layer) -> Tensor {
                using T = std::decay_t<decltype(layer)>;
                if constexpr (std::is_same_v<T, AffineLayer>) {
                    return affine_forward(layer, cur, t);
                } else if constexpr (std::is_same_v<T, Conv2DLayer>) {
                    return conv_forward(layer, cur, t);
                } else {
                    return bn_forward(layer, cur, training, t);
                }
            },
            net.layers[li]);
    }
    return cur;
}

Gradients backward_ste(const Network& net, const Tensor& loss_grad, const ForwardTrace& trace) {
    if (trace.layers.size() != net.layers.size()) {
        throw StateError("backward_ste: forward intermediates missing or stale");
    }
    Gradients grads;
    grads.layers.resize(net.layers.size());
    Tensor g = loss_grad;
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const LayerTrace& t = trace.layers[li];
        if (t.output.size() == 0) {
            throw StateError("backward_ste: layer trace not recorded");
        }
        if (!g.same_shape(t.output)) {
            throw DimensionError("backward_ste: loss gradient shape mismatch");
        }
        Tensor g_in;
        std::visit(
            [&](const auto& layer) {
                using T = std::decay_t<decltype(layer)>;
                if constexpr (std::is_same_v<T, AffineLayer>) {
                    affine_backward(layer, t, g, grads.layers[li], g_in);
                } else if constexpr (std::is_same_v<T, Conv2DLayer>) {
                    conv_backward(layer, t, g, grads.layers[li], g_in);
                } else {
                    bn_backward(t, trace.training, g, grads.layers[li], g_in);
                }
            },
            net.layers[li]);
        g = std::move(g_in);
    }
    return grads;
}

void refresh_quantization(Network& net, int kmeans_steps) {
    for (Layer& l : net.layers) {
        std::visit(
            [&](auto& layer) {
                using T = std::decay_t<decltype(layer)>;
                if constexpr (std::is_same_v<T, AffineLayer> || std::is_same_v<T, Conv2DLayer>) {
                    if (!layer.qcfg) return;
                    QuantizerConfig cfg = *layer.qcfg;
                    cfg.kmeans_steps = kmeans_steps;
                    std::optional<std::pair<Dictionary, AssignmentTensor>> state;
                    if (layer.qstate) state.emplace(layer.qstate->dict, layer.qstate->assign);
                    layer.qstate = lutq_quantize(layer.w_full, cfg, state);
                }
            },
            l);
    }
}

std::pair<Tensor, Tensor> bn_fold_scale(const BatchNormLayer& layer) {
    const std::size_t F = layer.gamma.size();
    Tensor a({F}), b({F});
    for (std::size_t f = 0; f < F; ++f) {
        const double inv = 1.0 / std::sqrt(layer.running_var[f] + layer.epsilon);
        double scale = layer.gamma[f] * inv;
        b[f] = layer.beta[f] - layer.gamma[f] * layer.running_mean[f] * inv;
        if (layer.mode == BnMode::MultiplierLess && scale != 0.0) scale = round_pow2(scale);
        a[f] = scale;
    }
    return {std::move(a), std::move(b)};
}

} // namespace lutq
