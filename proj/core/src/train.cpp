#include "lutq/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace lutq {

namespace {

void axpy_update(Tensor& param, Tensor& velocity, const Tensor& grad, double lr,
                 double momentum) {
    if (!param.same_shape(grad)) throw DimensionError("sgd_step: gradient shape mismatch");
    if (momentum != 0.0) {
        if (velocity.size() == 0) velocity = Tensor(param.shape());
        for (std::size_t i = 0; i < param.size(); ++i) {
            velocity[i] = momentum * velocity[i] + grad[i];
            param[i] -= lr * velocity[i];
        }
    } else {
        for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
    }
    ensure_finite(param, "sgd_step");
}

std::size_t argmax_row(const Tensor& y, std::size_t row) {
    const std::size_t O = y.dim(1);
    std::size_t best = 0;
    for (std::size_t o = 1; o < O; ++o) {
        if (y[row * O + o] > y[row * O + best]) best = o;
    }
    return best;
}

Tensor gather_rows(const Tensor& all, const std::vector<std::size_t>& idx, std::size_t begin,
                   std::size_t end) {
    const std::size_t D = all.dim(1);
    Tensor out({end - begin, D});
    for (std::size_t r = begin; r < end; ++r) {
        for (std::size_t d = 0; d < D; ++d) out[(r - begin) * D + d] = all[idx[r] * D + d];
    }
    return out;
}

} // namespace

void sgd_step(Network& net, const Gradients& grads, const TrainConfig& cfg, SgdState* state) {
    if (grads.layers.size() != net.layers.size()) {
        throw DimensionError("sgd_step: gradient count does not match the network");
    }
    SgdState scratch;
    SgdState& st = state ? *state : scratch;
    if (st.velocity.size() != net.layers.size()) st.velocity.resize(net.layers.size());

    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const LayerGrads& g = grads.layers[li];
        LayerGrads& v = st.velocity[li];
        std::visit(
            [&](auto& layer) {
                using T = std::decay_t<decltype(layer)>;
                if constexpr (std::is_same_v<T, AffineLayer> || std::is_same_v<T, Conv2DLayer>) {
                    axpy_update(layer.w_full, v.w, g.w, cfg.learning_rate, cfg.momentum);
                    axpy_update(layer.bias, v.bias, g.bias, cfg.learning_rate, cfg.momentum);
                } else {
                    axpy_update(layer.gamma, v.gamma, g.gamma, cfg.learning_rate, cfg.momentum);
                    axpy_update(layer.beta, v.beta, g.beta, cfg.learning_rate, cfg.momentum);
                }
            },
            net.layers[li]);
    }
}

Dataset load_dsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("dataset: cannot open '" + path + "'");
    std::vector<double> values;
    std::vector<int> labels;
    std::size_t cols = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        for (char& c : line) {
            if (c == ',' || c == ';' || c == '\t') c = ' ';
        }
        std::istringstream row(line);
        std::vector<double> fields;
        double v;
        while (row >> v) fields.push_back(v);
        if (fields.empty()) continue; // blank line
        if (cols == 0) {
            cols = fields.size();
            if (cols < 2) throw ConfigError("dataset: rows need at least one feature and a label");
        } else if (fields.size() != cols) {
            throw ConfigError("dataset: inconsistent column count at line " +
                              std::to_string(lineno));
        }
        double lab = fields.back();
        if (lab != std::floor(lab) || lab < 0.0) {
            throw ConfigError("dataset: label must be a non-negative integer at line " +
                              std::to_string(lineno));
        }
        labels.push_back(static_cast<int>(lab));
        values.insert(values.end(), fields.begin(), fields.end() - 1);
    }
    if (labels.empty()) throw ConfigError("dataset: file '" + path + "' has no samples");
    Dataset ds;
    ds.features = Tensor({labels.size(), cols - 1}, std::move(values));
    ds.num_classes = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
    ds.labels = std::move(labels);
    return ds;
}

Dataset make_blobs(std::uint64_t seed, std::size_t samples, std::size_t classes, double noise,
                   double radius) {
    if (samples == 0 || classes == 0) throw ArgumentError("make_blobs: empty dataset requested");
    Rng rng(seed);
    Tensor features({samples, 2});
    std::vector<int> labels(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        const std::size_t c = i % classes;
        const double angle = 2.0 * M_PI * static_cast<double>(c) / static_cast<double>(classes);
        features[i * 2 + 0] = radius * std::cos(angle) + rng.normal(0.0, noise);
        features[i * 2 + 1] = radius * std::sin(angle) + rng.normal(0.0, noise);
        labels[i] = static_cast<int>(c);
    }
    Dataset ds;
    ds.features = std::move(features);
    ds.labels = std::move(labels);
    ds.num_classes = classes;
    return ds;
}

LossGrad softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
        throw DimensionError("softmax_cross_entropy: logits/labels mismatch");
    }
    const std::size_t B = logits.dim(0), O = logits.dim(1);
    Tensor grad({B, O});
    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        const int lab = labels[b];
        if (lab < 0 || static_cast<std::size_t>(lab) >= O) {
            throw ArgumentError("softmax_cross_entropy: label out of range");
        }
        double m = logits[b * O];
        for (std::size_t o = 1; o < O; ++o) m = std::max(m, logits[b * O + o]);
        double sum = 0.0;
        for (std::size_t o = 0; o < O; ++o) sum += std::exp(logits[b * O + o] - m);
        const double log_z = m + std::log(sum);
        loss += log_z - logits[b * O + static_cast<std::size_t>(lab)];
        for (std::size_t o = 0; o < O; ++o) {
            const double p = std::exp(logits[b * O + o] - log_z);
            grad[b * O + o] = (p - (static_cast<std::size_t>(lab) == o ? 1.0 : 0.0)) /
                              static_cast<double>(B);
        }
    }
    return {loss / static_cast<double>(B), std::move(grad)};
}

LossGrad squared_error(const Tensor& y, const Tensor& target) {
    if (!y.same_shape(target)) throw DimensionError("squared_error: shape mismatch");
    const double B = static_cast<double>(y.rank() >= 1 ? y.dim(0) : 1);
    Tensor grad(y.shape());
    double loss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - target[i];
        loss += 0.5 * d * d;
        grad[i] = d / B;
    }
    return {loss / B, std::move(grad)};
}

void calibrate_activation_ranges(Network& net, const Tensor& batch) {
    // Temporarily disable the quantizers so the pass sees float activations.
    std::vector<ActQuantScheme> saved;
    for (Layer& l : net.layers) {
        std::visit(
            [&](auto& layer) {
                using T = std::decay_t<decltype(layer)>;
                if constexpr (!std::is_same_v<T, BatchNormLayer>) {
                    if (layer.act_quant) {
                        saved.push_back(layer.act_quant->scheme);
                        layer.act_quant->scheme = ActQuantScheme::None;
                    }
                }
            },
            l);
    }
    ForwardTrace trace;
    forward(net, batch, true, &trace);
    std::size_t restore = 0;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        std::visit(
            [&](auto& layer) {
                using T = std::decay_t<decltype(layer)>;
                if constexpr (!std::is_same_v<T, BatchNormLayer>) {
                    if (!layer.act_quant) return;
                    layer.act_quant->scheme = saved[restore++];
                    if (layer.act_quant->calibrated) return;
                    const double peak = max_value(trace.layers[li].act_preq);
                    layer.act_quant->range_r =
                        peak > 0.0 ? dynamic_range(trace.layers[li].act_preq) : 1.0;
                    layer.act_quant->calibrated = true;
                }
            },
            net.layers[li]);
    }
}

TrainResult train(Network& net, const Dataset& data, const TrainConfig& cfg) {
    if (cfg.epochs == 0) return {};
    if (data.size() == 0) throw ArgumentError("train: empty dataset");
    if (cfg.batch_size == 0) throw ArgumentError("train: batch_size must be >= 1");
    if (!(cfg.learning_rate > 0.0)) throw ArgumentError("train: learning rate must be positive");
    if (cfg.kmeans_interval < 1) throw ArgumentError("train: kmeans_interval must be >= 1");

    bool needs_calibration = false;
    for (const Layer& l : net.layers) {
        std::visit(
            [&](const auto& layer) {
                using T = std::decay_t<decltype(layer)>;
                if constexpr (!std::is_same_v<T, BatchNormLayer>) {
                    if (layer.act_quant && layer.act_quant->scheme != ActQuantScheme::None &&
                        !layer.act_quant->calibrated) {
                        needs_calibration = true;
                    }
                }
            },
            l);
    }
    // Initial dictionaries/assignments come from the standard k-means
    // initialization over the starting weights; they must exist before any
    // forward pass, including the calibration one.
    refresh_quantization(net, cfg.kmeans_steps);

    if (needs_calibration) {
        const std::size_t n = std::min(cfg.batch_size, data.size());
        std::vector<std::size_t> head(n);
        std::iota(head.begin(), head.end(), std::size_t{0});
        calibrate_activation_ranges(net, gather_rows(data.features, head, 0, n));
    }

    Rng rng(cfg.seed);
    SgdState sgd_state;
    TrainResult result;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t step = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates driven by the explicit rng; fully seed-determined.
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.below(i)]);
        }
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t begin = 0; begin < data.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(begin + cfg.batch_size, data.size());
            Tensor xb = gather_rows(data.features, order, begin, end);
            std::vector<int> yb(end - begin);
            for (std::size_t r = begin; r < end; ++r) yb[r - begin] = data.labels[order[r]];

            if (step % cfg.kmeans_interval == 0) refresh_quantization(net, cfg.kmeans_steps);
            ++step;

            ForwardTrace trace;
            Tensor logits = forward(net, xb, true, &trace);
            LossGrad lg = softmax_cross_entropy(logits, yb);
            loss_sum += lg.value * static_cast<double>(end - begin);
            for (std::size_t r = 0; r < yb.size(); ++r) {
                if (argmax_row(logits, r) == static_cast<std::size_t>(yb[r])) ++correct;
            }
            Gradients grads = backward_ste(net, lg.grad, trace);
            sgd_step(net, grads, cfg, &sgd_state);
        }
        result.trace.push_back(EpochStats{loss_sum / static_cast<double>(data.size()),
                                          static_cast<double>(correct) /
                                              static_cast<double>(data.size())});
    }
    return result;
}

EpochStats evaluate(Network& net, const Dataset& data) {
    Tensor logits = forward(net, data.features, false);
    LossGrad lg = softmax_cross_entropy(logits, data.labels);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < data.size(); ++r) {
        if (argmax_row(logits, r) == static_cast<std::size_t>(data.labels[r])) ++correct;
    }
    return {lg.value, static_cast<double>(correct) / static_cast<double>(data.size())};
}

AffineLayer make_affine(Rng& rng, std::size_t in, std::size_t out, Activation act) {
    AffineLayer layer;
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    layer.w_full = rng_uniform(rng, {out, in}, -bound, bound);
    layer.bias = Tensor({out});
    layer.activation = act;
    return layer;
}

Network make_mlp(Rng& rng, std::size_t in, const std::vector<std::size_t>& hidden,
                 std::size_t classes) {
    Network net;
    std::size_t cur = in;
    for (std::size_t h : hidden) {
        net.layers.emplace_back(make_affine(rng, cur, h, Activation::ReLU));
        cur = h;
    }
    net.layers.emplace_back(make_affine(rng, cur, classes, Activation::Identity));
    return net;
}

} // namespace lutq
