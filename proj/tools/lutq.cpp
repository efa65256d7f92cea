// lutq: train, quantize, inspect and run LUT-quantized networks.
//
// Exit codes: 0 success, 2 configuration error, 3 corrupt artifact,
// 4 contract violation.

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "lutq/config.hpp"
#include "lutq/footprint.hpp"
#include "lutq/kernels.hpp"
#include "lutq/model_io.hpp"
#include "lutq/train.hpp"

namespace {

using namespace lutq;

Network load_model_or_corrupt(const std::string& path) {
    try {
        return load_model(path);
    } catch (const IoError&) {
        throw;
    } catch (const std::exception& e) {
        throw IoError("model file '" + path + "': " + e.what());
    }
}

QuantizerConfig quantizer_from_name(const std::string& name, std::size_t k, double prune_ratio,
                                    int bits, double delta) {
    QuantizerConfig cfg;
    cfg.K = k;
    if (name == "free") {
        cfg.constraint = constraint::Free{};
    } else if (name == "pow2") {
        cfg.constraint = constraint::PowerOfTwo{};
    } else if (name == "binary") {
        cfg.constraint = constraint::FixedValues{{-1.0, 1.0}};
        cfg.K = 2;
    } else if (name == "ternary") {
        cfg.constraint = constraint::FixedValues{{-1.0, 0.0, 1.0}};
        cfg.K = 3;
    } else if (name == "prune") {
        cfg.constraint = constraint::ZeroPinnedFirst{prune_ratio, false};
    } else if (name == "prune_pow2") {
        cfg.constraint = constraint::ZeroPinnedFirst{prune_ratio, true};
    } else if (name == "uniform") {
        if (bits < 2 || bits > 16) {
            throw ConfigError("quant_bits: uniform constraint needs 2..16 bits");
        }
        cfg.constraint = constraint::UniformFixedPoint{bits, delta};
        cfg.K = (std::size_t{1} << (bits - 1)) * 2 - 1;
    } else {
        throw ConfigError("quant_constraint: expected "
                          "free|pow2|binary|ternary|prune|prune_pow2|uniform, got '" +
                          name + "'");
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int run_train(const std::string& config_path, const std::string& model_path,
              const std::string& trace_path) {
    Config cfg = Config::parse_file(config_path);
    cfg.require_known({"dataset", "blob_samples", "blob_classes", "blob_noise", "hidden_units",
                       "epochs", "batch_size", "learning_rate", "momentum", "kmeans_interval",
                       "kmeans_steps", "seed", "weight_quant", "quant_k", "quant_constraint",
                       "prune_ratio", "quant_bits", "quant_delta", "act_quant", "act_bits",
                       "batch_norm"});

    TrainConfig tc;
    tc.learning_rate = cfg.get_double("learning_rate");
    tc.momentum = cfg.get_double("momentum", 0.0);
    tc.epochs = cfg.get_u64("epochs");
    tc.batch_size = cfg.get_u64("batch_size");
    tc.kmeans_interval = cfg.get_u64("kmeans_interval", 1);
    tc.kmeans_steps = static_cast<int>(cfg.get_u64("kmeans_steps", 1));
    tc.seed = cfg.get_u64("seed", 1);
    if (const char* env_seed = std::getenv("LUTQ_SEED")) {
        try {
            tc.seed = std::stoull(env_seed);
        } catch (const std::exception&) {
            throw ConfigError("LUTQ_SEED: must be a non-negative integer");
        }
    }

    const std::string dataset = cfg.get_string("dataset");
    Dataset data;
    if (dataset == "blobs") {
        data = make_blobs(tc.seed, cfg.get_u64("blob_samples", 4000),
                          cfg.get_u64("blob_classes", 4), cfg.get_double("blob_noise", 0.5));
    } else {
        data = load_dsv(dataset);
    }

    Rng rng(tc.seed);
    const std::vector<std::size_t> hidden =
        cfg.has("hidden_units") ? cfg.get_size_list("hidden_units")
                                : std::vector<std::size_t>{32, 32};
    Network net = make_mlp(rng, data.dims(), hidden, data.num_classes);

    const std::string bn = cfg.get_string("batch_norm", "none");
    if (bn != "none") {
        if (bn != "traditional" && bn != "multiplier_less") {
            throw ConfigError("batch_norm: expected none|traditional|multiplier_less, got '" +
                              bn + "'");
        }
        Network with_bn;
        for (std::size_t li = 0; li < net.layers.size(); ++li) {
            with_bn.layers.push_back(std::move(net.layers[li]));
            if (li + 1 == net.layers.size()) break; // no norm after the output layer
            const std::size_t width = hidden[li];
            BatchNormLayer norm;
            norm.gamma = Tensor({width});
            for (std::size_t i = 0; i < width; ++i) norm.gamma[i] = 1.0;
            norm.beta = Tensor({width});
            norm.running_mean = Tensor({width});
            norm.running_var = Tensor({width});
            for (std::size_t i = 0; i < width; ++i) norm.running_var[i] = 1.0;
            norm.mode = bn == "traditional" ? BnMode::Traditional : BnMode::MultiplierLess;
            with_bn.layers.push_back(std::move(norm));
        }
        net = std::move(with_bn);
    }

    const std::string weight_quant = cfg.get_string("weight_quant", "none");
    if (weight_quant == "lutq") {
        QuantizerConfig qc = quantizer_from_name(
            cfg.get_string("quant_constraint", "free"), cfg.get_u64("quant_k", 4),
            cfg.get_double("prune_ratio", 0.5), static_cast<int>(cfg.get_u64("quant_bits", 4)),
            cfg.get_double("quant_delta", 0.25));
        for (Layer& l : net.layers) {
            if (auto* a = std::get_if<AffineLayer>(&l)) a->qcfg = qc;
        }
    } else if (weight_quant != "none") {
        throw ConfigError("weight_quant: expected none|lutq, got '" + weight_quant + "'");
    }

    const std::string act_quant = cfg.get_string("act_quant", "none");
    if (act_quant != "none") {
        ActQuantConfig ac;
        ac.n_bits = static_cast<int>(cfg.get_u64("act_bits", 8));
        if (act_quant == "fp") ac.scheme = ActQuantScheme::Fp;
        else if (act_quant == "pow2") ac.scheme = ActQuantScheme::Pow2;
        else throw ConfigError("act_quant: expected none|fp|pow2, got '" + act_quant + "'");
        for (Layer& l : net.layers) {
            if (auto* a = std::get_if<AffineLayer>(&l)) {
                if (a->activation == Activation::ReLU) a->act_quant = ac;
            }
        }
    }

    TrainResult result = train(net, data, tc);

    std::ofstream trace(trace_path, std::ios::trunc);
    if (!trace) throw IoError("cannot open '" + trace_path + "' for writing");
    for (std::size_t e = 0; e < result.trace.size(); ++e) {
        char line[128];
        std::snprintf(line, sizeof line, "epoch %zu loss %.17g accuracy %.17g\n", e + 1,
                      result.trace[e].loss, result.trace[e].accuracy);
        trace << line;
    }
    save_model(model_path, net, true);

    if (!result.trace.empty()) {
        std::printf("trained %zu epochs: loss %.6f accuracy %.4f\n", result.trace.size(),
                    result.trace.back().loss, result.trace.back().accuracy);
    } else {
        std::printf("trained 0 epochs\n");
    }
    return 0;
}

// ---------------------------------------------------------------------------
// quantize
// ---------------------------------------------------------------------------

int run_quantize(const std::string& model_path, const std::string& out_path,
                 const std::string& constraint_name, std::size_t k, double prune_ratio, int bits,
                 double delta, bool keep_full) {
    Network net = load_model_or_corrupt(model_path);
    QuantizerConfig qc = quantizer_from_name(constraint_name, k, prune_ratio, bits, delta);

    std::size_t li = 0;
    for (Layer& l : net.layers) {
        std::visit(
            [&](auto& layer) {
                using T = std::decay_t<decltype(layer)>;
                if constexpr (std::is_same_v<T, AffineLayer> || std::is_same_v<T, Conv2DLayer>) {
                    layer.qcfg = qc;
                    layer.qstate = lutq_quantize(layer.w_full, qc); // k-means to convergence
                    const double err = quantization_error(layer.w_full, layer.qstate->q);
                    std::printf("layer %zu K=%zu quantization_error %.17g\n", li,
                                layer.qstate->dict.size(), err);
                }
            },
            l);
        ++li;
    }
    save_model(out_path, net, keep_full);
    return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int run_report(const std::string& arch_path, const std::string& plan_text, bool table) {
    ArchitectureSpec arch = load_arch(arch_path);
    if (!plan_text.empty()) apply_plan(arch, parse_plan(plan_text));
    FootprintReport report = footprint(arch);
    if (table) {
        print_table(std::cout, report);
    } else {
        print_report(std::cout, report);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

Tensor read_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("input: cannot open '" + path + "'");
    std::vector<double> values;
    std::size_t cols = 0, rows = 0, lineno = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        for (char& c : line) {
            if (c == ',' || c == ';' || c == '\t') c = ' ';
        }
        std::istringstream row(line);
        std::vector<double> fields;
        double v;
        while (row >> v) fields.push_back(v);
        if (fields.empty()) continue;
        if (cols == 0) cols = fields.size();
        if (fields.size() != cols) {
            throw ConfigError("input: inconsistent column count at line " +
                              std::to_string(lineno));
        }
        values.insert(values.end(), fields.begin(), fields.end());
        ++rows;
    }
    if (rows == 0) throw ConfigError("input: '" + path + "' has no rows");
    return Tensor({rows, cols}, std::move(values));
}

enum class Kernel { Naive, Grouped, Shift };

Tensor infer_affine(const AffineLayer& layer, const Tensor& x, Kernel kernel, OpCounters& c) {
    Tensor z({0});
    switch (kernel) {
    case Kernel::Naive: {
        const Tensor& w = layer.qstate ? layer.qstate->q : layer.w_full;
        z = naive_affine(w, x, layer.bias, &c);
        break;
    }
    case Kernel::Grouped: {
        if (layer.qstate) {
            z = grouped_affine(*layer.qstate, x, layer.bias, &c);
        } else {
            z = naive_affine(layer.w_full, x, layer.bias, &c);
        }
        break;
    }
    case Kernel::Shift: {
        if (!layer.qstate) {
            throw ContractError("shift kernel requires a quantized power-of-two model");
        }
        FixedTensor fx = to_fixed(x, choose_exponent(x));
        FixedTensor fy = shift_affine(*layer.qstate, fx, layer.bias, true, &c);
        z = from_fixed(fy);
        break;
    }
    }
    Tensor out = z;
    if (layer.activation == Activation::ReLU) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
        if (layer.act_quant && layer.act_quant->scheme != ActQuantScheme::None) {
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] = quantize_activation(out[i], *layer.act_quant);
            }
        }
    }
    // Softmax output layers are reported as raw logits (argmax is unchanged).
    return out;
}

int run_infer(const std::string& model_path, const std::string& input_path,
              const std::string& kernel_name) {
    Kernel kernel;
    if (kernel_name == "naive") kernel = Kernel::Naive;
    else if (kernel_name == "grouped") kernel = Kernel::Grouped;
    else if (kernel_name == "shift") kernel = Kernel::Shift;
    else throw ConfigError("kernel: expected naive|grouped|shift, got '" + kernel_name + "'");

    Network net = load_model_or_corrupt(model_path);
    if (kernel == Kernel::Shift) {
        for (const Layer& l : net.layers) {
            if (const auto* a = std::get_if<AffineLayer>(&l)) {
                if (!a->qstate) {
                    throw ContractError("shift kernel requires a quantized power-of-two model");
                }
                for (std::size_t k = 0; k < a->qstate->dict.size(); ++k) {
                    const double v = a->qstate->dict.values[k];
                    if (k == 0 && v == 0.0) continue; // pruned zero entry
                    if (!is_pow2_magnitude(v)) {
                        throw ContractError("shift kernel: dictionary entry " +
                                            std::to_string(v) + " is not +/-2^b");
                    }
                }
            }
        }
    }

    Tensor rows = read_rows(input_path);
    const std::size_t N = rows.dim(0), D = rows.dim(1);
    OpCounters counters;
    for (std::size_t r = 0; r < N; ++r) {
        Tensor x({D});
        for (std::size_t d = 0; d < D; ++d) x[d] = rows[r * D + d];
        for (const Layer& l : net.layers) {
            if (const auto* a = std::get_if<AffineLayer>(&l)) {
                x = infer_affine(*a, x, kernel, counters);
            } else if (const auto* bn = std::get_if<BatchNormLayer>(&l)) {
                const auto [scale, offset] = bn_fold_scale(*bn);
                for (std::size_t i = 0; i < x.size(); ++i) x[i] = scale[i] * x[i] + offset[i];
            } else {
                throw ContractError("infer: executable kernels cover affine networks only");
            }
        }
        std::size_t pred = 0;
        for (std::size_t i = 1; i < x.size(); ++i) {
            if (x[i] > x[pred]) pred = i;
        }
        std::printf("row %zu pred %zu logits", r, pred);
        for (std::size_t i = 0; i < x.size(); ++i) std::printf(" %.17g", x[i]);
        std::printf("\n");
    }
    std::printf("counters mults %" PRIu64 " adds %" PRIu64 " shifts %" PRIu64 "\n",
                counters.mults, counters.adds, counters.shifts);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"LUT-Q: look-up table network quantization toolkit"};
    app.require_subcommand(1);

    std::string config_path, model_path, trace_path, out_path, arch_path, input_path;
    std::string plan_text, kernel_name = "naive", constraint_name = "free";
    std::size_t quant_k = 4;
    double prune_ratio = 0.5, quant_delta = 0.25;
    int quant_bits = 4;
    bool table = false, keep_full = false;

    CLI::App* cmd_train = app.add_subcommand("train", "Train a network from a config file");
    cmd_train->add_option("--config", config_path, "Training configuration")->required();
    cmd_train->add_option("--model", model_path, "Output model path")->required();
    cmd_train->add_option("--trace", trace_path, "Output per-epoch trace path")->required();

    CLI::App* cmd_quantize =
        app.add_subcommand("quantize", "Post-training quantization of a model file");
    cmd_quantize->add_option("--model", model_path, "Input model")->required();
    cmd_quantize->add_option("--out", out_path, "Output quantized model")->required();
    cmd_quantize->add_option("--k", quant_k, "Dictionary size");
    cmd_quantize->add_option("--constraint", constraint_name,
                             "free|pow2|binary|ternary|prune|prune_pow2|uniform");
    cmd_quantize->add_option("--prune-ratio", prune_ratio, "Pruning ratio for prune constraints");
    cmd_quantize->add_option("--bits", quant_bits, "Word length for the uniform constraint");
    cmd_quantize->add_option("--delta", quant_delta, "Step size for the uniform constraint");
    cmd_quantize->add_flag("--keep-full", keep_full, "Keep full-precision accumulators");

    CLI::App* cmd_report = app.add_subcommand("report", "Memory and operation footprint");
    cmd_report->add_option("--arch", arch_path, "Architecture spec file")->required();
    cmd_report->add_option("--plan", plan_text, "none|float|lutq(K)|fp(n) applied to all layers");
    cmd_report->add_flag("--table", table, "Print the summary table");

    CLI::App* cmd_infer = app.add_subcommand("infer", "Run a model on input rows");
    cmd_infer->add_option("--model", model_path, "Model file")->required();
    cmd_infer->add_option("--input", input_path, "Input rows (delimiter-separated)")->required();
    cmd_infer->add_option("--kernel", kernel_name, "naive|grouped|shift");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cmd_train->parsed()) return run_train(config_path, model_path, trace_path);
        if (cmd_quantize->parsed()) {
            return run_quantize(model_path, out_path, constraint_name, quant_k, prune_ratio,
                                quant_bits, quant_delta, keep_full);
        }
        if (cmd_report->parsed()) return run_report(arch_path, plan_text, table);
        if (cmd_infer->parsed()) return run_infer(model_path, input_path, kernel_name);
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const ContractError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const OverflowError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::out_of_range& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
