// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Run from the repository root (or pass paths via the
// LUTQ_CLI_PATH / LUTQ_ARCH_DIR compile definitions).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cli_runner.hpp"
#include "helpers.hpp"
#include "lutq/footprint.hpp"
#include "lutq/kernels.hpp"
#include "lutq/model_io.hpp"
#include "lutq/train.hpp"

using namespace lutq;
using namespace lutq::test;

namespace {

struct Check {
    std::vector<std::string> failures;

    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
    void expect_rel(double got, double want, double tol, const std::string& what) {
        const double rel = rel_error(got, want);
        if (!(rel <= tol)) {
            char buf[256];
            std::snprintf(buf, sizeof buf, "%s: got %.6g want %.6g (%.2f%% off, tolerance %.0f%%)",
                          what.c_str(), got, want, rel * 100.0, tol * 100.0);
            failures.push_back(buf);
        }
    }
};

FootprintReport reference_report(const std::string& net, const std::string& plan) {
    ArchitectureSpec arch = load_arch(std::string(LUTQ_ARCH_DIR) + "/" + net + ".arch");
    apply_plan(arch, parse_plan(plan));
    return footprint(arch);
}

// ---------------------------------------------------------------------------
// criterion 1: reference table reproduction
// ---------------------------------------------------------------------------

void criterion_table(Check& c) {
    struct Row {
        const char* net;
        const char* plan;
        double param_mb, buffer_mb, mults_m;
    };
    const Row rows[] = {
        {"resnet20", "float", 1.03, 0.13, 40.55},
        {"resnet20", "lutq(256)", 0.28, 0.13, 32.56},
        {"resnet20", "lutq(16)", 0.13, 0.13, 3.01},
        {"resnet20", "lutq(4)", 0.07, 0.13, 0.75},
        {"resnet20", "lutq(2)", 0.04, 0.13, 0.38},
        {"resnet18", "float", 44.59, 3.64, 1814.07},
        {"resnet18", "lutq(16)", 5.61, 3.64, 39.76},
        {"resnet18", "lutq(4)", 2.83, 3.64, 9.94},
        {"resnet34", "float", 83.15, 3.64, 3663.76},
        {"resnet34", "lutq(16)", 10.46, 3.64, 59.83},
        {"resnet34", "lutq(4)", 5.26, 3.64, 14.96},
        {"resnet50", "float", 97.49, 4.59, 4089.18},
        {"resnet50", "lutq(16)", 12.37, 4.59, 177.84},
        {"resnet50", "lutq(4)", 6.29, 4.59, 44.46},
    };
    for (const Row& row : rows) {
        const std::string tag = std::string(row.net) + " " + row.plan;
        FootprintReport r = reference_report(row.net, row.plan);
        c.expect_rel(r.param_mb(), row.param_mb, 0.05, tag + " param memory (MB)");
        c.expect_rel(r.buffer_mb(), row.buffer_mb, 0.05, tag + " buffer memory (MB)");
        c.expect_rel(static_cast<double>(r.total_ops.mults) / 1e6, row.mults_m, 0.05,
                     tag + " multiplications (M)");
    }
    // The same numbers must come out of the report command.
    auto dir = cli_workdir("acceptance-report");
    auto cli = run_cli("report --arch " + std::string(LUTQ_ARCH_DIR) +
                           "/resnet20.arch --plan 'lutq(16)'",
                       dir);
    c.expect(cli.exit_code == 0, "cmd_report exit code");
    std::istringstream out(cli.out);
    std::string tok;
    std::uint64_t bits = 0;
    while (out >> tok) {
        if (tok == "total_param_bits") out >> bits;
    }
    c.expect(bits == reference_report("resnet20", "lutq(16)").total_param_bits,
             "cmd_report agrees with the library accounting");
}

// ---------------------------------------------------------------------------
// criterion 2: serialized size witnesses the parameter budget
// ---------------------------------------------------------------------------

void criterion_size_witness(Check& c) {
    Rng rng(202);
    Network net;
    AffineLayer layer;
    layer.w_full = rng_uniform(rng, {100, 1000}, -1.0, 1.0); // 1e5 parameters
    layer.bias = Tensor({100});
    layer.qcfg = QuantizerConfig{16, constraint::Free{}, 1};
    net.layers.emplace_back(layer);
    refresh_quantization(net, 1);

    auto dir = cli_workdir("acceptance-size");
    const auto path = dir / "layer.lutq";
    save_model(path.string(), net, false);
    const double size = static_cast<double>(std::filesystem::file_size(path));
    const double budget = (16.0 * 32.0 + 100000.0 * 4.0) / 8.0; // bytes
    const double header = 16.0;                                  // fixed file header
    c.expect(std::fabs(size - (budget + header)) <= 0.03 * budget,
             "file size " + std::to_string(static_cast<std::size_t>(size)) +
                 " B within 3% of " + std::to_string(static_cast<std::size_t>(budget + header)) +
                 " B");
}

// ---------------------------------------------------------------------------
// criterion 3: k-means monotonicity and the exhaustive oracle
// ---------------------------------------------------------------------------

double pair_error(const Tensor& w, const Dictionary& d, const AssignmentTensor& a) {
    return quantization_error(w, lookup(d, a));
}

double brute_force_optimum(const Tensor& w, std::size_t K) {
    const std::size_t n = w.size();
    double best = 1e300;
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= K;
    std::vector<std::size_t> assign(n);
    for (std::size_t code = 0; code < total; ++code) {
        std::size_t cc = code;
        for (std::size_t i = 0; i < n; ++i) {
            assign[i] = cc % K;
            cc /= K;
        }
        std::vector<double> sum(K, 0.0);
        std::vector<std::size_t> count(K, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sum[assign[i]] += w[i];
            count[assign[i]] += 1;
        }
        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double centroid =
                count[assign[i]] ? sum[assign[i]] / static_cast<double>(count[assign[i]]) : 0.0;
            err += 0.5 * (w[i] - centroid) * (w[i] - centroid);
        }
        best = std::min(best, err);
    }
    return best;
}

void criterion_kmeans(Check& c) {
    Rng rng(303);
    std::size_t violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 3 + rng.below(40);
        const std::size_t K = 1 + rng.below(std::min<std::size_t>(n, 8));
        Tensor w = rng_uniform(rng, {n}, -2.0, 2.0);
        Dictionary d{{}, constraint::Free{}};
        for (std::size_t k = 0; k < K; ++k) d.values.push_back(rng.uniform(-2.0, 2.0));
        AssignmentTensor a{{n}, {}};
        a.indices.resize(n);
        for (auto& ix : a.indices) ix = static_cast<std::int32_t>(1 + rng.below(K));
        const double before = pair_error(w, d, a);
        auto [d1, a1] = kmeans_step(w, d, a);
        const double after = pair_error(w, d1, a1);
        if (after > before + 1e-12 * std::max(1.0, before)) ++violations;
    }
    c.expect(violations == 0,
             "k-means step increased the error on " + std::to_string(violations) +
                 " of 1000 fixtures");

    std::size_t oracle_misses = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 6 + rng.below(7); // 6..12 weights
        Tensor w = rng_uniform(rng, {n}, -1.0, 1.0);
        QuantizerConfig cfg;
        cfg.K = 2;
        QuantizedWeight qw = lutq_quantize(w, cfg);
        const double err = quantization_error(w, qw.q);
        const double best = brute_force_optimum(w, 2);
        if (err < best - 1e-12 || err > 1.05 * best) ++oracle_misses;
    }
    c.expect(oracle_misses == 0,
             "converged error strayed from the exhaustive optimum on " +
                 std::to_string(oracle_misses) + " of 50 fixtures");
}

// ---------------------------------------------------------------------------
// criterion 4: scalar quantizer boundary suite
// ---------------------------------------------------------------------------

void criterion_quantizer_boundaries(Check& c) {
    c.expect(round_pow2(1.5) == 1.0, "round_pow2(1.5) == 1.0");
    c.expect(round_pow2(3.0) == 2.0, "round_pow2(3.0) == 2.0");
    Rng rng(404);
    std::size_t ratio_violations = 0;
    for (int i = 0; i < 10000; ++i) {
        double v = 0.0;
        while (v == 0.0) v = rng.uniform(-16.0, 16.0);
        const double ratio = round_pow2(v) / v;
        if (!(ratio >= 2.0 / 3.0 && ratio < 4.0 / 3.0)) ++ratio_violations;
    }
    c.expect(ratio_violations == 0, "round_pow2 ratio bound violations: " +
                                        std::to_string(ratio_violations));

    std::size_t fp_mismatches = 0, p2_mismatches = 0;
    for (int i = 0; i < 10000; ++i) {
        const double w = rng.uniform(-4.0, 4.0);
        const int n = 2 + static_cast<int>(rng.below(7));
        const double delta = std::ldexp(1.0, -static_cast<int>(rng.below(6)));
        const double qmax = std::ldexp(1.0, n - 1) - 1.0;
        const double mag = std::fabs(w) / delta;
        const double fp_want =
            std::copysign((mag <= qmax ? std::floor(mag + 0.5) : qmax) * delta, w);
        if (!bits_equal(quantize_fp(w, n, delta), fp_want)) ++fp_mismatches;

        const int m = static_cast<int>(rng.below(3)) - 1;
        const double a = std::fabs(w);
        const double threshold = std::pow(2.0, m - std::pow(2.0, n - 2) + 0.5);
        double p2_want;
        if (a <= threshold) p2_want = 0.0;
        else if (a <= std::pow(2.0, m))
            p2_want = std::copysign(std::pow(2.0, std::floor(std::log2(a) + 0.5)), w);
        else p2_want = std::copysign(std::pow(2.0, m), w);
        if (!bits_equal(quantize_pow2_fixed(w, n, m), p2_want)) ++p2_mismatches;
    }
    c.expect(fp_mismatches == 0,
             "quantize_fp closed-form mismatches: " + std::to_string(fp_mismatches));
    c.expect(p2_mismatches == 0,
             "quantize_pow2_fixed closed-form mismatches: " + std::to_string(p2_mismatches));
}

// ---------------------------------------------------------------------------
// criterion 5: straight-through gradient checks
// ---------------------------------------------------------------------------

void criterion_ste(Check& c) {
    Rng rng(505);
    Network net = make_mlp(rng, 4, {12}, 3); // two quantized affine layers
    for (Layer& l : net.layers) {
        std::get<AffineLayer>(l).qcfg = QuantizerConfig{4, constraint::Free{}, 1};
    }
    refresh_quantization(net, 1);
    Tensor x = rng_uniform(rng, {8, 4}, -1.0, 1.0);
    std::vector<int> labels;
    for (int i = 0; i < 8; ++i) labels.push_back(static_cast<int>(rng.below(3)));

    ForwardTrace trace;
    Tensor logits = forward(net, x, true, &trace);
    LossGrad lg = softmax_cross_entropy(logits, labels);
    Gradients grads = backward_ste(net, lg.grad, trace);

    auto loss_with_q = [&](std::size_t li, std::size_t entry, double delta) {
        Network n = net;
        std::get<AffineLayer>(n.layers[li]).qstate->q[entry] += delta;
        Tensor y = forward(n, x, true);
        return softmax_cross_entropy(y, labels).value;
    };

    std::size_t fd_failures = 0;
    for (int point = 0; point < 100; ++point) {
        const std::size_t li = rng.below(net.layers.size());
        const auto& layer = std::get<AffineLayer>(net.layers[li]);
        const std::size_t entry = rng.below(layer.w_full.size());
        const double h = 1e-6;
        const double numeric =
            (loss_with_q(li, entry, h) - loss_with_q(li, entry, -h)) / (2.0 * h);
        const double analytic = grads.layers[li].w[entry];
        if (std::fabs(analytic - numeric) > 1e-5 * std::max(std::fabs(numeric), 1e-3)) {
            ++fd_failures;
        }
    }
    c.expect(fd_failures == 0, "finite-difference mismatches: " + std::to_string(fd_failures));

    // The accumulator must play no role: scrambling w_full leaves the
    // gradients bit-identical (they are gradients w.r.t. Q).
    Network scrambled = net;
    for (Layer& l : scrambled.layers) {
        auto& layer = std::get<AffineLayer>(l);
        for (std::size_t i = 0; i < layer.w_full.size(); ++i) layer.w_full[i] = 123.0 + double(i);
    }
    ForwardTrace trace2;
    Tensor logits2 = forward(scrambled, x, true, &trace2);
    Gradients grads2 = backward_ste(scrambled, softmax_cross_entropy(logits2, labels).grad,
                                    trace2);
    bool identical = true;
    for (std::size_t li = 0; li < grads.layers.size(); ++li) {
        identical = identical && tensors_bit_equal(grads.layers[li].w, grads2.layers[li].w);
    }
    c.expect(identical, "gradient w.r.t. w_full bit-identical to gradient w.r.t. Q");
}

// ---------------------------------------------------------------------------
// criterion 6: kernel equivalence
// ---------------------------------------------------------------------------

void criterion_kernels(Check& c) {
    Rng rng(606);
    std::size_t float_mismatches = 0, counter_mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t O = 1 + rng.below(16);
        const std::size_t I = 1 + rng.below(64);
        const std::size_t K = 1 + rng.below(std::min<std::size_t>(O * I, 8));
        Tensor w = rng_uniform(rng, {O, I}, -1.0, 1.0);
        QuantizerConfig cfg;
        cfg.K = K;
        QuantizedWeight qw = lutq_quantize(w, cfg);
        Tensor x = rng_uniform(rng, {I}, -1.0, 1.0);
        Tensor bias = rng_uniform(rng, {O}, -0.5, 0.5);
        OpCounters counters;
        Tensor grouped = grouped_affine(qw, x, bias, &counters);
        Tensor naive = naive_affine(qw.q, x, bias);
        if (max_rel_error(grouped, naive) > 1e-9) ++float_mismatches;
        const std::uint64_t want =
            static_cast<std::uint64_t>(O) * (qw.dict.values[0] == 0.0 ? K - 1 : K);
        if (counters.mults != want) ++counter_mismatches;
    }
    c.expect(float_mismatches == 0,
             "grouped/naive logit mismatches: " + std::to_string(float_mismatches));
    c.expect(counter_mismatches == 0,
             "grouped multiplication counter mismatches: " + std::to_string(counter_mismatches));

    std::size_t shift_mismatches = 0;
    std::uint64_t shift_mults = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t O = 1 + rng.below(8), I = 1 + rng.below(48);
        const std::size_t K = 1 + rng.below(4);
        Dictionary d{{}, constraint::PowerOfTwo{}};
        for (std::size_t k = 0; k < K; ++k) {
            d.values.push_back((rng.below(2) ? 1.0 : -1.0) *
                               std::ldexp(1.0, static_cast<int>(rng.below(7)) - 3));
        }
        AssignmentTensor a{{O, I}, {}};
        a.indices.resize(O * I);
        for (auto& ix : a.indices) ix = static_cast<std::int32_t>(1 + rng.below(K));
        QuantizedWeight qw = make_quantized(d, a);
        Tensor xf = rng_uniform(rng, {I}, -2.0, 2.0);
        Tensor bias = rng_uniform(rng, {O}, -1.0, 1.0);
        FixedTensor x = to_fixed(xf, choose_exponent(xf, 20));
        OpCounters cs;
        FixedTensor ys = shift_affine(qw, x, bias, true, &cs);
        FixedTensor yg = grouped_affine_fixed(qw, x, bias, true);
        if (ys.mantissa != yg.mantissa) ++shift_mismatches;
        shift_mults += cs.mults;
    }
    c.expect(shift_mismatches == 0,
             "shift/grouped fixed-point mismatches: " + std::to_string(shift_mismatches));
    c.expect(shift_mults == 0, "shift kernel executed multiplications");
}

// ---------------------------------------------------------------------------
// criterion 7: pruning exactness and add reduction
// ---------------------------------------------------------------------------

void criterion_pruning(Check& c) {
    Rng rng(707);
    for (int ip = 1; ip <= 9; ++ip) {
        const double p = ip / 10.0;
        const std::size_t n = 64 + rng.below(128);
        Tensor w = rng_uniform(rng, {n}, -1.0, 1.0);
        auto [d, a] = kmeans_prune(w, 4, p);
        std::size_t zeros = 0;
        for (auto ix : a.indices) zeros += ix == 1;
        const std::size_t want = (static_cast<std::size_t>(ip) * n + 9) / 10;
        c.expect(zeros == want, "zero count at p=" + std::to_string(p) + ": got " +
                                    std::to_string(zeros) + " want " + std::to_string(want));
    }

    const std::size_t O = 8, I = 100, K = 4;
    Tensor w = rng_uniform(rng, {O, I}, -1.0, 1.0);
    Tensor x = rng_uniform(rng, {I}, -1.0, 1.0);
    for (int ip = 1; ip <= 9; ip += 2) {
        const double p = ip / 10.0;
        QuantizerConfig cfg;
        cfg.K = K;
        cfg.constraint = constraint::ZeroPinnedFirst{p, false};
        QuantizedWeight qw = lutq_quantize(w, cfg);
        OpCounters counters;
        grouped_affine(qw, x, Tensor({O}), &counters);
        const double expected = (1.0 - p) * static_cast<double>(O * I);
        c.expect(std::fabs(static_cast<double>(counters.adds) - expected) <=
                     static_cast<double>(O * (K + 2)),
                 "executed adds at p=" + std::to_string(p) + ": " +
                     std::to_string(counters.adds) + " vs expected ~" +
                     std::to_string(expected));
    }
}

// ---------------------------------------------------------------------------
// criterion 8: multiplier-less batch normalization
// ---------------------------------------------------------------------------

void criterion_bn(Check& c) {
    Rng rng(808);
    BatchNormLayer bn;
    bn.gamma = rng_uniform(rng, {32}, -2.0, 2.0);
    bn.beta = rng_uniform(rng, {32}, -1.0, 1.0);
    bn.running_mean = rng_uniform(rng, {32}, -1.0, 1.0);
    bn.running_var = rng_uniform(rng, {32}, 0.25, 4.0);
    bn.mode = BnMode::MultiplierLess;
    auto [a_hat, offset] = bn_fold_scale(bn);
    bool all_pow2 = true;
    for (std::size_t f = 0; f < 32; ++f) all_pow2 = all_pow2 && is_pow2_magnitude(a_hat[f]);
    c.expect(all_pow2, "folded multiplier-less scales are exact powers of two");

    bn.mode = BnMode::Traditional;
    Network net;
    net.layers.emplace_back(bn);
    Tensor x = rng_uniform(rng, {16, 32}, -2.0, 2.0);
    Tensor y = forward(net, x, false);
    double worst = 0.0;
    for (std::size_t b = 0; b < 16; ++b) {
        for (std::size_t f = 0; f < 32; ++f) {
            const double direct = bn.gamma[f] * (x(b, f) - bn.running_mean[f]) /
                                      std::sqrt(bn.running_var[f] + bn.epsilon) +
                                  bn.beta[f];
            worst = std::max(worst, std::fabs(y(b, f) - direct));
        }
    }
    c.expect(worst <= 1e-12, "traditional batch norm vs direct evaluation: worst " +
                                 std::to_string(worst));
}

// ---------------------------------------------------------------------------
// criterion 9: desk-scale training
// ---------------------------------------------------------------------------

Network blobs_mlp(std::uint64_t seed) {
    Rng rng(seed);
    return make_mlp(rng, 2, {32, 32}, 4);
}

void criterion_training(Check& c) {
    const Dataset data = make_blobs(901, 4000, 4, 0.5);
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.momentum = 0.9;
    cfg.epochs = 30;
    cfg.batch_size = 32;
    cfg.seed = 902;

    Network full = blobs_mlp(903);
    train(full, data, cfg);
    const double full_acc = evaluate(full, data).accuracy;
    c.expect(full_acc >= 0.95, "full-precision accuracy " + std::to_string(full_acc));

    Network lut = blobs_mlp(903);
    for (Layer& l : lut.layers) {
        std::get<AffineLayer>(l).qcfg = QuantizerConfig{4, constraint::Free{}, 1};
    }
    train(lut, data, cfg);
    const double lut_acc = evaluate(lut, data).accuracy;
    c.expect(lut_acc >= full_acc - 0.05,
             "K=4 accuracy " + std::to_string(lut_acc) + " vs full " + std::to_string(full_acc));

    Network p2 = blobs_mlp(903);
    for (Layer& l : p2.layers) {
        std::get<AffineLayer>(l).qcfg = QuantizerConfig{4, constraint::PowerOfTwo{}, 1};
    }
    train(p2, data, cfg);
    const double p2_acc = evaluate(p2, data).accuracy;
    c.expect(p2_acc >= full_acc - 0.07,
             "pow2 accuracy " + std::to_string(p2_acc) + " vs full " + std::to_string(full_acc));

    Network bin = blobs_mlp(903);
    for (Layer& l : bin.layers) {
        std::get<AffineLayer>(l).qcfg =
            QuantizerConfig{2, constraint::FixedValues{{-1.0, 1.0}}, 1};
    }
    // Slow schedule so the learning curve spans all ten epochs instead of
    // collapsing to the noise floor within the first.
    TrainConfig bin_cfg = cfg;
    bin_cfg.epochs = 10;
    bin_cfg.learning_rate = 1e-4;
    bin_cfg.batch_size = 512;
    bin_cfg.momentum = 0.9;
    TrainResult bin_result = train(bin, data, bin_cfg);
    bool strictly_decreasing = bin_result.trace.size() == 10;
    for (std::size_t e = 1; e < bin_result.trace.size(); ++e) {
        strictly_decreasing =
            strictly_decreasing && bin_result.trace[e].loss < bin_result.trace[e - 1].loss;
    }
    c.expect(strictly_decreasing, "binary training loss strictly decreases for 10 epochs");
}

// ---------------------------------------------------------------------------
// criterion 10: byte-identical artifacts
// ---------------------------------------------------------------------------

void criterion_determinism(Check& c) {
    auto dir = cli_workdir("acceptance-determinism");
    spit(dir / "cfg",
         "dataset = blobs\nblob_samples = 400\nblob_classes = 4\nhidden_units = 16\n"
         "epochs = 3\nbatch_size = 32\nlearning_rate = 0.05\nseed = 77\n"
         "weight_quant = lutq\nquant_k = 4\n");
    for (const char* tag : {"a", "b"}) {
        auto r = run_cli("train --config " + (dir / "cfg").string() + " --model " +
                             (dir / (std::string("model-") + tag)).string() + " --trace " +
                             (dir / (std::string("trace-") + tag)).string(),
                         dir);
        c.expect(r.exit_code == 0, std::string("cmd_train run ") + tag);
    }
    c.expect(slurp(dir / "model-a") == slurp(dir / "model-b"), "cmd_train models byte-identical");
    c.expect(slurp(dir / "trace-a") == slurp(dir / "trace-b"), "cmd_train traces byte-identical");

    for (const char* tag : {"qa", "qb"}) {
        auto r = run_cli("quantize --model " + (dir / "model-a").string() + " --out " +
                             (dir / tag).string() + " --k 8",
                         dir);
        c.expect(r.exit_code == 0, std::string("cmd_quantize run ") + tag);
    }
    c.expect(slurp(dir / "qa") == slurp(dir / "qb"), "cmd_quantize outputs byte-identical");

    auto r1 = run_cli("report --arch " + std::string(LUTQ_ARCH_DIR) + "/resnet20.arch "
                      "--plan 'lutq(4)'",
                      dir);
    auto r2 = run_cli("report --arch " + std::string(LUTQ_ARCH_DIR) + "/resnet20.arch "
                      "--plan 'lutq(4)'",
                      dir);
    c.expect(r1.exit_code == 0 && r1.out == r2.out, "cmd_report output identical across runs");

    spit(dir / "rows.csv", "0.1, -0.4\n1.0, 0.3\n");
    auto i1 = run_cli("infer --model " + (dir / "qa").string() + " --input " +
                          (dir / "rows.csv").string() + " --kernel grouped",
                      dir);
    auto i2 = run_cli("infer --model " + (dir / "qa").string() + " --input " +
                          (dir / "rows.csv").string() + " --kernel grouped",
                      dir);
    c.expect(i1.exit_code == 0 && i1.out == i2.out, "cmd_infer output identical across runs");
}

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<void(Check&)> run;
};

} // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "reference table reproduction (param/buffer/mults within 5%)", 1.0, criterion_table},
        {2, "serialized model size witnesses the parameter budget", 1.0, criterion_size_witness},
        {3, "k-means monotonicity and exhaustive-assignment oracle", 30.0, criterion_kmeans},
        {4, "scalar quantizer boundary suite", 5.0, criterion_quantizer_boundaries},
        {5, "straight-through gradient checks", 10.0, criterion_ste},
        {6, "kernel equivalence (grouped, naive, shift)", 30.0, criterion_kernels},
        {7, "pruning exactness and add reduction", 10.0, criterion_pruning},
        {8, "multiplier-less batch normalization", 5.0, criterion_bn},
        {9, "desk-scale training accuracy", 300.0, criterion_training},
        {10, "byte-identical artifacts", 60.0, criterion_determinism},
    };

    int failed = 0;
    for (const Criterion& crit : criteria) {
        Check check;
        const auto start = std::chrono::steady_clock::now();
        try {
            crit.run(check);
        } catch (const std::exception& e) {
            check.failures.push_back(std::string("exception: ") + e.what());
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (seconds > crit.budget_seconds) {
            check.failures.push_back("runtime " + std::to_string(seconds) +
                                     " s exceeds the budget of " +
                                     std::to_string(crit.budget_seconds) + " s");
        }
        const bool ok = check.failures.empty();
        std::printf("[%s] criterion %d: %s (%.2f s)\n", ok ? "PASS" : "FAIL", crit.id, crit.name,
                    seconds);
        for (const std::string& msg : check.failures) {
            std::printf("       - %s\n", msg.c_str());
        }
        failed += ok ? 0 : 1;
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed),
                criteria.size());
    return failed == 0 ? 0 : 1;
}
