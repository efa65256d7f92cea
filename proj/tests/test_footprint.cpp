#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "lutq/footprint.hpp"

using namespace lutq;
using lutq::test::rel_error;

#ifndef LUTQ_ARCH_DIR
#define LUTQ_ARCH_DIR "archs"
#endif

namespace {

ArchitectureSpec arch_from(const std::string& text) {
    std::istringstream in(text);
    return parse_arch(in, "test");
}

FootprintReport report_for(const std::string& net, const std::string& plan) {
    ArchitectureSpec arch = load_arch(std::string(LUTQ_ARCH_DIR) + "/" + net + ".arch");
    apply_plan(arch, parse_plan(plan));
    return footprint(arch);
}

} // namespace

TEST_CASE("parameter memory follows the dictionary-plus-index budget") {
    ArchitectureSpec arch =
        arch_from("layer kind=affine I=100 O=10 plan=lutq(16)\n"); // N = 1000
    CHECK(param_memory(arch)[0] == 16 * 32 + 1000 * 4); // 4512 bits
}

TEST_CASE("buffer memory definition at unit scale") {
    ArchitectureSpec arch = arch_from("layer kind=affine I=10 O=10 act_bits=8\n");
    CHECK(buffer_memory(arch) == 160);
}

TEST_CASE("grouped multiplications at unit scale") {
    ArchitectureSpec naive = arch_from("layer kind=affine I=10 O=1\n");
    ArchitectureSpec grouped = arch_from("layer kind=affine I=10 O=1 plan=lutq(2)\n");
    CHECK(count_ops(naive)[0].mults == 10);
    CHECK(count_ops(grouped)[0].mults == 2);
}

TEST_CASE("memory crossover grid") {
    for (std::size_t K : {2ul, 4ul, 16ul, 256ul}) {
        for (std::uint64_t N : {100ull, 10000ull, 1000000ull}) {
            std::ostringstream spec;
            spec << "layer kind=affine I=" << N << " O=1 plan=lutq(" << K << ")\n";
            ArchitectureSpec lut = arch_from(spec.str());
            std::ostringstream fspec;
            fspec << "layer kind=affine I=" << N << " O=1\n";
            ArchitectureSpec full = arch_from(fspec.str());
            const std::uint64_t lut_bits = param_memory(lut)[0];
            const std::uint64_t full_bits = param_memory(full)[0];
            const bool closed_form = K * 32 + N * static_cast<std::uint64_t>(index_bits(K)) <
                                     32 * N;
            CHECK((lut_bits < full_bits) == closed_form);
        }
    }
}

TEST_CASE("parameter memory is monotone in decreasing K") {
    std::uint64_t previous = 0;
    for (std::size_t K : {256ul, 64ul, 16ul, 4ul, 2ul}) {
        std::ostringstream spec;
        spec << "layer kind=affine I=1000 O=100 plan=lutq(" << K << ")\n";
        const std::uint64_t bits = param_memory(arch_from(spec.str()))[0];
        if (previous != 0) CHECK(bits <= previous);
        previous = bits;
    }
}

TEST_CASE("report totals are exact sums") {
    FootprintReport r = report_for("resnet20", "lutq(16)");
    std::uint64_t param = 0, adds = 0, mults = 0;
    for (const LayerFootprint& f : r.layers) {
        param += f.param_bits;
        adds += f.ops.adds;
        mults += f.ops.mults;
    }
    CHECK(param == r.total_param_bits);
    CHECK(adds == r.total_ops.adds);
    CHECK(mults == r.total_ops.mults);
}

TEST_CASE("reference table values reproduce within tolerance") {
    struct Row {
        const char* net;
        const char* plan;
        double param_mb, buffer_mb, adds_m, mults_m;
    };
    // Reference accounting for the shipped ResNet specs (float and 4-bit).
    const Row rows[] = {
        {"resnet20", "float", 1.03, 0.13, 40.64, 40.55},
        {"resnet20", "lutq(16)", 0.13, 0.13, 40.64, 3.01},
        {"resnet18", "float", 44.59, 3.64, 1814.85, 1814.07},
        {"resnet18", "lutq(16)", 5.61, 3.64, 1814.85, 39.76},
        {"resnet34", "lutq(4)", 5.26, 3.64, 3665.17, 14.96},
        {"resnet50", "lutq(4)", 6.29, 4.59, 4094.80, 44.46},
    };
    for (const Row& row : rows) {
        CAPTURE(row.net);
        CAPTURE(row.plan);
        FootprintReport r = report_for(row.net, row.plan);
        CHECK(rel_error(r.param_mb(), row.param_mb) < 0.05);
        CHECK(rel_error(r.buffer_mb(), row.buffer_mb) < 0.05);
        CHECK(rel_error(static_cast<double>(r.total_ops.adds) / 1e6, row.adds_m) < 0.05);
        CHECK(rel_error(static_cast<double>(r.total_ops.mults) / 1e6, row.mults_m) < 0.05);
    }
}

TEST_CASE("arch validation rejects inconsistent chains") {
    CHECK_THROWS_AS(arch_from(""), ConfigError);
    CHECK_THROWS_AS(arch_from("layer kind=conv2d I=3 O=8 S=8x8 F=3x3 strange=1\n"),
                    ConfigError);
    CHECK_THROWS_AS(arch_from("layer kind=conv2d I=3 O=8 S=8x8 F=3x3\n"
                              "layer kind=conv2d I=4 O=8 S=8x8 F=3x3\n"),
                    ConfigError);
    CHECK_THROWS_AS(arch_from("layer kind=conv2d I=3 O=8 S=8x8 F=3x3\n"
                              "layer kind=affine I=100 O=10\n"),
                    ConfigError);
    CHECK_NOTHROW(arch_from("layer kind=conv2d I=3 O=8 S=8x8 F=3x3\n"
                            "layer kind=affine I=512 O=10\n"));
}

TEST_CASE("plan parsing") {
    CHECK(parse_plan("float").kind == QuantPlan::Kind::None);
    CHECK(parse_plan("none").kind == QuantPlan::Kind::None);
    CHECK(parse_plan("lutq(16)").k == 16);
    CHECK(parse_plan("fp(8)").n_bits == 8);
    CHECK_THROWS_AS(parse_plan("lutq(0)"), ConfigError);
    CHECK_THROWS_AS(parse_plan("int8"), ConfigError);
}

TEST_CASE("fp plan counts narrow weights plus the step size") {
    ArchitectureSpec arch = arch_from("layer kind=affine I=100 O=10 plan=fp(8)\n");
    CHECK(param_memory(arch)[0] == 1000 * 8 + 32);
    // dense multiplies remain dense under fp
    CHECK(count_ops(arch)[0].mults == 1000);
}

TEST_CASE("multiplier-less bn drops its multiplies from the count") {
    ArchitectureSpec traditional = arch_from(
        "layer kind=conv2d I=3 O=8 S=8x8 F=3x3\nlayer kind=bn O=8\n");
    ArchitectureSpec less = arch_from(
        "layer kind=conv2d I=3 O=8 S=8x8 F=3x3\nlayer kind=bn O=8 mode=multiplier_less\n");
    CHECK(count_ops(traditional)[1].mults == 16);
    CHECK(count_ops(less)[1].mults == 0);
    CHECK(count_ops(less)[1].adds == 16);
}
