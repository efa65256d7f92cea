#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lutq/layers.hpp"

namespace lutq {

enum class ArchKind { Conv2D, Affine, BatchNorm, Pool, Add };
enum class PoolKind { Max, Avg };

struct QuantPlan {
    enum class Kind { None, LutQ, Fp } kind = Kind::None;
    std::size_t k = 0; // LutQ dictionary size
    int n_bits = 0;    // Fp word length
};

QuantPlan parse_plan(const std::string& text); // "none"/"float", "lutq(K)", "fp(n)"
std::string plan_name(const QuantPlan& plan);

/**
 * Declarative layer description for analytic accounting. S (map_h x map_w) is
 * the output map size; input map size is S * stride per axis (same-padding
 * convention). Affine layers use I/O with S = F = 1x1.
 */
struct ArchLayer {
    ArchKind kind = ArchKind::Conv2D;
    std::size_t in_maps = 0;  // I
    std::size_t out_maps = 0; // O
    std::size_t map_h = 1, map_w = 1;   // S
    std::size_t filt_h = 1, filt_w = 1; // F
    std::size_t stride = 1;
    int act_bits = 32;
    bool bias = false;
    QuantPlan plan;
    BnMode bn_mode = BnMode::Traditional; // bn layers
    PoolKind pool = PoolKind::Max;        // pool layers

    std::size_t weight_count() const; // N (conv/affine), 0 otherwise
};

struct ArchitectureSpec {
    std::string name;
    std::vector<ArchLayer> layers;
};

ArchitectureSpec parse_arch(std::istream& in, const std::string& origin = "arch");
ArchitectureSpec load_arch(const std::string& path);

// Checks that consecutive layer shapes chain consistently.
void validate_arch(const ArchitectureSpec& arch);

// Replaces the weight-quantization plan of every conv/affine layer.
void apply_plan(ArchitectureSpec& arch, const QuantPlan& plan);

struct OpsCount {
    std::uint64_t adds = 0;
    std::uint64_t mults = 0;
};

struct LayerFootprint {
    ArchKind kind = ArchKind::Conv2D;
    std::uint64_t param_bits = 0;
    std::uint64_t buffer_bits = 0; // in + out activations (conv/affine only)
    OpsCount ops;
};

const char* kind_name(ArchKind kind);

struct FootprintReport {
    std::string arch_name;
    std::string plan;
    std::vector<LayerFootprint> layers;
    std::uint64_t total_param_bits = 0;
    std::uint64_t buffer_bits = 0; // max over layers
    OpsCount total_ops;

    double param_mb() const;
    double buffer_mb() const;
};

// Parameter memory: full precision N*32, LUT-Q K*32 + N*ceil(log2 K),
// fp(n) N*n + 32 (step size); BN gamma/beta and biases at 32 bit each.
std::vector<std::uint64_t> param_memory(const ArchitectureSpec& arch);

// Two-buffer activation model: max over conv/affine layers of
// (input + output activation count) * act_bits. Elementwise and pooling
// layers run in place / streamed and do not bound the buffer.
std::uint64_t buffer_memory(const ArchitectureSpec& arch);

// Per-layer adds/mults. Conv: O*S*I*F MAC pairs (grouped LUT-Q multiplies
// drop to O*S*min(K, I*F)); BN costs 2 mults + 2 adds per channel in
// Traditional mode, adds only in MultiplierLess; residual adds O*S; average
// pooling accumulates its window.
std::vector<OpsCount> count_ops(const ArchitectureSpec& arch);

FootprintReport footprint(const ArchitectureSpec& arch);

// Structured key-value dump (one line per layer plus totals).
void print_report(std::ostream& out, const FootprintReport& report);

// One-row summary table in the style of the memory/computations tables.
void print_table(std::ostream& out, const FootprintReport& report);

// MB in this toolkit means 2^20 bytes (documented in the README).
constexpr double kBytesPerMb = 1024.0 * 1024.0;

} // namespace lutq
