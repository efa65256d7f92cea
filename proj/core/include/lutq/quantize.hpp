#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "lutq/tensor.hpp"

namespace lutq {

// ---------------------------------------------------------------------------
// Dictionary constraints
// ---------------------------------------------------------------------------

namespace constraint {

struct Free {};

// Dictionary values chosen in advance; only assignments are learned.
// {-1,+1} gives binary nets, {-1,0,+1} ternary.
struct FixedValues {
    std::vector<double> values;
};

// Every entry is +/- 2^b; centroids are rounded after each k-means pass.
struct PowerOfTwo {};

// d[1] pinned to exactly 0 and never updated; the ceil(ratio*N)
// smallest-magnitude weights are forced onto it. With pow2_values the
// surviving entries are additionally rounded to powers of two.
struct ZeroPinnedFirst {
    double pruning_ratio = 0.0;
    bool pow2_values = false;
};

// Uniform grid {k*delta : |k| <= 2^(n-1)-1}; values fixed, assignments learned.
struct UniformFixedPoint {
    int n_bits = 0;
    double delta = 0.0;
};

} // namespace constraint

using DictConstraint =
    std::variant<constraint::Free, constraint::FixedValues, constraint::PowerOfTwo,
                 constraint::ZeroPinnedFirst, constraint::UniformFixedPoint>;

struct Dictionary {
    std::vector<double> values;
    DictConstraint constraint;

    std::size_t size() const { return values.size(); }
};

// Checks the per-constraint value invariants (zero pin, pow2 form, grid).
void validate_dictionary(const Dictionary& dict);

// Integer tensor indexing into a dictionary; entries are 1-based (1..K) and
// the shape equals the quantized weight's shape.
struct AssignmentTensor {
    std::vector<std::size_t> shape;
    std::vector<std::int32_t> indices;

    std::size_t size() const { return indices.size(); }
};

struct QuantizedWeight {
    Dictionary dict;
    AssignmentTensor assign;
    Tensor q; // cached lookup(dict, assign)
};

QuantizedWeight make_quantized(Dictionary dict, AssignmentTensor assign);

struct QuantizerConfig {
    std::size_t K = 2;
    DictConstraint constraint = constraint::Free{};
    int kmeans_steps = 1; // M
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Exact gather Q[i] = d[A[i]]; no arithmetic touches the dictionary values.
Tensor lookup(const Dictionary& dict, const AssignmentTensor& assign);

/**
 * One k-means iteration: an assignment pass A_i = argmin_k |w_i - d_k|
 * (ties resolved to the lowest k) followed by a centroid pass d_k = mean of
 * assigned weights (empty clusters keep their previous value), then the
 * constraint post-processing. Under the Free constraint the quantization
 * error 0.5*||W - lookup(d,A)||^2 never increases across a step.
 *
 * Valid constraints: Free, PowerOfTwo, ZeroPinnedFirst. ZeroPinnedFirst
 * re-selects the pruned set from the current weight magnitudes on every call.
 */
std::pair<Dictionary, AssignmentTensor> kmeans_step(const Tensor& w, const Dictionary& dict,
                                                    const AssignmentTensor& assign);

// Nearest-value assignment against a fixed dictionary (FixedValues or
// UniformFixedPoint); the dictionary is not updated.
AssignmentTensor kmeans_step_fixed(const Tensor& w, const Dictionary& dict);

/**
 * Prune-and-cluster construction: the ceil(p*N) smallest-magnitude weights
 * (ties broken by position) are assigned to d[1] = 0; the survivors are
 * clustered over d[2..K] by k-means run to convergence. The achieved zero
 * count equals ceil(p*N) exactly.
 */
std::pair<Dictionary, AssignmentTensor> kmeans_prune(const Tensor& w, std::size_t K, double ratio);

/**
 * Rounds v = s*2^b to the nearest power of two with the threshold at the
 * arithmetic mean of the bracketing powers: frac(b) <= log2(1.5) rounds down
 * (boundary inclusive). v == 0 is an argument error; zeros are handled by
 * ZeroPinnedFirst dictionaries, never by rounding.
 */
double round_pow2(double v);

// Uniform fixed-point quantizer with saturation at (2^(n-1)-1)*delta.
// delta must be a positive power of two.
double quantize_fp(double w, int n_bits, double delta);

// Fixed power-of-two quantizer with dynamic range 2^m: values below
// 2^(m - 2^(n-2) + 0.5) collapse to zero, the rest round in the log domain.
double quantize_pow2_fixed(double w, int n_bits, int m);

// Per-layer dynamic range r = 2^ceil(log2 max|w|). All-zero input is an
// argument error.
double dynamic_range(const Tensor& w);

/**
 * Full LUT quantization of a weight tensor: M k-means steps from the given
 * (dictionary, assignment) state, or from the standard initialization when no
 * state is supplied (exact sorted-interval partition for desk-scale tensors,
 * quantile-spaced centroids beyond that, then iterated to convergence with a
 * 100-pass cap). PowerOfTwo dictionaries get their centroids rounded with
 * round_pow2 after every centroid pass.
 */
QuantizedWeight lutq_quantize(const Tensor& w, const QuantizerConfig& cfg,
                              const std::optional<std::pair<Dictionary, AssignmentTensor>>& state =
                                  std::nullopt);

// 0.5 * ||w - q||^2
double quantization_error(const Tensor& w, const Tensor& q);

// Bits needed to index K dictionary entries: ceil(log2 K) (0 for K == 1).
int index_bits(std::size_t K);

// True when |v| is an exact power of two (v != 0).
bool is_pow2_magnitude(double v);

} // namespace lutq
