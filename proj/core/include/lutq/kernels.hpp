#pragma once

#include <cstdint>
#include <vector>

#include "lutq/quantize.hpp"
#include "lutq/tensor.hpp"

namespace lutq {

// Instrumentation counters; kernels add the operations they actually execute.
struct OpCounters {
    std::uint64_t mults = 0;
    std::uint64_t adds = 0;
    std::uint64_t shifts = 0;
};

// Reference path: y = W*x + b with one multiplication per weight.
Tensor naive_affine(const Tensor& w, const Tensor& x, const Tensor& bias,
                    OpCounters* counters = nullptr);

/**
 * Grouped accumulation: y_o = b_o + sum_k d_k * (sum of x_i assigned to k),
 * exactly K multiplications per output row regardless of I. When d[1] == 0
 * (pruned dictionary) group 1 is skipped entirely: neither its accumulations
 * nor its multiplication are executed.
 */
Tensor grouped_affine(const QuantizedWeight& qw, const Tensor& x, const Tensor& bias,
                      OpCounters* counters = nullptr);

/**
 * Fixed-point tensor: value_i = mantissa_i * 2^exponent with a shared
 * per-tensor exponent and 32-bit mantissas.
 */
struct FixedTensor {
    std::vector<std::size_t> shape;
    std::vector<std::int32_t> mantissa;
    int exponent = 0;

    std::size_t size() const { return mantissa.size(); }
};

// Smallest exponent such that max|v| fits in `mantissa_bits` magnitude bits.
int choose_exponent(const Tensor& t, int mantissa_bits = 30);
FixedTensor to_fixed(const Tensor& t, int exponent);
Tensor from_fixed(const FixedTensor& t);

/**
 * Grouped accumulation evaluated in the shared fixed-point mode: integer
 * group sums, each scaled by d_k with round-toward-negative-infinity. This is
 * the multiplication-based reference that shift_affine must match bit for
 * bit. Saturates the output mantissa by default; with saturate = false an
 * overflow raises an error instead.
 */
FixedTensor grouped_affine_fixed(const QuantizedWeight& qw, const FixedTensor& x,
                                 const Tensor& bias, bool saturate = true,
                                 OpCounters* counters = nullptr);

/**
 * Shift-only execution for power-of-two dictionaries: every d_k multiply is
 * replaced by sign application plus an arithmetic shift (right shifts round
 * toward negative infinity). Output is bit-identical to grouped_affine_fixed
 * and the multiplication counter stays at zero. A non-power-of-two
 * dictionary entry is a contract error; a zero first entry (pruned
 * dictionaries) is allowed and skipped.
 */
FixedTensor shift_affine(const QuantizedWeight& qw, const FixedTensor& x, const Tensor& bias,
                         bool saturate = true, OpCounters* counters = nullptr);

} // namespace lutq
