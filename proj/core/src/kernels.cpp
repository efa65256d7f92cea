#include "lutq/kernels.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace lutq {

namespace {

void check_affine_shapes(const std::vector<std::size_t>& wshape, const Tensor& x,
                         const Tensor& bias) {
    if (wshape.size() != 2) throw DimensionError("affine kernel: weights must be [O, I]");
    if (x.rank() != 1 || x.dim(0) != wshape[1]) {
        throw DimensionError("affine kernel: input length does not match I");
    }
    if (bias.rank() != 1 || bias.dim(0) != wshape[0]) {
        throw DimensionError("affine kernel: bias length does not match O");
    }
}

// d = sign * 2^b with integer b; false if |d| is not a power of two.
bool pow2_decompose(double d, bool& negative, int& b) {
    if (d == 0.0 || !std::isfinite(d)) return false;
    int exp = 0;
    if (std::frexp(std::fabs(d), &exp) != 0.5) return false;
    negative = d < 0.0;
    b = exp - 1;
    return true;
}

// floor(m * 2^b) on the signed mantissa.
std::int64_t shift_scale(std::int64_t m, int b) {
    if (b >= 0) {
        if (b >= 63) throw OverflowError("shift kernel: shift amount too large");
        const std::int64_t limit = std::numeric_limits<std::int64_t>::max() >> b;
        if (m > limit || m < -limit - 1) {
            throw OverflowError("shift kernel: mantissa overflow in left shift");
        }
        return m << b;
    }
    const int s = -b;
    if (s >= 63) return m < 0 ? -1 : 0;
    return m >> s; // arithmetic: rounds toward negative infinity
}

std::int32_t clamp_mantissa(std::int64_t v, bool saturate) {
    if (v > std::numeric_limits<std::int32_t>::max() ||
        v < std::numeric_limits<std::int32_t>::min()) {
        if (!saturate) throw OverflowError("fixed-point kernel: output mantissa overflow");
        return v > 0 ? std::numeric_limits<std::int32_t>::max()
                     : std::numeric_limits<std::int32_t>::min();
    }
    return static_cast<std::int32_t>(v);
}

std::int64_t bias_mantissa(double b, int exponent) {
    return std::llround(std::ldexp(b, -exponent));
}

} // namespace

Tensor naive_affine(const Tensor& w, const Tensor& x, const Tensor& bias, OpCounters* counters) {
    check_affine_shapes(w.shape(), x, bias);
    const std::size_t O = w.dim(0), I = w.dim(1);
    Tensor y({O});
    for (std::size_t o = 0; o < O; ++o) {
        double acc = bias[o];
        for (std::size_t i = 0; i < I; ++i) acc += w[o * I + i] * x[i];
        y[o] = acc;
    }
    if (counters) {
        counters->mults += static_cast<std::uint64_t>(O) * I;
        counters->adds += static_cast<std::uint64_t>(O) * I; // one accumulation per MAC, bias included
    }
    ensure_finite(y, "naive_affine");
    return y;
}

Tensor grouped_affine(const QuantizedWeight& qw, const Tensor& x, const Tensor& bias,
                      OpCounters* counters) {
    check_affine_shapes(qw.assign.shape, x, bias);
    const std::size_t O = qw.assign.shape[0], I = qw.assign.shape[1];
    const std::size_t K = qw.dict.size();
    const bool skip_zero_group = qw.dict.values[0] == 0.0;

    Tensor y({O});
    std::vector<double> group_sum(K);
    std::uint64_t adds = 0, mults = 0;
    for (std::size_t o = 0; o < O; ++o) {
        std::fill(group_sum.begin(), group_sum.end(), 0.0);
        for (std::size_t i = 0; i < I; ++i) {
            const std::size_t k = static_cast<std::size_t>(qw.assign.indices[o * I + i] - 1);
            if (skip_zero_group && k == 0) continue;
            group_sum[k] += x[i];
            ++adds;
        }
        double acc = bias[o];
        ++adds; // bias accumulation
        for (std::size_t k = 0; k < K; ++k) {
            if (skip_zero_group && k == 0) continue;
            acc += qw.dict.values[k] * group_sum[k];
            ++mults;
            ++adds;
        }
        y[o] = acc;
    }
    if (counters) {
        counters->mults += mults;
        counters->adds += adds;
    }
    ensure_finite(y, "grouped_affine");
    return y;
}

int choose_exponent(const Tensor& t, int mantissa_bits) {
    if (mantissa_bits < 1 || mantissa_bits > 30) {
        throw ArgumentError("choose_exponent: mantissa_bits must be in 1..30");
    }
    const double m = max_abs(t);
    if (m == 0.0) return 0;
    int exp = 0;
    std::frexp(m, &exp); // m = f * 2^exp
    return exp - mantissa_bits;
}

FixedTensor to_fixed(const Tensor& t, int exponent) {
    FixedTensor f;
    f.shape = t.shape();
    f.exponent = exponent;
    f.mantissa.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double scaled = std::ldexp(t[i], -exponent);
        if (std::fabs(scaled) > static_cast<double>(std::numeric_limits<std::int32_t>::max())) {
            throw OverflowError("to_fixed: value does not fit the 32-bit mantissa");
        }
        f.mantissa[i] = static_cast<std::int32_t>(std::llround(scaled));
    }
    return f;
}

Tensor from_fixed(const FixedTensor& t) {
    Tensor out(t.shape);
    for (std::size_t i = 0; i < t.size(); ++i) {
        out[i] = std::ldexp(static_cast<double>(t.mantissa[i]), t.exponent);
    }
    return out;
}

FixedTensor grouped_affine_fixed(const QuantizedWeight& qw, const FixedTensor& x,
                                 const Tensor& bias, bool saturate, OpCounters* counters) {
    if (qw.assign.shape.size() != 2 || x.shape.size() != 1 || x.shape[0] != qw.assign.shape[1]) {
        throw DimensionError("grouped_affine_fixed: shape mismatch");
    }
    const std::size_t O = qw.assign.shape[0], I = qw.assign.shape[1];
    const std::size_t K = qw.dict.size();
    const bool skip_zero_group = qw.dict.values[0] == 0.0;

    FixedTensor y;
    y.shape = {O};
    y.exponent = x.exponent;
    y.mantissa.resize(O);
    std::vector<std::int64_t> group_sum(K);
    for (std::size_t o = 0; o < O; ++o) {
        std::fill(group_sum.begin(), group_sum.end(), std::int64_t{0});
        for (std::size_t i = 0; i < I; ++i) {
            const std::size_t k = static_cast<std::size_t>(qw.assign.indices[o * I + i] - 1);
            if (skip_zero_group && k == 0) continue;
            group_sum[k] += x.mantissa[i];
            if (counters) ++counters->adds;
        }
        std::int64_t acc = bias_mantissa(bias[o], x.exponent);
        if (counters) ++counters->adds;
        for (std::size_t k = 0; k < K; ++k) {
            if (skip_zero_group && k == 0) continue;
            // d_k * S_k exactly (power-of-two scale or small dictionary value),
            // rounded toward negative infinity to match the shift path.
            acc += static_cast<std::int64_t>(
                std::floor(qw.dict.values[k] * static_cast<double>(group_sum[k])));
            if (counters) {
                ++counters->mults;
                ++counters->adds;
            }
        }
        y.mantissa[o] = clamp_mantissa(acc, saturate);
    }
    return y;
}

FixedTensor shift_affine(const QuantizedWeight& qw, const FixedTensor& x, const Tensor& bias,
                         bool saturate, OpCounters* counters) {
    if (qw.assign.shape.size() != 2 || x.shape.size() != 1 || x.shape[0] != qw.assign.shape[1]) {
        throw DimensionError("shift_affine: shape mismatch");
    }
    const std::size_t O = qw.assign.shape[0], I = qw.assign.shape[1];
    const std::size_t K = qw.dict.size();
    const bool skip_zero_group = qw.dict.values[0] == 0.0;

    std::vector<bool> neg(K, false);
    std::vector<int> exp(K, 0);
    for (std::size_t k = 0; k < K; ++k) {
        if (k == 0 && skip_zero_group) continue;
        bool n = false;
        int b = 0;
        if (!pow2_decompose(qw.dict.values[k], n, b)) {
            throw ContractError("shift_affine: dictionary entry " +
                                std::to_string(qw.dict.values[k]) + " is not +/-2^b");
        }
        neg[k] = n;
        exp[k] = b;
    }

    FixedTensor y;
    y.shape = {O};
    y.exponent = x.exponent;
    y.mantissa.resize(O);
    std::vector<std::int64_t> group_sum(K);
    for (std::size_t o = 0; o < O; ++o) {
        std::fill(group_sum.begin(), group_sum.end(), std::int64_t{0});
        for (std::size_t i = 0; i < I; ++i) {
            const std::size_t k = static_cast<std::size_t>(qw.assign.indices[o * I + i] - 1);
            if (skip_zero_group && k == 0) continue;
            group_sum[k] += x.mantissa[i];
            if (counters) ++counters->adds;
        }
        std::int64_t acc = bias_mantissa(bias[o], x.exponent);
        if (counters) ++counters->adds;
        for (std::size_t k = 0; k < K; ++k) {
            if (skip_zero_group && k == 0) continue;
            // Sign first, then shift: both paths compute floor(d_k * S_k).
            const std::int64_t signed_sum = neg[k] ? -group_sum[k] : group_sum[k];
            acc += shift_scale(signed_sum, exp[k]);
            if (counters) {
                ++counters->shifts;
                ++counters->adds;
            }
        }
        y.mantissa[o] = clamp_mantissa(acc, saturate);
    }
    return y;
}

} // namespace lutq
