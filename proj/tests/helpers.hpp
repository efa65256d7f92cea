#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "lutq/tensor.hpp"

namespace lutq::test {

inline double rel_error(double got, double want) {
    if (want == 0.0) return std::fabs(got);
    return std::fabs(got - want) / std::fabs(want);
}

inline bool bits_equal(double a, double b) {
    return std::memcmp(&a, &b, sizeof(double)) == 0;
}

inline bool tensors_bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!bits_equal(a[i], b[i])) return false;
    }
    return true;
}

inline double max_rel_error(const Tensor& got, const Tensor& want) {
    double worst = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) scale = std::max(scale, std::fabs(want[i]));
    if (scale == 0.0) scale = 1.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        worst = std::max(worst, std::fabs(got[i] - want[i]) / scale);
    }
    return worst;
}

} // namespace lutq::test
