#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <vector>

#include "lutq/errors.hpp"

namespace lutq {

/**
 * Dense row-major tensor of 64-bit reals.
 *
 * Tensors behave as plain values: operations return new tensors and never
 * mutate their inputs, so sharing across threads is safe. Every public
 * operation leaves only finite values behind (validated, not assumed).
 */
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape); // zero-filled
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    // 2-D convenience for tests and small fixtures.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor vector(std::initializer_list<double> values);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const;

    double operator[](std::size_t flat) const { return data_[flat]; }
    double& operator[](std::size_t flat) { return data_[flat]; }

    // Row-major multi-index access.
    template <class... Ix>
    double operator()(Ix... ix) const {
        return data_[offset({static_cast<std::size_t>(ix)...})];
    }
    template <class... Ix>
    double& operator()(Ix... ix) {
        return data_[offset({static_cast<std::size_t>(ix)...})];
    }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    std::size_t offset(std::initializer_list<std::size_t> ix) const;

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// Throws ArgumentError if any value is NaN/Inf; `where` names the operation.
void ensure_finite(const Tensor& t, const char* where);

// Matrix-vector product a[OxI] * x[I] -> [O]. Summation order is fixed
// left-to-right per output row so results are reproducible.
Tensor matmul(const Tensor& a, const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

double max_abs(const Tensor& t);
double min_value(const Tensor& t);
double max_value(const Tensor& t);
double sum_squared(const Tensor& t);

/**
 * Deterministic counter-based generator (splitmix64). The value stream is a
 * pure function of the 64-bit seed, identical across platforms; no global
 * state is touched.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    double next_double(); // [0, 1), 53-bit resolution
    double uniform(double lo, double hi);
    double normal(double mean = 0.0, double stddev = 1.0);
    std::size_t below(std::size_t n); // [0, n)

private:
    std::uint64_t state_;
};

// Tensor filled with uniform draws in [lo, hi). lo >= hi is an argument error.
Tensor rng_uniform(Rng& rng, std::vector<std::size_t> shape, double lo, double hi);
Tensor rng_normal(Rng& rng, std::vector<std::size_t> shape, double mean = 0.0,
                  double stddev = 1.0);

} // namespace lutq
