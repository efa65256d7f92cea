#include "lutq/tensor.hpp"

#include <cmath>
#include <string>

namespace lutq {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size()) {
        throw DimensionError("tensor: shape product " + std::to_string(shape_product(shape_)) +
                             " does not match data length " + std::to_string(data_.size()));
    }
    ensure_finite(*this, "tensor construction");
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::vector<double> data;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& row : rows) {
        if (row.size() != cols) throw DimensionError("tensor: ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) throw DimensionError("tensor: axis out of range");
    return shape_[axis];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> ix) const {
    if (ix.size() != shape_.size()) throw DimensionError("tensor: wrong index arity");
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : ix) {
        if (i >= shape_[axis]) throw IndexError("tensor: index out of range");
        flat = flat * shape_[axis] + i;
        ++axis;
    }
    return flat;
}

void ensure_finite(const Tensor& t, const char* where) {
    for (double v : t.data()) {
        if (!std::isfinite(v)) {
            throw ArgumentError(std::string(where) + ": non-finite value produced");
        }
    }
}

Tensor matmul(const Tensor& a, const Tensor& x) {
    if (a.rank() != 2 || x.rank() != 1 || a.dim(1) != x.dim(0)) {
        throw DimensionError("matmul: need [OxI] and [I] operands");
    }
    const std::size_t out = a.dim(0), in = a.dim(1);
    Tensor y({out});
    for (std::size_t o = 0; o < out; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < in; ++i) acc += a[o * in + i] * x[i];
        y[o] = acc;
    }
    ensure_finite(y, "matmul");
    return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DimensionError("add: shape mismatch");
    Tensor r = a;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += b[i];
    ensure_finite(r, "add");
    return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DimensionError("sub: shape mismatch");
    Tensor r = a;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= b[i];
    ensure_finite(r, "sub");
    return r;
}

Tensor scale(const Tensor& a, double s) {
    Tensor r = a;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] *= s;
    ensure_finite(r, "scale");
    return r;
}

double max_abs(const Tensor& t) {
    double m = 0.0;
    for (double v : t.data()) m = std::max(m, std::fabs(v));
    return m;
}

double min_value(const Tensor& t) {
    if (t.size() == 0) throw ArgumentError("min_value: empty tensor");
    double m = t[0];
    for (double v : t.data()) m = std::min(m, v);
    return m;
}

double max_value(const Tensor& t) {
    if (t.size() == 0) throw ArgumentError("max_value: empty tensor");
    double m = t[0];
    for (double v : t.data()) m = std::max(m, v);
    return m;
}

double sum_squared(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v * v;
    return s;
}

std::uint64_t Rng::next_u64() {
    // splitmix64
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    double v = lo + next_double() * (hi - lo);
    if (v >= hi) v = std::nextafter(hi, lo); // guard against rounding onto hi
    return v;
}

double Rng::normal(double mean, double stddev) {
    // Box-Muller; two uniforms per draw keeps the stream position predictable.
    double u1 = 1.0 - next_double();
    double u2 = next_double();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    return mean + stddev * z;
}

std::size_t Rng::below(std::size_t n) {
    if (n == 0) throw ArgumentError("rng: below(0)");
    return static_cast<std::size_t>(next_u64() % n);
}

Tensor rng_uniform(Rng& rng, std::vector<std::size_t> shape, double lo, double hi) {
    if (!(lo < hi)) throw ArgumentError("rng_uniform: requires lo < hi");
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

Tensor rng_normal(Rng& rng, std::vector<std::size_t> shape, double mean, double stddev) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(mean, stddev);
    return t;
}

} // namespace lutq
