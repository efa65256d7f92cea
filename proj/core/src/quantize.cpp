#include "lutq/quantize.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

namespace lutq {

namespace {

// 1-based nearest dictionary index, scanning entries [first, K); ties go to
// the lowest index.
std::int32_t nearest_index(double w, const std::vector<double>& d, std::size_t first = 0) {
    std::size_t best = first;
    double best_dist = std::fabs(w - d[first]);
    for (std::size_t k = first + 1; k < d.size(); ++k) {
        double dist = std::fabs(w - d[k]);
        if (dist < best_dist) {
            best = k;
            best_dist = dist;
        }
    }
    return static_cast<std::int32_t>(best + 1);
}

void check_assign_valid(const AssignmentTensor& a, std::size_t K) {
    for (std::int32_t ix : a.indices) {
        if (ix < 1 || static_cast<std::size_t>(ix) > K) {
            throw IndexError("assignment index " + std::to_string(ix) + " outside 1.." +
                             std::to_string(K));
        }
    }
}

// ceil(ratio * n) guarded against floating noise on exact products
// (e.g. 0.3 * 10 = 3.0000000000000004 must count as 3).
std::size_t ceil_ratio_count(double ratio, std::size_t n) {
    double t = ratio * static_cast<double>(n);
    double guard = t - 1e-9 * std::max(1.0, t);
    double c = std::ceil(guard);
    if (c < 0.0) c = 0.0;
    return static_cast<std::size_t>(c);
}

// Rounds centroids in-place to powers of two. A mean of exactly zero keeps
// the previous entry; at initialization (previous entry itself zero or not a
// power of two) the mean magnitude of the cluster members is used instead.
void round_centroids_pow2(std::vector<double>& values, const std::vector<double>& previous,
                          const Tensor& w, const AssignmentTensor& assign, std::size_t first) {
    for (std::size_t k = first; k < values.size(); ++k) {
        if (values[k] != 0.0) {
            values[k] = round_pow2(values[k]);
            continue;
        }
        if (k < previous.size() && previous[k] != 0.0 && is_pow2_magnitude(previous[k])) {
            values[k] = previous[k];
            continue;
        }
        double mag_sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < assign.size(); ++i) {
            if (assign.indices[i] == static_cast<std::int32_t>(k + 1)) {
                mag_sum += std::fabs(w[i]);
                ++count;
            }
        }
        if (count == 0 || mag_sum == 0.0) {
            throw ArgumentError(
                "power-of-two dictionary cannot represent a zero centroid; combine "
                "with pruning to allow zeros");
        }
        values[k] = round_pow2(mag_sum / static_cast<double>(count));
    }
}

// Deterministic initial centroids for 1-D clustering. Small problems get the
// exact interval dynamic program over the sorted values (the optimal 1-D
// partition is contiguous in sorted order); large ones fall back to quantile
// spacing. Both are seedless, and Lloyd iterations afterwards can only keep
// or improve the cost.
std::vector<double> initial_centroids(std::vector<double> vals, std::size_t K) {
    const std::size_t n = vals.size();
    std::sort(vals.begin(), vals.end());
    if (K >= n) return vals; // one value per centroid (callers enforce K <= n)

    constexpr double kDpBudget = 64e6; // ~K*n^2 transition evaluations
    if (static_cast<double>(K) * static_cast<double>(n) * static_cast<double>(n) > kDpBudget) {
        std::vector<double> c(K);
        for (std::size_t k = 0; k < K; ++k) {
            c[k] = vals[static_cast<std::size_t>((static_cast<double>(k) + 0.5) *
                                                 static_cast<double>(n) / static_cast<double>(K))];
        }
        return c;
    }

    std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        s1[i + 1] = s1[i] + vals[i];
        s2[i + 1] = s2[i] + vals[i] * vals[i];
    }
    auto segment_cost = [&](std::size_t i, std::size_t j) { // inclusive range
        const double cnt = static_cast<double>(j - i + 1);
        const double s = s1[j + 1] - s1[i];
        const double q = s2[j + 1] - s2[i];
        return std::max(0.0, q - s * s / cnt);
    };

    std::vector<std::vector<double>> dp(K, std::vector<double>(n, 0.0));
    std::vector<std::vector<std::size_t>> split(K, std::vector<std::size_t>(n, 0));
    for (std::size_t j = 0; j < n; ++j) dp[0][j] = segment_cost(0, j);
    for (std::size_t k = 1; k < K; ++k) {
        for (std::size_t j = k; j < n; ++j) {
            double best = 1e300;
            std::size_t best_i = k;
            for (std::size_t i = k; i <= j; ++i) {
                const double cost = dp[k - 1][i - 1] + segment_cost(i, j);
                if (cost < best) {
                    best = cost;
                    best_i = i;
                }
            }
            dp[k][j] = best;
            split[k][j] = best_i;
        }
    }

    std::vector<double> centroids(K);
    std::size_t end = n - 1;
    for (std::size_t k = K; k-- > 0;) {
        const std::size_t begin = (k == 0) ? 0 : split[k][end];
        const double cnt = static_cast<double>(end - begin + 1);
        centroids[k] = (s1[end + 1] - s1[begin]) / cnt;
        if (k > 0) end = begin - 1;
    }
    return centroids;
}

// Plain (Free) assignment + centroid passes over d[first..K); returns true if
// the assignment changed. Used both for whole-dictionary steps and for the
// survivor sub-problem of pruning.
bool plain_pass(const Tensor& w, const std::vector<bool>* excluded, std::vector<double>& d,
                std::vector<std::int32_t>& a, std::size_t first) {
    const std::size_t K = d.size();
    bool changed = false;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (excluded && (*excluded)[i]) continue;
        std::int32_t ix = nearest_index(w[i], d, first);
        if (ix != a[i]) {
            a[i] = ix;
            changed = true;
        }
    }
    std::vector<double> sums(K, 0.0);
    std::vector<std::size_t> counts(K, 0);
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (excluded && (*excluded)[i]) continue;
        std::size_t k = static_cast<std::size_t>(a[i] - 1);
        sums[k] += w[i];
        counts[k] += 1;
    }
    for (std::size_t k = first; k < K; ++k) {
        if (counts[k] > 0) d[k] = sums[k] / static_cast<double>(counts[k]);
        // empty cluster keeps its previous centroid
    }
    return changed;
}

// Marks the ceil(ratio*N) smallest-magnitude positions; ties broken by
// position order.
std::vector<bool> select_pruned(const Tensor& w, double ratio, std::size_t* out_count) {
    const std::size_t n = w.size();
    std::size_t n_zero = ceil_ratio_count(ratio, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(w[a]) < std::fabs(w[b]);
    });
    std::vector<bool> pruned(n, false);
    for (std::size_t i = 0; i < n_zero; ++i) pruned[order[i]] = true;
    if (out_count) *out_count = n_zero;
    return pruned;
}

// One prune-constrained step: re-select the pruned set, then one assignment +
// centroid pass for the survivors over d[2..K].
std::pair<Dictionary, AssignmentTensor> prune_step(const Tensor& w, const Dictionary& dict,
                                                   const constraint::ZeroPinnedFirst& zp) {
    const std::size_t K = dict.size();
    std::size_t n_zero = 0;
    std::vector<bool> pruned = select_pruned(w, zp.pruning_ratio, &n_zero);
    if (w.size() - n_zero < K - 1) {
        throw ArgumentError("kmeans_prune: fewer surviving weights than clusters");
    }
    std::vector<double> d = dict.values;
    d[0] = 0.0; // pinned, never updated
    std::vector<std::int32_t> a(w.size(), 1);
    plain_pass(w, &pruned, d, a, 1);
    if (zp.pow2_values) round_centroids_pow2(d, dict.values, w, {w.shape(), a}, 1);
    Dictionary out{std::move(d), dict.constraint};
    return {std::move(out), AssignmentTensor{w.shape(), std::move(a)}};
}

// Free/PowerOfTwo step.
std::pair<Dictionary, AssignmentTensor> plain_step(const Tensor& w, const Dictionary& dict,
                                                   bool pow2) {
    std::vector<double> d = dict.values;
    std::vector<std::int32_t> a(w.size(), 1);
    plain_pass(w, nullptr, d, a, 0);
    AssignmentTensor assign{w.shape(), std::move(a)};
    if (pow2) round_centroids_pow2(d, dict.values, w, assign, 0);
    Dictionary out{std::move(d), dict.constraint};
    return {std::move(out), std::move(assign)};
}

constexpr int kMaxInitIterations = 100;

} // namespace

int index_bits(std::size_t K) {
    if (K == 0) throw ArgumentError("index_bits: empty dictionary");
    if (K == 1) return 0;
    return static_cast<int>(std::bit_width(K - 1));
}

bool is_pow2_magnitude(double v) {
    if (v == 0.0 || !std::isfinite(v)) return false;
    int exp = 0;
    return std::frexp(std::fabs(v), &exp) == 0.5;
}

void validate_dictionary(const Dictionary& dict) {
    if (dict.values.empty()) throw ArgumentError("dictionary: K must be >= 1");
    std::visit(
        [&](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, constraint::PowerOfTwo>) {
                for (double v : dict.values) {
                    if (!is_pow2_magnitude(v)) {
                        throw ArgumentError("dictionary: entry " + std::to_string(v) +
                                            " is not +/-2^b");
                    }
                }
            } else if constexpr (std::is_same_v<T, constraint::ZeroPinnedFirst>) {
                if (dict.values[0] != 0.0) {
                    throw ArgumentError("dictionary: zero-pinned first entry must be exactly 0");
                }
                if (c.pow2_values) {
                    for (std::size_t k = 1; k < dict.values.size(); ++k) {
                        if (!is_pow2_magnitude(dict.values[k])) {
                            throw ArgumentError("dictionary: pruned pow2 entry " +
                                                std::to_string(dict.values[k]) +
                                                " is not +/-2^b");
                        }
                    }
                }
            } else if constexpr (std::is_same_v<T, constraint::UniformFixedPoint>) {
                if (c.n_bits < 2 || !(c.delta > 0.0)) {
                    throw ArgumentError("dictionary: uniform grid needs n_bits >= 2, delta > 0");
                }
                double qmax = std::ldexp(1.0, c.n_bits - 1) - 1.0;
                for (double v : dict.values) {
                    double steps = v / c.delta;
                    if (steps != std::floor(steps) || std::fabs(steps) > qmax) {
                        throw ArgumentError("dictionary: value off the uniform grid");
                    }
                }
            } else if constexpr (std::is_same_v<T, constraint::FixedValues>) {
                if (c.values != dict.values) {
                    throw ArgumentError("dictionary: values differ from the fixed list");
                }
            }
        },
        dict.constraint);
}

Tensor lookup(const Dictionary& dict, const AssignmentTensor& assign) {
    if (dict.values.empty()) throw ArgumentError("lookup: empty dictionary");
    check_assign_valid(assign, dict.size());
    Tensor out(assign.shape);
    for (std::size_t i = 0; i < assign.size(); ++i) {
        out[i] = dict.values[static_cast<std::size_t>(assign.indices[i] - 1)];
    }
    return out;
}

QuantizedWeight make_quantized(Dictionary dict, AssignmentTensor assign) {
    Tensor q = lookup(dict, assign);
    return QuantizedWeight{std::move(dict), std::move(assign), std::move(q)};
}

std::pair<Dictionary, AssignmentTensor> kmeans_step(const Tensor& w, const Dictionary& dict,
                                                    const AssignmentTensor& assign) {
    if (assign.shape != w.shape()) throw DimensionError("kmeans_step: assignment shape mismatch");
    if (dict.size() > w.size()) {
        throw ArgumentError("kmeans_step: K exceeds the number of weights");
    }
    check_assign_valid(assign, dict.size());
    if (const auto* zp = std::get_if<constraint::ZeroPinnedFirst>(&dict.constraint)) {
        return prune_step(w, dict, *zp);
    }
    if (std::holds_alternative<constraint::PowerOfTwo>(dict.constraint)) {
        return plain_step(w, dict, true);
    }
    if (std::holds_alternative<constraint::Free>(dict.constraint)) {
        return plain_step(w, dict, false);
    }
    throw ArgumentError("kmeans_step: constraint requires kmeans_step_fixed");
}

AssignmentTensor kmeans_step_fixed(const Tensor& w, const Dictionary& dict) {
    if (dict.values.empty()) throw ArgumentError("kmeans_step_fixed: empty dictionary");
    if (!std::holds_alternative<constraint::FixedValues>(dict.constraint) &&
        !std::holds_alternative<constraint::UniformFixedPoint>(dict.constraint)) {
        throw ArgumentError("kmeans_step_fixed: constraint must fix the dictionary values");
    }
    std::vector<std::int32_t> a(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) a[i] = nearest_index(w[i], dict.values);
    return AssignmentTensor{w.shape(), std::move(a)};
}

std::pair<Dictionary, AssignmentTensor> kmeans_prune(const Tensor& w, std::size_t K,
                                                     double ratio) {
    QuantizerConfig cfg;
    cfg.K = K;
    cfg.constraint = constraint::ZeroPinnedFirst{ratio, false};
    QuantizedWeight qw = lutq_quantize(w, cfg);
    return {std::move(qw.dict), std::move(qw.assign)};
}

double round_pow2(double v) {
    if (v == 0.0) throw ArgumentError("round_pow2: zero has no power-of-two form");
    if (!std::isfinite(v)) throw ArgumentError("round_pow2: non-finite input");
    int exp = 0;
    double f = std::frexp(std::fabs(v), &exp); // |v| = f * 2^exp, f in [0.5, 1)
    // frac(log2|v|) <= log2(1.5)  <=>  2f <= 1.5; boundary rounds down.
    double mag = (f <= 0.75) ? std::ldexp(1.0, exp - 1) : std::ldexp(1.0, exp);
    return std::copysign(mag, v);
}

double quantize_fp(double w, int n_bits, double delta) {
    if (n_bits < 2) throw ArgumentError("quantize_fp: n_bits must be >= 2");
    if (!(delta > 0.0) || !is_pow2_magnitude(delta)) {
        throw ArgumentError("quantize_fp: delta must be a positive power of two");
    }
    if (!std::isfinite(w)) throw ArgumentError("quantize_fp: non-finite input");
    double mag = std::fabs(w) / delta;
    double qmax = std::ldexp(1.0, n_bits - 1) - 1.0;
    double q = (mag <= qmax) ? std::floor(mag + 0.5) : qmax;
    return std::copysign(q * delta, w);
}

double quantize_pow2_fixed(double w, int n_bits, int m) {
    if (n_bits < 2) throw ArgumentError("quantize_pow2_fixed: n_bits must be >= 2");
    if (!std::isfinite(w)) throw ArgumentError("quantize_pow2_fixed: non-finite input");
    double a = std::fabs(w);
    double zero_threshold =
        std::exp2(static_cast<double>(m) - std::ldexp(1.0, n_bits - 2) + 0.5);
    if (a <= zero_threshold) return 0.0;
    double top = std::ldexp(1.0, m);
    double mag = (a <= top)
                     ? std::ldexp(1.0, static_cast<int>(std::floor(std::log2(a) + 0.5)))
                     : top;
    return std::copysign(mag, w);
}

double dynamic_range(const Tensor& w) {
    if (w.size() == 0) throw ArgumentError("dynamic_range: empty tensor");
    double m = max_abs(w);
    if (m == 0.0) throw ArgumentError("dynamic_range: all-zero tensor");
    int exp = 0;
    double f = std::frexp(m, &exp);
    // 2^ceil(log2 m); exact powers of two map to themselves.
    return (f == 0.5) ? std::ldexp(1.0, exp - 1) : std::ldexp(1.0, exp);
}

namespace {

// Standard initialization: deterministic centroids (exact interval partition
// at desk scale) iterated to convergence (assignment-change-free) or 100
// passes.
std::pair<Dictionary, AssignmentTensor> init_plain(const Tensor& w, std::size_t K, bool pow2,
                                                   const DictConstraint& constr) {
    if (K == 0) throw ArgumentError("lutq_quantize: K must be >= 1");
    if (K > w.size()) throw ArgumentError("lutq_quantize: K exceeds the number of weights");
    std::vector<double> d = initial_centroids(w.data(), K);
    std::vector<std::int32_t> a(w.size(), 1);
    for (int it = 0; it < kMaxInitIterations; ++it) {
        if (!plain_pass(w, nullptr, d, a, 0)) break;
    }
    AssignmentTensor assign{w.shape(), std::move(a)};
    if (pow2) round_centroids_pow2(d, d, w, assign, 0);
    return {Dictionary{std::move(d), constr}, std::move(assign)};
}

std::pair<Dictionary, AssignmentTensor> init_prune(const Tensor& w, std::size_t K,
                                                   const constraint::ZeroPinnedFirst& zp) {
    if (K < 2) throw ArgumentError("kmeans_prune: K must be >= 2");
    if (!(zp.pruning_ratio >= 0.0) || zp.pruning_ratio >= 1.0) {
        throw ArgumentError("kmeans_prune: ratio must lie in [0, 1)");
    }
    std::size_t n_zero = 0;
    std::vector<bool> pruned = select_pruned(w, zp.pruning_ratio, &n_zero);
    if (w.size() < n_zero + (K - 1)) {
        throw ArgumentError("kmeans_prune: fewer surviving weights than clusters");
    }
    std::vector<double> survivors;
    survivors.reserve(w.size() - n_zero);
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!pruned[i]) survivors.push_back(w[i]);
    }
    std::vector<double> d(K, 0.0);
    std::vector<double> survivors_init = initial_centroids(std::move(survivors), K - 1);
    std::copy(survivors_init.begin(), survivors_init.end(), d.begin() + 1);
    std::vector<std::int32_t> a(w.size(), 1);
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!pruned[i]) a[i] = nearest_index(w[i], d, 1);
    }
    for (int it = 0; it < kMaxInitIterations; ++it) {
        if (!plain_pass(w, &pruned, d, a, 1)) break;
    }
    AssignmentTensor assign{w.shape(), std::move(a)};
    if (zp.pow2_values) round_centroids_pow2(d, d, w, assign, 1);
    return {Dictionary{std::move(d), DictConstraint{zp}}, std::move(assign)};
}

std::vector<double> uniform_grid(const constraint::UniformFixedPoint& u) {
    if (u.n_bits < 2 || u.n_bits > 16) {
        throw ArgumentError("lutq_quantize: uniform grid needs n_bits in 2..16");
    }
    if (!(u.delta > 0.0) || !is_pow2_magnitude(u.delta)) {
        throw ArgumentError("lutq_quantize: uniform grid delta must be a positive power of two");
    }
    long qmax = (1L << (u.n_bits - 1)) - 1;
    std::vector<double> grid;
    grid.reserve(static_cast<std::size_t>(2 * qmax + 1));
    for (long k = -qmax; k <= qmax; ++k) grid.push_back(static_cast<double>(k) * u.delta);
    return grid;
}

} // namespace

QuantizedWeight lutq_quantize(const Tensor& w, const QuantizerConfig& cfg,
                              const std::optional<std::pair<Dictionary, AssignmentTensor>>& state) {
    if (cfg.kmeans_steps < 1) throw ArgumentError("lutq_quantize: M must be >= 1");

    if (const auto* fixed = std::get_if<constraint::FixedValues>(&cfg.constraint)) {
        if (fixed->values.empty()) throw ArgumentError("lutq_quantize: empty fixed dictionary");
        Dictionary dict{fixed->values, cfg.constraint};
        AssignmentTensor assign = kmeans_step_fixed(w, dict);
        return make_quantized(std::move(dict), std::move(assign));
    }
    if (const auto* u = std::get_if<constraint::UniformFixedPoint>(&cfg.constraint)) {
        Dictionary dict{uniform_grid(*u), cfg.constraint};
        AssignmentTensor assign = kmeans_step_fixed(w, dict);
        return make_quantized(std::move(dict), std::move(assign));
    }

    std::pair<Dictionary, AssignmentTensor> cur;
    if (state) {
        cur = *state;
        if (cur.first.size() != cfg.K && cfg.K != 0) {
            throw ArgumentError("lutq_quantize: state dictionary size differs from cfg.K");
        }
    } else if (const auto* zp = std::get_if<constraint::ZeroPinnedFirst>(&cfg.constraint)) {
        cur = init_prune(w, cfg.K, *zp);
    } else {
        bool pow2 = std::holds_alternative<constraint::PowerOfTwo>(cfg.constraint);
        cur = init_plain(w, cfg.K, pow2, cfg.constraint);
    }
    for (int m = 0; m < cfg.kmeans_steps; ++m) {
        cur = kmeans_step(w, cur.first, cur.second);
    }
    validate_dictionary(cur.first);
    return make_quantized(std::move(cur.first), std::move(cur.second));
}

double quantization_error(const Tensor& w, const Tensor& q) {
    if (!w.same_shape(q)) throw DimensionError("quantization_error: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        double d = w[i] - q[i];
        s += d * d;
    }
    return 0.5 * s;
}

} // namespace lutq
