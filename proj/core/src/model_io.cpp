#include "lutq/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace lutq {

namespace {

constexpr char kMagic[4] = {'L', 'U', 'T', 'Q'};
constexpr std::uint32_t kVersion = 1;

enum : std::uint32_t { kKindAffine = 1, kKindConv = 2, kKindBn = 3 };
enum : std::uint32_t { kHasFull = 1, kHasQstate = 2, kHasActQuant = 4 };

// --- little-endian writers -------------------------------------------------

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_tensor(std::string& out, const Tensor& t) {
    for (double v : t.data()) put_f64(out, v);
}

// --- cursor-based reader ---------------------------------------------------

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw IoError("model file truncated");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    Tensor tensor(std::vector<std::size_t> shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        std::vector<double> data(n);
        for (std::size_t i = 0; i < n; ++i) data[i] = f64();
        return Tensor(std::move(shape), std::move(data));
    }
};

// --- assignment packing ----------------------------------------------------

std::pair<std::size_t, std::size_t> row_layout(const std::vector<std::size_t>& shape) {
    std::size_t total = 1;
    for (std::size_t d : shape) total *= d;
    const std::size_t rows = shape.size() >= 2 ? shape[0] : 1;
    return {rows, rows ? total / rows : 0};
}

void put_assignments(std::string& out, const AssignmentTensor& a, std::size_t K) {
    const int bits = index_bits(K);
    if (bits == 0) return; // K == 1: all indices are 1, nothing to store
    if (bits > 32) throw IoError("model file: dictionary too large to pack");
    const auto [rows, row_len] = row_layout(a.shape);
    for (std::size_t r = 0; r < rows; ++r) {
        std::uint64_t acc = 0;
        int filled = 0;
        for (std::size_t i = 0; i < row_len; ++i) {
            const std::uint64_t v =
                static_cast<std::uint64_t>(a.indices[r * row_len + i] - 1);
            acc |= v << filled;
            filled += bits;
            while (filled >= 8) {
                out.push_back(static_cast<char>(acc & 0xFF));
                acc >>= 8;
                filled -= 8;
            }
        }
        if (filled > 0) out.push_back(static_cast<char>(acc & 0xFF)); // pad row to byte
    }
}

AssignmentTensor read_assignments(Reader& r, std::vector<std::size_t> shape, std::size_t K) {
    AssignmentTensor a;
    a.shape = std::move(shape);
    std::size_t total = 1;
    for (std::size_t d : a.shape) total *= d;
    a.indices.assign(total, 1);
    const int bits = index_bits(K);
    if (bits == 0) return a;
    if (bits > 32) throw IoError("model file: dictionary too large to unpack");
    const auto [rows, row_len] = row_layout(a.shape);
    for (std::size_t row = 0; row < rows; ++row) {
        std::uint64_t acc = 0;
        int avail = 0;
        for (std::size_t i = 0; i < row_len; ++i) {
            while (avail < bits) {
                acc |= static_cast<std::uint64_t>(r.u8()) << avail;
                avail += 8;
            }
            const std::uint64_t v = acc & ((std::uint64_t{1} << bits) - 1);
            acc >>= bits;
            avail -= bits;
            if (v >= K) throw IoError("model file: assignment index out of range");
            a.indices[row * row_len + i] = static_cast<std::int32_t>(v + 1);
        }
    }
    return a;
}

// --- constraint payloads ---------------------------------------------------

void put_constraint(std::string& out, const DictConstraint& c) {
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, constraint::Free>) {
                put_u8(out, 0);
            } else if constexpr (std::is_same_v<T, constraint::FixedValues>) {
                put_u8(out, 1);
                put_u32(out, static_cast<std::uint32_t>(v.values.size()));
                for (double x : v.values) put_f64(out, x);
            } else if constexpr (std::is_same_v<T, constraint::PowerOfTwo>) {
                put_u8(out, 2);
            } else if constexpr (std::is_same_v<T, constraint::ZeroPinnedFirst>) {
                put_u8(out, 3);
                put_f64(out, v.pruning_ratio);
                put_u8(out, v.pow2_values ? 1 : 0);
            } else {
                put_u8(out, 4);
                put_u32(out, static_cast<std::uint32_t>(v.n_bits));
                put_f64(out, v.delta);
            }
        },
        c);
}

DictConstraint read_constraint(Reader& r) {
    switch (r.u8()) {
    case 0: return constraint::Free{};
    case 1: {
        constraint::FixedValues f;
        const std::uint32_t n = r.u32();
        f.values.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) f.values.push_back(r.f64());
        return f;
    }
    case 2: return constraint::PowerOfTwo{};
    case 3: {
        constraint::ZeroPinnedFirst z;
        z.pruning_ratio = r.f64();
        z.pow2_values = r.u8() != 0;
        return z;
    }
    case 4: {
        constraint::UniformFixedPoint u;
        u.n_bits = static_cast<int>(r.u32());
        u.delta = r.f64();
        return u;
    }
    default: throw IoError("model file: unknown constraint tag");
    }
}

// --- quantizer state / act-quant sections ----------------------------------

void put_qstate(std::string& out, const QuantizedWeight& q) {
    put_u32(out, static_cast<std::uint32_t>(q.dict.size()));
    put_constraint(out, q.dict.constraint);
    for (double v : q.dict.values) put_f64(out, v);
    put_assignments(out, q.assign, q.dict.size());
}

QuantizedWeight read_qstate(Reader& r, std::vector<std::size_t> shape) {
    const std::uint32_t K = r.u32();
    if (K == 0) throw IoError("model file: empty dictionary");
    Dictionary dict;
    dict.constraint = read_constraint(r);
    dict.values.reserve(K);
    for (std::uint32_t k = 0; k < K; ++k) dict.values.push_back(r.f64());
    AssignmentTensor a = read_assignments(r, std::move(shape), K);
    return make_quantized(std::move(dict), std::move(a));
}

void put_act_quant(std::string& out, const ActQuantConfig& c) {
    put_u32(out, static_cast<std::uint32_t>(c.scheme));
    put_u32(out, static_cast<std::uint32_t>(c.n_bits));
    put_f64(out, c.range_r);
    put_u8(out, c.calibrated ? 1 : 0);
}

ActQuantConfig read_act_quant(Reader& r) {
    ActQuantConfig c;
    const std::uint32_t scheme = r.u32();
    if (scheme > 2) throw IoError("model file: unknown activation quantizer scheme");
    c.scheme = static_cast<ActQuantScheme>(scheme);
    c.n_bits = static_cast<int>(r.u32());
    c.range_r = r.f64();
    c.calibrated = r.u8() != 0;
    return c;
}

Activation read_activation(Reader& r) {
    const std::uint32_t a = r.u32();
    if (a > 2) throw IoError("model file: unknown activation");
    return static_cast<Activation>(a);
}

template <class L>
std::uint32_t section_flags(const L& layer, bool include_full) {
    std::uint32_t f = 0;
    if (include_full) f |= kHasFull;
    if (layer.qstate) f |= kHasQstate;
    if (layer.act_quant) f |= kHasActQuant;
    return f;
}

} // namespace

void save_model(const std::string& path, const Network& net, bool include_full_precision) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(net.layers.size()));
    put_u32(out, 0);

    for (const Layer& l : net.layers) {
        std::visit(
            [&](const auto& layer) {
                using T = std::decay_t<decltype(layer)>;
                if constexpr (std::is_same_v<T, AffineLayer>) {
                    put_u32(out, kKindAffine);
                    const std::uint32_t flags = section_flags(layer, include_full_precision);
                    put_u32(out, flags);
                    put_u32(out, static_cast<std::uint32_t>(layer.w_full.dim(0)));
                    put_u32(out, static_cast<std::uint32_t>(layer.w_full.dim(1)));
                    put_u32(out, static_cast<std::uint32_t>(layer.activation));
                    put_tensor(out, layer.bias);
                    if (flags & kHasFull) put_tensor(out, layer.w_full);
                    if (layer.qstate) put_qstate(out, *layer.qstate);
                    if (layer.act_quant) put_act_quant(out, *layer.act_quant);
                } else if constexpr (std::is_same_v<T, Conv2DLayer>) {
                    put_u32(out, kKindConv);
                    const std::uint32_t flags = section_flags(layer, include_full_precision);
                    put_u32(out, flags);
                    for (int d = 0; d < 4; ++d) {
                        put_u32(out, static_cast<std::uint32_t>(layer.w_full.dim(d)));
                    }
                    put_u32(out, static_cast<std::uint32_t>(layer.stride));
                    put_u32(out, static_cast<std::uint32_t>(layer.padding));
                    put_u32(out, static_cast<std::uint32_t>(layer.activation));
                    put_tensor(out, layer.bias);
                    if (flags & kHasFull) put_tensor(out, layer.w_full);
                    if (layer.qstate) put_qstate(out, *layer.qstate);
                    if (layer.act_quant) put_act_quant(out, *layer.act_quant);
                } else {
                    put_u32(out, kKindBn);
                    put_u32(out, 0);
                    put_u32(out, static_cast<std::uint32_t>(layer.gamma.dim(0)));
                    put_u32(out, static_cast<std::uint32_t>(layer.mode));
                    put_f64(out, layer.epsilon);
                    put_f64(out, layer.stat_momentum);
                    put_tensor(out, layer.gamma);
                    put_tensor(out, layer.beta);
                    put_tensor(out, layer.running_mean);
                    put_tensor(out, layer.running_var);
                }
            },
            l);
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot open '" + path + "' for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw IoError("short write to '" + path + "'");
}

Network load_model(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open model file '" + path + "'");
    std::string buf((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    Reader r{buf};

    r.need(4);
    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw IoError("model file: bad magic");
    r.pos = 4;
    if (r.u32() != kVersion) throw IoError("model file: unsupported version");
    const std::uint32_t n_layers = r.u32();
    r.u32(); // header flags

    Network net;
    for (std::uint32_t li = 0; li < n_layers; ++li) {
        const std::uint32_t kind = r.u32();
        const std::uint32_t flags = r.u32();
        if (kind == kKindAffine || kind == kKindConv) {
            std::vector<std::size_t> wshape;
            if (kind == kKindAffine) {
                const std::size_t O = r.u32(), I = r.u32();
                wshape = {O, I};
            } else {
                const std::size_t O = r.u32(), I = r.u32(), Fh = r.u32(), Fw = r.u32();
                wshape = {O, I, Fh, Fw};
            }
            std::size_t stride = 1, padding = 0;
            if (kind == kKindConv) {
                stride = r.u32();
                padding = r.u32();
            }
            const Activation act = read_activation(r);
            Tensor bias = r.tensor({wshape[0]});
            Tensor w_full = (flags & kHasFull) ? r.tensor(wshape) : Tensor(wshape);
            std::optional<QuantizedWeight> qstate;
            if (flags & kHasQstate) qstate = read_qstate(r, wshape);
            if (!(flags & kHasFull) && qstate) w_full = qstate->q;
            std::optional<ActQuantConfig> act_quant;
            if (flags & kHasActQuant) act_quant = read_act_quant(r);

            std::optional<QuantizerConfig> qcfg;
            if (qstate) {
                qcfg = QuantizerConfig{qstate->dict.size(), qstate->dict.constraint, 1};
            }
            if (kind == kKindAffine) {
                AffineLayer layer;
                layer.w_full = std::move(w_full);
                layer.bias = std::move(bias);
                layer.activation = act;
                layer.qcfg = std::move(qcfg);
                layer.qstate = std::move(qstate);
                layer.act_quant = act_quant;
                net.layers.emplace_back(std::move(layer));
            } else {
                Conv2DLayer layer;
                layer.w_full = std::move(w_full);
                layer.bias = std::move(bias);
                layer.stride = stride;
                layer.padding = padding;
                layer.activation = act;
                layer.qcfg = std::move(qcfg);
                layer.qstate = std::move(qstate);
                layer.act_quant = act_quant;
                net.layers.emplace_back(std::move(layer));
            }
        } else if (kind == kKindBn) {
            const std::size_t O = r.u32();
            const std::uint32_t mode = r.u32();
            if (mode > 1) throw IoError("model file: unknown batch norm mode");
            BatchNormLayer layer;
            layer.mode = static_cast<BnMode>(mode);
            layer.epsilon = r.f64();
            layer.stat_momentum = r.f64();
            layer.gamma = r.tensor({O});
            layer.beta = r.tensor({O});
            layer.running_mean = r.tensor({O});
            layer.running_var = r.tensor({O});
            net.layers.emplace_back(std::move(layer));
        } else {
            throw IoError("model file: unknown layer kind");
        }
    }
    if (r.pos != buf.size()) throw IoError("model file: trailing bytes");
    return net;
}

} // namespace lutq
