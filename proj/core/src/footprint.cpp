#include "lutq/footprint.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace lutq {

namespace {

std::pair<std::size_t, std::size_t> parse_dims(const std::string& v, const std::string& field) {
    // "32x32" or a single number applied to both axes
    const auto x = v.find('x');
    try {
        if (x == std::string::npos) {
            const std::size_t n = std::stoull(v);
            return {n, n};
        }
        return {std::stoull(v.substr(0, x)), std::stoull(v.substr(x + 1))};
    } catch (const std::exception&) {
        throw ConfigError("arch: bad value '" + v + "' for field '" + field + "'");
    }
}

std::size_t parse_size(const std::string& v, const std::string& field) {
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ConfigError("arch: bad value '" + v + "' for field '" + field + "'");
    }
}

} // namespace

QuantPlan parse_plan(const std::string& text) {
    if (text == "none" || text == "float") return {};
    const auto open = text.find('(');
    if (open != std::string::npos && text.back() == ')') {
        const std::string head = text.substr(0, open);
        const std::string arg = text.substr(open + 1, text.size() - open - 2);
        if (head == "lutq") {
            QuantPlan p;
            p.kind = QuantPlan::Kind::LutQ;
            p.k = parse_size(arg, "plan");
            if (p.k < 1) throw ConfigError("plan: lutq(K) needs K >= 1");
            return p;
        }
        if (head == "fp") {
            QuantPlan p;
            p.kind = QuantPlan::Kind::Fp;
            p.n_bits = static_cast<int>(parse_size(arg, "plan"));
            if (p.n_bits < 2) throw ConfigError("plan: fp(n) needs n >= 2");
            return p;
        }
    }
    throw ConfigError("plan: expected none|float|lutq(K)|fp(n), got '" + text + "'");
}

std::string plan_name(const QuantPlan& plan) {
    switch (plan.kind) {
    case QuantPlan::Kind::None: return "float";
    case QuantPlan::Kind::LutQ: return "lutq(" + std::to_string(plan.k) + ")";
    case QuantPlan::Kind::Fp: return "fp(" + std::to_string(plan.n_bits) + ")";
    }
    return "?";
}

std::size_t ArchLayer::weight_count() const {
    if (kind == ArchKind::Conv2D) return out_maps * in_maps * filt_h * filt_w;
    if (kind == ArchKind::Affine) return out_maps * in_maps;
    return 0;
}

ArchitectureSpec parse_arch(std::istream& in, const std::string& origin) {
    ArchitectureSpec arch;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream row(line);
        std::string head;
        if (!(row >> head)) continue;
        if (head == "name") {
            row >> arch.name;
            continue;
        }
        if (head != "layer") {
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected 'layer' or 'name', got '" + head + "'");
        }
        ArchLayer layer;
        bool have_kind = false;
        std::string tok;
        while (row >> tok) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": expected key=value, got '" + tok + "'");
            }
            const std::string key = tok.substr(0, eq);
            const std::string val = tok.substr(eq + 1);
            if (key == "kind") {
                have_kind = true;
                if (val == "conv2d") layer.kind = ArchKind::Conv2D;
                else if (val == "affine") layer.kind = ArchKind::Affine;
                else if (val == "bn") layer.kind = ArchKind::BatchNorm;
                else if (val == "pool") layer.kind = ArchKind::Pool;
                else if (val == "add") layer.kind = ArchKind::Add;
                else throw ConfigError(origin + ":" + std::to_string(lineno) +
                                       ": unknown layer kind '" + val + "'");
            } else if (key == "I") {
                layer.in_maps = parse_size(val, "I");
            } else if (key == "O") {
                layer.out_maps = parse_size(val, "O");
            } else if (key == "S") {
                std::tie(layer.map_h, layer.map_w) = parse_dims(val, "S");
            } else if (key == "F") {
                std::tie(layer.filt_h, layer.filt_w) = parse_dims(val, "F");
            } else if (key == "stride") {
                layer.stride = parse_size(val, "stride");
            } else if (key == "act_bits") {
                layer.act_bits = static_cast<int>(parse_size(val, "act_bits"));
            } else if (key == "bias") {
                layer.bias = parse_size(val, "bias") != 0;
            } else if (key == "plan") {
                layer.plan = parse_plan(val);
            } else if (key == "mode") {
                if (val == "traditional") layer.bn_mode = BnMode::Traditional;
                else if (val == "multiplier_less") layer.bn_mode = BnMode::MultiplierLess;
                else throw ConfigError(origin + ":" + std::to_string(lineno) +
                                       ": unknown bn mode '" + val + "'");
            } else if (key == "pool") {
                if (val == "max") layer.pool = PoolKind::Max;
                else if (val == "avg") layer.pool = PoolKind::Avg;
                else throw ConfigError(origin + ":" + std::to_string(lineno) +
                                       ": unknown pool kind '" + val + "'");
            } else {
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown field '" +
                                  key + "'");
            }
        }
        if (!have_kind) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": layer without kind");
        }
        if (layer.stride < 1) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": stride must be >= 1");
        }
        arch.layers.push_back(layer);
    }
    validate_arch(arch);
    return arch;
}

ArchitectureSpec load_arch(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("arch: cannot open '" + path + "'");
    return parse_arch(in, path);
}

void validate_arch(const ArchitectureSpec& arch) {
    if (arch.layers.empty()) throw ConfigError("arch: no layers");
    // Main-path shape, plus the shape at the last join point (network input,
    // pool output or residual add) which shortcut branches chain from.
    struct Shape {
        std::size_t maps = 0, h = 0, w = 0;
        bool set = false;
        bool matches(std::size_t m, std::size_t hh, std::size_t ww) const {
            return set && maps == m && h == hh && w == ww;
        }
    };
    Shape cur, join;
    for (std::size_t li = 0; li < arch.layers.size(); ++li) {
        const ArchLayer& L = arch.layers[li];
        const std::string at = "arch: layer " + std::to_string(li);
        switch (L.kind) {
        case ArchKind::Conv2D: {
            if (L.in_maps == 0 || L.out_maps == 0) throw ConfigError(at + ": conv needs I and O");
            const std::size_t in_h = L.map_h * L.stride, in_w = L.map_w * L.stride;
            if (cur.set && !cur.matches(L.in_maps, in_h, in_w) &&
                !join.matches(L.in_maps, in_h, in_w)) {
                throw ConfigError(at + ": conv input chains with neither the previous layer "
                                       "nor the last join point");
            }
            cur = {L.out_maps, L.map_h, L.map_w, true};
            break;
        }
        case ArchKind::Affine: {
            if (L.in_maps == 0 || L.out_maps == 0) throw ConfigError(at + ": affine needs I and O");
            if (cur.set && cur.maps * cur.h * cur.w != L.in_maps &&
                !(join.set && join.maps * join.h * join.w == L.in_maps)) {
                throw ConfigError(at + ": affine input width does not chain");
            }
            cur = {L.out_maps, 1, 1, true};
            break;
        }
        case ArchKind::BatchNorm: {
            if (L.out_maps == 0) throw ConfigError(at + ": bn needs O");
            if (cur.set && cur.maps != L.out_maps) throw ConfigError(at + ": bn width mismatch");
            break;
        }
        case ArchKind::Pool: {
            if (L.out_maps == 0) throw ConfigError(at + ": pool needs O");
            if (cur.set && cur.maps != L.out_maps) throw ConfigError(at + ": pool keeps map count");
            if (cur.set && cur.h != L.map_h * L.stride) {
                throw ConfigError(at + ": pool input size does not chain");
            }
            cur = {L.out_maps, L.map_h, L.map_w, true};
            join = cur;
            break;
        }
        case ArchKind::Add: {
            if (L.out_maps == 0) throw ConfigError(at + ": add needs O");
            if (cur.set && !cur.matches(L.out_maps, L.map_h, L.map_w)) {
                throw ConfigError(at + ": add shape mismatch");
            }
            cur = {L.out_maps, L.map_h, L.map_w, true};
            join = cur;
            break;
        }
        }
        if (!join.set && cur.set) join = cur; // stem established the first shape
    }
}

void apply_plan(ArchitectureSpec& arch, const QuantPlan& plan) {
    for (ArchLayer& L : arch.layers) {
        if (L.kind == ArchKind::Conv2D || L.kind == ArchKind::Affine) L.plan = plan;
    }
}

std::vector<std::uint64_t> param_memory(const ArchitectureSpec& arch) {
    std::vector<std::uint64_t> bits;
    bits.reserve(arch.layers.size());
    for (const ArchLayer& L : arch.layers) {
        std::uint64_t b = 0;
        const std::uint64_t n = L.weight_count();
        if (n > 0) {
            switch (L.plan.kind) {
            case QuantPlan::Kind::None: b = n * 32; break;
            case QuantPlan::Kind::LutQ:
                b = static_cast<std::uint64_t>(L.plan.k) * 32 +
                    n * static_cast<std::uint64_t>(index_bits(L.plan.k));
                break;
            case QuantPlan::Kind::Fp:
                b = n * static_cast<std::uint64_t>(L.plan.n_bits) + 32; // weights + step size
                break;
            }
            if (L.bias) b += static_cast<std::uint64_t>(L.out_maps) * 32;
        } else if (L.kind == ArchKind::BatchNorm) {
            b = static_cast<std::uint64_t>(L.out_maps) * 2 * 32; // folded scale + offset
        }
        bits.push_back(b);
    }
    return bits;
}

std::uint64_t buffer_memory(const ArchitectureSpec& arch) {
    std::uint64_t best = 0;
    for (const ArchLayer& L : arch.layers) {
        if (L.kind != ArchKind::Conv2D && L.kind != ArchKind::Affine) continue;
        std::uint64_t in_elems, out_elems;
        if (L.kind == ArchKind::Conv2D) {
            in_elems = static_cast<std::uint64_t>(L.in_maps) * (L.map_h * L.stride) *
                       (L.map_w * L.stride);
            out_elems = static_cast<std::uint64_t>(L.out_maps) * L.map_h * L.map_w;
        } else {
            in_elems = L.in_maps;
            out_elems = L.out_maps;
        }
        best = std::max(best, (in_elems + out_elems) * static_cast<std::uint64_t>(L.act_bits));
    }
    return best;
}

std::vector<OpsCount> count_ops(const ArchitectureSpec& arch) {
    std::vector<OpsCount> ops;
    ops.reserve(arch.layers.size());
    for (const ArchLayer& L : arch.layers) {
        OpsCount c;
        const std::uint64_t s = static_cast<std::uint64_t>(L.map_h) * L.map_w;
        switch (L.kind) {
        case ArchKind::Conv2D:
        case ArchKind::Affine: {
            const std::uint64_t fan_in =
                static_cast<std::uint64_t>(L.in_maps) * L.filt_h * L.filt_w;
            const std::uint64_t macs = static_cast<std::uint64_t>(L.out_maps) * s * fan_in;
            c.adds = macs; // one accumulation per MAC, bias folded in
            if (L.plan.kind == QuantPlan::Kind::LutQ) {
                // Grouped evaluation is used only where it wins.
                c.mults = static_cast<std::uint64_t>(L.out_maps) * s *
                          std::min<std::uint64_t>(L.plan.k, fan_in);
            } else {
                c.mults = macs;
            }
            break;
        }
        case ArchKind::BatchNorm: {
            // Folded scale/offset preparation per channel.
            const std::uint64_t channels = L.out_maps;
            c.adds = 2 * channels;
            c.mults = (L.bn_mode == BnMode::Traditional) ? 2 * channels : 0;
            break;
        }
        case ArchKind::Add: {
            c.adds = static_cast<std::uint64_t>(L.out_maps) * s;
            break;
        }
        case ArchKind::Pool: {
            if (L.pool == PoolKind::Avg) {
                c.adds = static_cast<std::uint64_t>(L.out_maps) * s * L.filt_h * L.filt_w;
            }
            break;
        }
        }
        ops.push_back(c);
    }
    return ops;
}

double FootprintReport::param_mb() const {
    return static_cast<double>(total_param_bits) / 8.0 / kBytesPerMb;
}

double FootprintReport::buffer_mb() const {
    return static_cast<double>(buffer_bits) / 8.0 / kBytesPerMb;
}

FootprintReport footprint(const ArchitectureSpec& arch) {
    validate_arch(arch);
    FootprintReport report;
    report.arch_name = arch.name;
    for (const ArchLayer& L : arch.layers) {
        if (L.kind == ArchKind::Conv2D || L.kind == ArchKind::Affine) {
            report.plan = plan_name(L.plan);
            break;
        }
    }
    const std::vector<std::uint64_t> params = param_memory(arch);
    const std::vector<OpsCount> ops = count_ops(arch);
    report.layers.resize(arch.layers.size());
    for (std::size_t li = 0; li < arch.layers.size(); ++li) {
        const ArchLayer& L = arch.layers[li];
        LayerFootprint& f = report.layers[li];
        f.kind = L.kind;
        f.param_bits = params[li];
        f.ops = ops[li];
        if (L.kind == ArchKind::Conv2D || L.kind == ArchKind::Affine) {
            std::uint64_t in_elems, out_elems;
            if (L.kind == ArchKind::Conv2D) {
                in_elems = static_cast<std::uint64_t>(L.in_maps) * (L.map_h * L.stride) *
                           (L.map_w * L.stride);
                out_elems = static_cast<std::uint64_t>(L.out_maps) * L.map_h * L.map_w;
            } else {
                in_elems = L.in_maps;
                out_elems = L.out_maps;
            }
            f.buffer_bits = (in_elems + out_elems) * static_cast<std::uint64_t>(L.act_bits);
        }
        report.total_param_bits += f.param_bits;
        report.total_ops.adds += f.ops.adds;
        report.total_ops.mults += f.ops.mults;
    }
    report.buffer_bits = buffer_memory(arch);
    return report;
}

const char* kind_name(ArchKind k) {
    switch (k) {
    case ArchKind::Conv2D: return "conv2d";
    case ArchKind::Affine: return "affine";
    case ArchKind::BatchNorm: return "bn";
    case ArchKind::Pool: return "pool";
    case ArchKind::Add: return "add";
    }
    return "?";
}

void print_report(std::ostream& out, const FootprintReport& report) {
    out << "# adds count one accumulation per multiply-accumulate (bias included);\n"
        << "# MB means 2^20 bytes; buffer is the largest conv/affine in+out footprint\n";
    out << "arch " << report.arch_name << "\n";
    out << "plan " << report.plan << "\n";
    out << "layers " << report.layers.size() << "\n";
    for (std::size_t li = 0; li < report.layers.size(); ++li) {
        const LayerFootprint& f = report.layers[li];
        out << "layer " << li << " kind=" << kind_name(f.kind)
            << " param_bits=" << f.param_bits << " buffer_bits=" << f.buffer_bits
            << " adds=" << f.ops.adds << " mults=" << f.ops.mults << "\n";
    }
    out << "total_param_bits " << report.total_param_bits << "\n";
    out << "buffer_bits " << report.buffer_bits << "\n";
    out << "total_adds " << report.total_ops.adds << "\n";
    out << "total_mults " << report.total_ops.mults << "\n";
    std::ostringstream mb;
    mb << std::fixed << std::setprecision(6) << report.param_mb() << " " << report.buffer_mb();
    out << "param_mb buffer_mb " << mb.str() << "\n";
}

void print_table(std::ostream& out, const FootprintReport& report) {
    out << std::left << std::setw(14) << "Net" << std::setw(12) << "Quant."
        << std::right << std::setw(14) << "Param. (MB)" << std::setw(14) << "Buffer (MB)"
        << std::setw(12) << "Add. (M)" << std::setw(12) << "Mul. (M)" << "\n";
    out << std::string(78, '-') << "\n";
    out << std::left << std::setw(14) << report.arch_name << std::setw(12) << report.plan
        << std::right << std::fixed << std::setprecision(2) << std::setw(14)
        << report.param_mb() << std::setw(14) << report.buffer_mb() << std::setw(12)
        << static_cast<double>(report.total_ops.adds) / 1e6 << std::setw(12)
        << static_cast<double>(report.total_ops.mults) / 1e6 << "\n";
}

} // namespace lutq
