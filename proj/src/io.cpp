#include "noctr/io.hpp"

#include "noctr/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace noctr {

namespace {

using json = nlohmann::ordered_json;

void write_bytes(std::ofstream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void write_u32_le(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    write_bytes(out, b, 4);
}

void write_u64_le(std::ofstream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    write_bytes(out, b, 8);
}

void write_f32_le(std::ofstream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32_le(out, bits);
}

void write_f64_le(std::ofstream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64_le(out, bits);
}

/// Byte reader tracking its offset so format errors can name the fault
/// position.
class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw std::runtime_error("cannot open file: " + path);
    }

    std::size_t offset() const { return offset_; }

    void read(void* dst, std::size_t n, const char* what) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw FormatError(std::string("truncated payload reading ") + what, offset_);
        }
        offset_ += n;
    }

    std::uint8_t read_u8(const char* what) {
        std::uint8_t v;
        read(&v, 1, what);
        return v;
    }

    std::uint32_t read_u32_le(const char* what) {
        unsigned char b[4];
        read(b, 4, what);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    std::uint64_t read_u64_le(const char* what) {
        std::uint64_t v = 0;
        unsigned char b[8];
        read(b, 8, what);
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }

    float read_f32_le(const char* what) {
        std::uint32_t bits = read_u32_le(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    double read_f64_le(const char* what) {
        std::uint64_t bits = read_u64_le(what);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

private:
    std::ifstream in_;
    std::size_t offset_ = 0;
};

constexpr char kGridMagic[5] = {'N', 'O', 'C', 'T', '1'};
constexpr char kCheckpointMagic[5] = {'N', 'O', 'C', 'K', '1'};
constexpr std::size_t kMaxElements = std::size_t{1} << 31;

}  // namespace

DenseTensor load_grid(const std::string& path) {
    Reader r(path);
    char magic[5];
    r.read(magic, 5, "magic");
    if (std::memcmp(magic, kGridMagic, 5) != 0) {
        throw FormatError("bad magic, expected NOCT1", 0);
    }
    const int order = r.read_u8("order");
    if (order < 1) throw FormatError("tensor order must be >= 1", 5);

    std::vector<int> shape(static_cast<std::size_t>(order));
    std::size_t total = 1;
    for (int k = 0; k < order; ++k) {
        const std::size_t dim_offset = r.offset();
        const std::uint32_t d = r.read_u32_le("dimension");
        if (d == 0) throw FormatError("zero dimension", dim_offset);
        shape[static_cast<std::size_t>(k)] = static_cast<int>(d);
        total *= d;
        if (total > kMaxElements) throw FormatError("dimension overflow", dim_offset);
    }

    std::vector<double> data(total);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < total; ++i) {
        const std::size_t value_offset = r.offset();
        const double v = static_cast<double>(r.read_f32_le("values"));
        if (!std::isfinite(v)) throw FormatError("non-finite value", value_offset);
        data[i] = v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }

    DenseTensor t(shape, std::move(data));
    if (lo < 0.0 || hi > 1.0) {
        t.value_range = std::make_pair(lo, hi);
        const double span = hi - lo;
        for (double& v : t.data) v = span == 0.0 ? 0.0 : (v - lo) / span;
    }
    return t;
}

void save_grid(const DenseTensor& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open file for write: " + path);
    write_bytes(out, kGridMagic, 5);
    const std::uint8_t order = static_cast<std::uint8_t>(t.order());
    write_bytes(out, &order, 1);
    for (int d : t.shape) write_u32_le(out, static_cast<std::uint32_t>(d));
    for (double v : t.data) write_f32_le(out, static_cast<float>(v));
    if (!out) throw std::runtime_error("write failure: " + path);
}

ObservationSet load_point_cloud(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);

    std::vector<std::array<double, 6>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        // Optional header row.
        if (line_no == 1 && line.find_first_not_of("xyzrgb, \t\r") == std::string::npos) continue;
        std::array<double, 6> row{};
        std::stringstream ss(line);
        std::string cell;
        int col = 0;
        while (std::getline(ss, cell, ',')) {
            if (col >= 6) break;
            try {
                std::size_t used = 0;
                row[static_cast<std::size_t>(col)] = std::stod(cell, &used);
                while (used < cell.size() &&
                       (cell[used] == ' ' || cell[used] == '\t' || cell[used] == '\r')) {
                    ++used;
                }
                if (used != cell.size()) throw std::invalid_argument("trailing characters");
            } catch (const std::exception&) {
                throw std::runtime_error("malformed point cloud row at line " +
                                         std::to_string(line_no));
            }
            ++col;
        }
        if (col != 6) {
            throw std::runtime_error("expected 6 columns (x,y,z,r,g,b) at line " +
                                     std::to_string(line_no));
        }
        rows.push_back(row);
    }
    if (rows.empty()) throw std::runtime_error("point cloud file has no data rows");

    // Normalize spatial axes independently; colors jointly.
    for (int axis = 0; axis < 3; ++axis) {
        double lo = rows[0][static_cast<std::size_t>(axis)], hi = lo;
        for (const auto& r : rows) {
            lo = std::min(lo, r[static_cast<std::size_t>(axis)]);
            hi = std::max(hi, r[static_cast<std::size_t>(axis)]);
        }
        for (auto& r : rows) {
            r[static_cast<std::size_t>(axis)] =
                hi == lo ? 0.0 : (r[static_cast<std::size_t>(axis)] - lo) / (hi - lo);
        }
    }
    double clo = rows[0][3], chi = clo;
    for (const auto& r : rows) {
        for (int c = 3; c < 6; ++c) {
            clo = std::min(clo, r[static_cast<std::size_t>(c)]);
            chi = std::max(chi, r[static_cast<std::size_t>(c)]);
        }
    }
    if (clo < 0.0 || chi > 1.0) {
        for (auto& r : rows) {
            for (int c = 3; c < 6; ++c) {
                r[static_cast<std::size_t>(c)] =
                    chi == clo ? 0.0 : (r[static_cast<std::size_t>(c)] - clo) / (chi - clo);
            }
        }
    }

    // Each point expands into three observations with channel coordinate
    // c in {0, 1/2, 1}.
    Mat pts(static_cast<Eigen::Index>(rows.size()) * 3, 4);
    std::vector<double> values(rows.size() * 3);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            const Eigen::Index q = static_cast<Eigen::Index>(i * 3 + static_cast<std::size_t>(c));
            pts(q, 0) = rows[i][0];
            pts(q, 1) = rows[i][1];
            pts(q, 2) = rows[i][2];
            pts(q, 3) = c * 0.5;
            values[static_cast<std::size_t>(q)] = rows[i][static_cast<std::size_t>(3 + c)];
        }
    }
    return ObservationSet(CoordinateSet(4, std::move(pts)), std::move(values));
}

SynthKind synth_kind_from_name(const std::string& name) {
    if (name == "smooth-separable") return SynthKind::SmoothSeparable;
    if (name == "smooth-nonseparable") return SynthKind::SmoothNonseparable;
    if (name == "piecewise") return SynthKind::Piecewise;
    throw std::invalid_argument("unknown synth kind: " + name);
}

std::string synth_kind_name(SynthKind kind) {
    switch (kind) {
    case SynthKind::SmoothSeparable: return "smooth-separable";
    case SynthKind::SmoothNonseparable: return "smooth-nonseparable";
    case SynthKind::Piecewise: return "piecewise";
    }
    return "?";
}

DenseTensor synth(SynthKind kind, const std::vector<int>& shape, std::uint64_t seed) {
    const int order = static_cast<int>(shape.size());
    DenseTensor t = DenseTensor::zeros(shape);
    CoordinateSet grid = coordinate_grid(shape);
    Rng rng(Rng::derive(seed, synth_kind_name(kind)));

    constexpr int kTerms = 3;
    // Per-term, per-mode frequencies and phases. Leading (spatial) modes
    // stay low-frequency; for order >= 3 the trailing mode plays the
    // spectral/temporal role and varies faster, mirroring the band
    // structure of the grid datasets these tensors stand in for.
    const bool banded = order >= 3;
    std::vector<std::vector<double>> freq(kTerms), phase(kTerms);
    std::vector<double> amp(kTerms);
    for (int r = 0; r < kTerms; ++r) {
        amp[static_cast<std::size_t>(r)] = rng.uniform(0.5, 1.0);
        for (int n = 0; n < order; ++n) {
            const bool fast = banded && n == order - 1;
            freq[static_cast<std::size_t>(r)].push_back(
                fast ? 2.0 + rng.uniform_below(5) : 1.0 + rng.uniform_below(2));
            phase[static_cast<std::size_t>(r)].push_back(rng.uniform(0.0, 2.0 * M_PI));
        }
    }
    // Traveling-wave direction for the nonseparable cross term.
    std::vector<double> wave(static_cast<std::size_t>(order));
    for (int n = 0; n < order; ++n) {
        const bool fast = banded && n == order - 1;
        wave[static_cast<std::size_t>(n)] = fast ? rng.uniform(2.0, 4.0) : rng.uniform(0.3, 0.8);
    }
    const double wave_phase = rng.uniform(0.0, 2.0 * M_PI);
    std::vector<double> step_w(static_cast<std::size_t>(order));
    double step_norm = 0.0;
    for (int n = 0; n < order; ++n) {
        step_w[static_cast<std::size_t>(n)] = rng.uniform(0.2, 1.0);
        step_norm += step_w[static_cast<std::size_t>(n)];
    }

    for (std::size_t i = 0; i < t.size(); ++i) {
        double v = 0.0;
        if (kind == SynthKind::SmoothSeparable) {
            // Single separable product.
            double prod = 1.0;
            for (int n = 0; n < order; ++n) {
                prod *= std::sin(M_PI * freq[0][static_cast<std::size_t>(n)] *
                                     grid.points(static_cast<Eigen::Index>(i), n) +
                                 phase[0][static_cast<std::size_t>(n)]);
            }
            v = prod;
        } else {
            for (int r = 0; r < kTerms; ++r) {
                double prod = amp[static_cast<std::size_t>(r)];
                for (int n = 0; n < order; ++n) {
                    prod *= std::sin(M_PI * freq[static_cast<std::size_t>(r)][static_cast<std::size_t>(n)] *
                                         grid.points(static_cast<Eigen::Index>(i), n) +
                                     phase[static_cast<std::size_t>(r)][static_cast<std::size_t>(n)]);
                }
                v += prod;
            }
            double dot = wave_phase;
            for (int n = 0; n < order; ++n) {
                dot += 2.0 * M_PI * wave[static_cast<std::size_t>(n)] *
                       grid.points(static_cast<Eigen::Index>(i), n);
            }
            v += 0.5 * std::sin(dot);
            if (kind == SynthKind::Piecewise) {
                double s = 0.0;
                for (int n = 0; n < order; ++n) {
                    s += step_w[static_cast<std::size_t>(n)] *
                         grid.points(static_cast<Eigen::Index>(i), n);
                }
                v += s > 0.5 * step_norm ? 1.0 : 0.0;
            }
        }
        t.data[i] = v;
    }

    double lo = t.data[0], hi = t.data[0];
    for (double v : t.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (double& v : t.data) v = hi == lo ? 0.5 : (v - lo) / (hi - lo);
    return t;
}

void export_ppm(const DenseTensor& slice, const std::string& path) {
    const bool rgb = slice.order() == 3 && slice.shape[2] == 3;
    if (!(slice.order() == 2 || rgb)) {
        throw std::invalid_argument("export_ppm: slice must be 2-D or 2-D x 3");
    }
    const int h = slice.shape[0];
    const int w = slice.shape[1];
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open file for write: " + path);
    out << "P3\n" << w << " " << h << "\n255\n";
    auto quant = [](double v) {
        const int q = static_cast<int>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
        return std::min(q, 255);
    };
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            if (rgb) {
                out << quant(slice.at({i, j, 0})) << " " << quant(slice.at({i, j, 1})) << " "
                    << quant(slice.at({i, j, 2}));
            } else {
                const int g = quant(slice.at({i, j}));
                out << g << " " << g << " " << g;
            }
            out << (j + 1 == w ? "\n" : " ");
        }
    }
    if (!out) throw std::runtime_error("write failure: " + path);
}

namespace {

json net_descriptor(const NetParams& net) {
    json layers = json::array();
    for (const Layer& l : net.layers) {
        json jl;
        jl["in"] = l.weight.cols();
        jl["out"] = l.weight.rows();
        switch (l.act.kind) {
        case Activation::Kind::Sine:
            jl["act"] = "sine";
            jl["omega0"] = l.act.omega0;
            break;
        case Activation::Kind::Relu: jl["act"] = "relu"; break;
        case Activation::Kind::Tanh: jl["act"] = "tanh"; break;
        case Activation::Kind::None: jl["act"] = "none"; break;
        }
        layers.push_back(jl);
    }
    return json{{"layers", layers}};
}

NetParams net_from_descriptor(const json& j) {
    std::vector<Layer> layers;
    for (const auto& jl : j.at("layers")) {
        Layer l;
        l.weight = Mat::Zero(jl.at("out").get<int>(), jl.at("in").get<int>());
        l.bias = Mat::Zero(1, jl.at("out").get<int>());
        const std::string act = jl.at("act").get<std::string>();
        if (act == "sine") {
            l.act = Activation::sine(jl.at("omega0").get<double>());
        } else if (act == "relu") {
            l.act = Activation::relu();
        } else if (act == "tanh") {
            l.act = Activation::tanh();
        } else {
            l.act = Activation::none();
        }
        layers.push_back(std::move(l));
    }
    return NetParams(std::move(layers));
}

void write_net_params(std::ofstream& out, const NetParams& net) {
    for (const Layer& l : net.layers) {
        for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
            for (Eigen::Index j = 0; j < l.weight.cols(); ++j) write_f64_le(out, l.weight(i, j));
        }
        for (Eigen::Index j = 0; j < l.bias.cols(); ++j) write_f64_le(out, l.bias(0, j));
    }
}

void read_net_params(Reader& r, NetParams& net) {
    for (Layer& l : net.layers) {
        for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
            for (Eigen::Index j = 0; j < l.weight.cols(); ++j) {
                l.weight(i, j) = r.read_f64_le("weights");
            }
        }
        for (Eigen::Index j = 0; j < l.bias.cols(); ++j) l.bias(0, j) = r.read_f64_le("bias");
    }
}

}  // namespace

void save_checkpoint(const CtrModel& model, const std::string& path) {
    model.validate();
    json desc;
    desc["dims"] = model.dims;
    desc["core"] = net_descriptor(model.core);
    if (model.core_encoding) {
        desc["core_encoding"] = {{"frequencies", model.core_encoding->num_frequencies},
                                 {"include_input", model.core_encoding->include_input}};
    } else {
        desc["core_encoding"] = nullptr;
    }
    json ops = json::array();
    for (const auto& op : model.operators) {
        json jo;
        switch (op.kind) {
        case ModeOperatorSpec::Kind::Identity:
            jo["kind"] = "identity";
            break;
        case ModeOperatorSpec::Kind::DiscreteLinear:
            jo["kind"] = "discrete_linear";
            if (op.generator) {
                jo["generator"] = net_descriptor(*op.generator);
                jo["generator_rows"] = op.generator_rows;
            } else {
                jo["rows"] = op.matrix.rows();
                jo["cols"] = op.matrix.cols();
            }
            break;
        case ModeOperatorSpec::Kind::DeepONet:
            jo["kind"] = "deeponet";
            jo["sensors"] = op.sensors;
            jo["width"] = op.width;
            jo["branch"] = net_descriptor(*op.branch);
            jo["trunk"] = net_descriptor(*op.trunk);
            break;
        }
        ops.push_back(jo);
    }
    desc["operators"] = ops;
    const std::string header = desc.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open file for write: " + path);
    write_bytes(out, kCheckpointMagic, 5);
    write_u32_le(out, 1);
    write_u64_le(out, header.size());
    write_bytes(out, header.data(), header.size());

    write_net_params(out, model.core);
    for (const auto& op : model.operators) {
        switch (op.kind) {
        case ModeOperatorSpec::Kind::Identity:
            break;
        case ModeOperatorSpec::Kind::DiscreteLinear:
            if (op.generator) {
                write_net_params(out, *op.generator);
            } else {
                for (Eigen::Index i = 0; i < op.matrix.rows(); ++i) {
                    for (Eigen::Index j = 0; j < op.matrix.cols(); ++j) {
                        write_f64_le(out, op.matrix(i, j));
                    }
                }
            }
            break;
        case ModeOperatorSpec::Kind::DeepONet:
            write_net_params(out, *op.branch);
            write_net_params(out, *op.trunk);
            break;
        }
    }
    if (!out) throw std::runtime_error("write failure: " + path);
}

CtrModel load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[5];
    r.read(magic, 5, "magic");
    if (std::memcmp(magic, kCheckpointMagic, 5) != 0) {
        throw FormatError("bad magic, expected NOCK1", 0);
    }
    const std::uint32_t version = r.read_u32_le("version");
    if (version != 1) throw FormatError("unsupported checkpoint version", 5);
    const std::uint64_t header_len = r.read_u64_le("header length");
    if (header_len > (1u << 24)) throw FormatError("oversized header", 9);
    std::string header(header_len, '\0');
    r.read(header.data(), header_len, "header");

    json desc;
    try {
        desc = json::parse(header);
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad topology descriptor: ") + e.what(), 17);
    }

    CtrModel model;
    model.dims = desc.at("dims").get<int>();
    model.core = net_from_descriptor(desc.at("core"));
    if (!desc.at("core_encoding").is_null()) {
        PosEncoding enc;
        enc.num_frequencies = desc["core_encoding"].at("frequencies").get<int>();
        enc.include_input = desc["core_encoding"].at("include_input").get<bool>();
        model.core_encoding = enc;
    }
    int mode = 0;
    for (const auto& jo : desc.at("operators")) {
        ++mode;
        const std::string kind = jo.at("kind").get<std::string>();
        if (kind == "identity") {
            model.operators.push_back(ModeOperatorSpec::identity(mode));
        } else if (kind == "discrete_linear") {
            ModeOperatorSpec op;
            op.kind = ModeOperatorSpec::Kind::DiscreteLinear;
            op.mode = mode;
            if (jo.contains("generator")) {
                op.generator = net_from_descriptor(jo.at("generator"));
                op.generator_rows = jo.at("generator_rows").get<int>();
            } else {
                op.matrix = Mat::Zero(jo.at("rows").get<int>(), jo.at("cols").get<int>());
            }
            model.operators.push_back(std::move(op));
        } else if (kind == "deeponet") {
            ModeOperatorSpec op;
            op.kind = ModeOperatorSpec::Kind::DeepONet;
            op.mode = mode;
            op.sensors = jo.at("sensors").get<std::vector<double>>();
            op.width = jo.at("width").get<int>();
            op.branch = net_from_descriptor(jo.at("branch"));
            op.trunk = net_from_descriptor(jo.at("trunk"));
            model.operators.push_back(std::move(op));
        } else {
            throw FormatError("unknown operator kind: " + kind, 17);
        }
    }

    read_net_params(r, model.core);
    for (auto& op : model.operators) {
        switch (op.kind) {
        case ModeOperatorSpec::Kind::Identity:
            break;
        case ModeOperatorSpec::Kind::DiscreteLinear:
            if (op.generator) {
                read_net_params(r, *op.generator);
            } else {
                for (Eigen::Index i = 0; i < op.matrix.rows(); ++i) {
                    for (Eigen::Index j = 0; j < op.matrix.cols(); ++j) {
                        op.matrix(i, j) = r.read_f64_le("matrix");
                    }
                }
            }
            break;
        case ModeOperatorSpec::Kind::DeepONet:
            read_net_params(r, *op.branch);
            read_net_params(r, *op.trunk);
            break;
        }
    }
    model.validate();
    return model;
}

}  // namespace noctr
