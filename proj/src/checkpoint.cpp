#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "ldc/ldcnet.hpp"

namespace ldc {

namespace {

constexpr char kMagic[4] = {'L', 'D', 'C', 'N'};

template <class T>
void put_le(std::ostream& os, T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    U bits = std::bit_cast<U>(value);
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffu);
    os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <class T>
T get_le(std::istream& is) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    unsigned char buf[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw FormatError("checkpoint truncated");
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(buf[i]) << (8 * i);
    return std::bit_cast<T>(bits);
}

struct Record {
    Shape shape;
    std::vector<double> values;
};

void write_record(std::ostream& os, const std::string& name, const Shape& shape, std::span<const double> values) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::int64_t>(os, shape.n);
    put_le<std::int64_t>(os, shape.c);
    put_le<std::int64_t>(os, shape.h);
    put_le<std::int64_t>(os, shape.w);
    for (double v : values) put_le<double>(os, v);
}

std::vector<std::pair<std::string, double>> meta_of(const NetConfig& c) {
    std::vector<std::pair<std::string, double>> meta{
        {"meta.ricd.k_large", c.ricd.k_large},
        {"meta.ricd.k_small", c.ricd.k_small},
        {"meta.ricd.steps", c.ricd.steps},
        {"meta.ricd.hidden_channels", c.ricd.hidden_channels},
        {"meta.center_mode", c.center_mode == CenterMode::literal ? 1.0 : 0.0},
        {"meta.use_ricd", c.use_ricd ? 1.0 : 0.0},
        {"meta.use_iaicd", c.use_iaicd ? 1.0 : 0.0},
        {"meta.first_stride", c.first_stride},
        {"meta.depth_scale", c.depth_scale},
        {"meta.min_depth", c.min_depth},
        {"meta.illumination_floor", c.illumination_floor},
    };
    for (int s = 0; s < kScales; ++s) meta.emplace_back("meta.width." + std::to_string(s), c.widths[s]);
    return meta;
}

}  // namespace

void save_checkpoint(const ModelParams& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint " + path);
    const auto meta = meta_of(model.config);
    os.write(kMagic, 4);
    put_le<std::uint8_t>(os, kCheckpointVersion);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(meta.size() + model.params.size() + model.buffers.size()));
    for (const auto& [name, v] : meta) {
        const double one[1] = {v};
        write_record(os, name, Shape{1, 1, 1, 1}, one);
    }
    for (const auto& [name, t] : model.params.entries()) write_record(os, name, t.shape(), t.data());
    for (const auto& [name, t] : model.buffers.entries()) write_record(os, name, t.shape(), t.data());
    if (!os) throw IoError("failed while writing checkpoint " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a checkpoint: " + path);
    const auto version = get_le<std::uint8_t>(is);
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const auto count = get_le<std::uint32_t>(is);

    std::map<std::string, Record> records;
    for (std::uint32_t r = 0; r < count; ++r) {
        const auto len = get_le<std::uint32_t>(is);
        if (len > 4096) throw FormatError("implausible record name length");
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) throw FormatError("checkpoint truncated");
        Record rec;
        rec.shape.n = get_le<std::int64_t>(is);
        rec.shape.c = get_le<std::int64_t>(is);
        rec.shape.h = get_le<std::int64_t>(is);
        rec.shape.w = get_le<std::int64_t>(is);
        if (rec.shape.n < 0 || rec.shape.c < 0 || rec.shape.h < 0 || rec.shape.w < 0 ||
            rec.shape.numel() > (std::int64_t{1} << 28)) {
            throw FormatError("bad shape for record " + name);
        }
        rec.values.resize(static_cast<std::size_t>(rec.shape.numel()));
        for (double& v : rec.values) v = get_le<double>(is);
        records.emplace(std::move(name), std::move(rec));
    }

    auto meta = [&](const std::string& key) {
        auto it = records.find(key);
        if (it == records.end() || it->second.values.size() != 1) throw FormatError("checkpoint lacks " + key);
        return it->second.values[0];
    };
    NetConfig cfg;
    cfg.ricd.k_large = static_cast<int>(meta("meta.ricd.k_large"));
    cfg.ricd.k_small = static_cast<int>(meta("meta.ricd.k_small"));
    cfg.ricd.steps = static_cast<int>(meta("meta.ricd.steps"));
    cfg.ricd.hidden_channels = static_cast<int>(meta("meta.ricd.hidden_channels"));
    cfg.center_mode = meta("meta.center_mode") != 0.0 ? CenterMode::literal : CenterMode::window_renormalized;
    cfg.use_ricd = meta("meta.use_ricd") != 0.0;
    cfg.use_iaicd = meta("meta.use_iaicd") != 0.0;
    cfg.first_stride = static_cast<int>(meta("meta.first_stride"));
    cfg.depth_scale = meta("meta.depth_scale");
    cfg.min_depth = meta("meta.min_depth");
    cfg.illumination_floor = meta("meta.illumination_floor");
    for (int s = 0; s < kScales; ++s) cfg.widths[s] = static_cast<int>(meta("meta.width." + std::to_string(s)));

    ModelParams model;
    try {
        model = make_model(cfg, 0);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint architecture invalid: ") + e.what());
    }
    auto fill = [&](ParamStore& store) {
        for (auto& [name, t] : store.entries()) {
            auto it = records.find(name);
            if (it == records.end()) throw FormatError("checkpoint lacks tensor " + name);
            if (it->second.shape != t.shape()) {
                throw FormatError("tensor " + name + " has shape " + it->second.shape.str() + ", expected " +
                                  t.shape().str());
            }
            std::copy(it->second.values.begin(), it->second.values.end(), t.mutable_data().begin());
        }
    };
    fill(model.params);
    fill(model.buffers);
    return model;
}

}  // namespace ldc
