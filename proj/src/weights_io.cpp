#include "fcn/weights_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fcn {

namespace {

constexpr uint32_t kVersion = 1;
const char kMagic[4] = {'F', 'C', 'N', 'W'};

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    put_u32(os, static_cast<uint32_t>(v));
    put_u32(os, static_cast<uint32_t>(v >> 32));
}

void put_f64(std::ostream& os, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(os, bits);
}

uint32_t get_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("corrupt weight file: truncated reading " + what);
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

uint64_t get_u64(std::istream& is, const std::string& what) {
    const uint64_t lo = get_u32(is, what);
    const uint64_t hi = get_u32(is, what);
    return lo | hi << 32;
}

double get_f64(std::istream& is, const std::string& what) {
    const uint64_t bits = get_u64(is, what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

uint32_t kind_tag(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return 0;
        case LayerKind::MaxPool: return 1;
        case LayerKind::ReLU: return 2;
        case LayerKind::FullyConvHead: return 3;
    }
    return 0;
}

LayerKind tag_kind(uint32_t t) {
    switch (t) {
        case 0: return LayerKind::Conv;
        case 1: return LayerKind::MaxPool;
        case 2: return LayerKind::ReLU;
        case 3: return LayerKind::FullyConvHead;
    }
    throw std::runtime_error("corrupt weight file: unknown layer kind tag " + std::to_string(t));
}

}  // namespace

void save_weights(const NetworkSpec& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, static_cast<uint32_t>(net.name.size()));
    os.write(net.name.data(), static_cast<std::streamsize>(net.name.size()));
    put_u32(os, static_cast<uint32_t>(net.layers.size()));
    for (const LayerSpec& l : net.layers) {
        put_u32(os, kind_tag(l.kind));
        put_u32(os, static_cast<uint32_t>(l.kernel));
        put_u32(os, static_cast<uint32_t>(l.stride));
        put_u32(os, static_cast<uint32_t>(l.padding));
        put_u32(os, static_cast<uint32_t>(l.in_channels));
        put_u32(os, static_cast<uint32_t>(l.out_channels));
        put_u64(os, l.weights.size());
        for (real w : l.weights) put_f64(os, static_cast<double>(w));
        put_u64(os, l.biases.size());
        for (real b : l.biases) put_f64(os, static_cast<double>(b));
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

NetworkSpec load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("corrupt weight file: bad magic in " + path);
    const uint32_t version = get_u32(is, "version");
    if (version != kVersion)
        throw std::runtime_error("unsupported weight file version " + std::to_string(version));

    NetworkSpec net;
    const uint32_t name_len = get_u32(is, "name length");
    net.name.resize(name_len);
    if (name_len && !is.read(net.name.data(), name_len))
        throw std::runtime_error("corrupt weight file: truncated name in " + path);
    const uint32_t n_layers = get_u32(is, "layer count");
    net.layers.resize(n_layers);
    for (uint32_t i = 0; i < n_layers; ++i) {
        LayerSpec& l = net.layers[i];
        l.kind = tag_kind(get_u32(is, "layer kind"));
        l.kernel = static_cast<int>(get_u32(is, "kernel"));
        l.stride = static_cast<int>(get_u32(is, "stride"));
        l.padding = static_cast<int>(get_u32(is, "padding"));
        l.in_channels = static_cast<int>(get_u32(is, "in_channels"));
        l.out_channels = static_cast<int>(get_u32(is, "out_channels"));
        const uint64_t nw = get_u64(is, "weight count");
        l.weights.resize(nw);
        for (uint64_t j = 0; j < nw; ++j) l.weights[j] = static_cast<real>(get_f64(is, "weight"));
        const uint64_t nb = get_u64(is, "bias count");
        l.biases.resize(nb);
        for (uint64_t j = 0; j < nb; ++j) l.biases[j] = static_cast<real>(get_f64(is, "bias"));
    }
    return net;
}

void save_weights_json(const NetworkSpec& net, const std::string& path) {
    nlohmann::json j;
    j["format"] = "fcnw-json";
    j["version"] = kVersion;
    j["name"] = net.name;
    j["layers"] = nlohmann::json::array();
    for (const LayerSpec& l : net.layers) {
        nlohmann::json lj;
        lj["kind"] = layer_kind_name(l.kind);
        lj["kernel"] = l.kernel;
        lj["stride"] = l.stride;
        lj["padding"] = l.padding;
        lj["in_channels"] = l.in_channels;
        lj["out_channels"] = l.out_channels;
        lj["weights"] = l.weights;
        lj["biases"] = l.biases;
        j["layers"].push_back(lj);
    }
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << j.dump(2) << "\n";
}

NetworkSpec load_weights_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("bad weight json " + path + ": " + e.what());
    }
    NetworkSpec net;
    net.name = j.value("name", "");
    for (const auto& lj : j.at("layers")) {
        LayerSpec l;
        const std::string kind = lj.at("kind");
        if (kind == "conv") l.kind = LayerKind::Conv;
        else if (kind == "maxpool") l.kind = LayerKind::MaxPool;
        else if (kind == "relu") l.kind = LayerKind::ReLU;
        else if (kind == "fullyconv_head") l.kind = LayerKind::FullyConvHead;
        else throw std::runtime_error("bad weight json: unknown kind '" + kind + "'");
        l.kernel = lj.at("kernel");
        l.stride = lj.at("stride");
        l.padding = lj.at("padding");
        l.in_channels = lj.at("in_channels");
        l.out_channels = lj.at("out_channels");
        l.weights = lj.at("weights").get<std::vector<real>>();
        l.biases = lj.at("biases").get<std::vector<real>>();
        net.layers.push_back(std::move(l));
    }
    return net;
}

}  // namespace fcn
