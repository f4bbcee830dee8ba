#include "fcn/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace fcn {

namespace {

// next whitespace-delimited token, skipping '#' comment lines
std::string next_token(std::istream& is, const std::string& path) {
    std::string tok;
    int c;
    while ((c = is.get()) != EOF) {
        if (c == '#') {
            while ((c = is.get()) != EOF && c != '\n') {}
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw std::runtime_error("malformed header in " + path);
    return tok;
}

int parse_dim(const std::string& tok, const std::string& path) {
    try {
        const int v = std::stoi(tok);
        if (v < 1) throw std::runtime_error("");
        return v;
    } catch (...) {
        throw std::runtime_error("malformed header value '" + tok + "' in " + path);
    }
}

}  // namespace

Tensor3 read_image(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open image: " + path);

    const std::string magic = next_token(is, path);
    if (magic != "P6" && magic != "P5")
        throw std::runtime_error("unsupported image format '" + magic + "' in " + path);
    const int w = parse_dim(next_token(is, path), path);
    const int h = parse_dim(next_token(is, path), path);
    const int maxval = parse_dim(next_token(is, path), path);
    if (maxval != 255)
        throw std::runtime_error("only 8-bit images supported, maxval=" +
                                 std::to_string(maxval) + " in " + path);
    // single whitespace byte after maxval already consumed by tokenizer? No:
    // next_token returns on the delimiter it consumed, so payload starts here.

    const int channels = magic == "P6" ? 3 : 1;
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h * channels);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
        throw std::runtime_error("truncated image payload in " + path);

    Tensor3 out(w, h, 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t src = (static_cast<size_t>(y) * w + x) * channels;
            for (int c = 0; c < 3; ++c) {
                const unsigned char byte = raw[src + (channels == 3 ? c : 0)];
                out.at(x, y, c) = static_cast<real>(byte) / real(255);
            }
        }
    }
    return out;
}

void write_image(const Tensor3& tensor, const std::string& path) {
    if (tensor.depth != 3 && tensor.depth != 1)
        throw std::invalid_argument("write_image: depth must be 1 or 3");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << (tensor.depth == 3 ? "P6" : "P5") << "\n"
       << tensor.width << " " << tensor.height << "\n255\n";
    std::vector<unsigned char> raw;
    raw.reserve(tensor.data.size());
    for (real v : tensor.data) {
        const real clamped = std::clamp(v, real(0), real(1));
        raw.push_back(static_cast<unsigned char>(std::lround(clamped * 255)));
    }
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!os) throw std::runtime_error("write failed: " + path);
}

void write_scoremap_pgm(const ScoreMap& map, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    double maxv = 0.0;
    for (double v : map.values) maxv = std::max(maxv, v);
    os << "P5\n# scale " << maxv << "\n" << map.width << " " << map.height << "\n65535\n";
    for (double v : map.values) {
        const double norm = maxv > 0.0 ? v / maxv : 0.0;
        const auto q = static_cast<uint16_t>(std::lround(std::clamp(norm, 0.0, 1.0) * 65535.0));
        // 16-bit PGM samples are most-significant byte first
        const unsigned char hi = static_cast<unsigned char>(q >> 8);
        const unsigned char lo = static_cast<unsigned char>(q & 0xff);
        os.put(static_cast<char>(hi));
        os.put(static_cast<char>(lo));
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

void write_scoremap_csv(const ScoreMap& map, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.precision(9);
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            if (x) os << ",";
            os << map.at(x, y);
        }
        os << "\n";
    }
}

}  // namespace fcn
