#include "fcn/pyramid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fcn {

void PyramidConfig::validate() const {
    if (target_long_edges.empty())
        throw std::invalid_argument("pyramid: target list is empty");
    for (size_t i = 0; i < target_long_edges.size(); ++i) {
        if (target_long_edges[i] < 1)
            throw std::invalid_argument("pyramid: target edge must be >= 1");
        if (i > 0 && target_long_edges[i] >= target_long_edges[i - 1])
            throw std::invalid_argument("pyramid: targets must be strictly decreasing");
    }
}

Tensor3 resize_bilinear(const Tensor3& image, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1)
        throw std::invalid_argument("resize_bilinear: output dims must be >= 1");
    if (out_w == image.width && out_h == image.height) return image;

    Tensor3 out(out_w, out_h, image.depth);
    const double sx = static_cast<double>(image.width) / out_w;
    const double sy = static_cast<double>(image.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(image.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, image.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(image.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, image.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < image.depth; ++c) {
                const double top = image.at(x0, y0, c) * (1.0 - wx) + image.at(x1, y0, c) * wx;
                const double bot = image.at(x0, y1, c) * (1.0 - wx) + image.at(x1, y1, c) * wx;
                out.at(x, y, c) = static_cast<real>(top * (1.0 - wy) + bot * wy);
            }
        }
    }
    return out;
}

Tensor3 crop_tensor(const Tensor3& image, const Box& box) {
    if (box.x < 0 || box.y < 0 || box.x2() > image.width || box.y2() > image.height ||
        box.w < 1 || box.h < 1)
        throw std::invalid_argument("crop_tensor: box outside image");
    Tensor3 out(box.w, box.h, image.depth);
    for (int y = 0; y < box.h; ++y) {
        const real* src = image.data.data() +
                          (static_cast<size_t>(box.y + y) * image.width + box.x) * image.depth;
        real* dst = out.data.data() + static_cast<size_t>(y) * box.w * image.depth;
        std::copy(src, src + static_cast<size_t>(box.w) * image.depth, dst);
    }
    return out;
}

std::vector<ScaledImage> build_pyramid(const Tensor3& image, const PyramidConfig& cfg) {
    cfg.validate();
    if (image.depth != 3)
        throw std::invalid_argument("build_pyramid: image depth must be 3, got " +
                                    std::to_string(image.depth));
    if (image.width < 8 || image.height < 8)
        throw std::invalid_argument("build_pyramid: degenerate image " +
                                    std::to_string(image.width) + "x" + std::to_string(image.height));

    const int long_edge = std::max(image.width, image.height);
    std::vector<ScaledImage> pyramid;
    for (int target : cfg.target_long_edges) {
        if (target > 2 * long_edge) continue;  // don't upscale beyond 2x
        const double sf = static_cast<double>(target) / long_edge;
        int w, h;
        if (image.width >= image.height) {
            w = target;
            h = std::max(1, static_cast<int>(std::lround(image.height * sf)));
        } else {
            h = target;
            w = std::max(1, static_cast<int>(std::lround(image.width * sf)));
        }
        ScaledImage level;
        level.tensor = resize_bilinear(image, w, h);
        level.scale_factor = sf;
        level.original_width = image.width;
        level.original_height = image.height;
        pyramid.push_back(std::move(level));
    }
    return pyramid;
}

bool net_accepts(const NetworkSpec& net, int w, int h) {
    for (const LayerSpec& l : net.layers) {
        if (l.kind == LayerKind::ReLU) continue;
        w = (w + 2 * l.padding - l.kernel) / l.stride + 1;
        h = (h + 2 * l.padding - l.kernel) / l.stride + 1;
        if (w < 1 || h < 1) return false;
    }
    return true;
}

std::pair<int, int> net_output_dims(const NetworkSpec& net, int w, int h) {
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        if (l.kind == LayerKind::ReLU) continue;
        w = (w + 2 * l.padding - l.kernel) / l.stride + 1;
        h = (h + 2 * l.padding - l.kernel) / l.stride + 1;
        if (w < 1 || h < 1)
            throw std::invalid_argument("input too small at layer " + std::to_string(i));
    }
    return {w, h};
}

StreamsResult run_streams(const NetworkSpec& net, const std::vector<ScaledImage>& pyramid) {
    net.validate();
    StreamsResult result;
    for (size_t i = 0; i < pyramid.size(); ++i) {
        const ScaledImage& level = pyramid[i];
        if (!net_accepts(net, level.tensor.width, level.tensor.height)) {
            result.skipped_levels.push_back(i);
            continue;
        }
        StreamOutput s;
        s.heatmap = net_forward(net, level.tensor);
        s.level_index = i;
        result.streams.push_back(std::move(s));
    }
    if (result.streams.empty())
        throw std::runtime_error("run_streams: every pyramid level is smaller than one receptive window");
    return result;
}

}  // namespace fcn
