#ifndef FCN_TENSOR_HPP
#define FCN_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcn {

#ifdef FCN_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

// W x H x D dense array, row-major (y, x, channel). Carries images,
// feature maps and heatmaps.
struct Tensor3 {
    int width = 0;
    int height = 0;
    int depth = 0;
    std::vector<real> data;

    Tensor3() = default;
    Tensor3(int w, int h, int d, real fill = 0) : width(w), height(h), depth(d) {
        if (w < 1 || h < 1 || d < 1)
            throw std::invalid_argument("Tensor3: dims must be >= 1, got " +
                                        std::to_string(w) + "x" + std::to_string(h) +
                                        "x" + std::to_string(d));
        data.assign(static_cast<size_t>(w) * h * d, fill);
    }

    size_t size() const { return data.size(); }

    real& at(int x, int y, int c) {
        return data[(static_cast<size_t>(y) * width + x) * depth + c];
    }
    real at(int x, int y, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * depth + c];
    }

    bool same_shape(const Tensor3& o) const {
        return width == o.width && height == o.height && depth == o.depth;
    }

    bool all_finite() const {
        for (real v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

}  // namespace fcn

#endif
