#ifndef FCN_BOX_HPP
#define FCN_BOX_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <tuple>

namespace fcn {

// Axis-aligned pixel rectangle, (x, y) = top-left corner.
struct Box {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    int64_t area() const { return static_cast<int64_t>(w) * h; }
    int x2() const { return x + w; }
    int y2() const { return y + h; }

    bool operator==(const Box&) const = default;
    // (y, x, w, h) lexicographic; the tie-break order used everywhere
    auto key() const { return std::tuple(y, x, w, h); }
};

inline int64_t intersection_area(const Box& a, const Box& b) {
    const int ix = std::max(0, std::min(a.x2(), b.x2()) - std::max(a.x, b.x));
    const int iy = std::max(0, std::min(a.y2(), b.y2()) - std::max(a.y, b.y));
    return static_cast<int64_t>(ix) * iy;
}

// Intersection over union; 0 when the union is empty.
inline double iou(const Box& a, const Box& b) {
    const int64_t inter = intersection_area(a, b);
    const int64_t uni = a.area() + b.area() - inter;
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

// Shrinks/moves the box so it lies inside [0,img_w) x [0,img_h).
inline Box clamp_box(const Box& b, int img_w, int img_h) {
    Box r = b;
    r.x = std::clamp(r.x, 0, std::max(0, img_w - 1));
    r.y = std::clamp(r.y, 0, std::max(0, img_h - 1));
    r.w = std::clamp(r.w, 0, img_w - r.x);
    r.h = std::clamp(r.h, 0, img_h - r.y);
    return r;
}

// Scales the box about its center, rounding to pixels.
inline Box scale_about_center(const Box& b, double factor) {
    const double cx = b.x + b.w / 2.0, cy = b.y + b.h / 2.0;
    const double nw = b.w * factor, nh = b.h * factor;
    Box r;
    r.x = static_cast<int>(std::lround(cx - nw / 2.0));
    r.y = static_cast<int>(std::lround(cy - nh / 2.0));
    r.w = std::max(1, static_cast<int>(std::lround(nw)));
    r.h = std::max(1, static_cast<int>(std::lround(nh)));
    return r;
}

}  // namespace fcn

#endif
