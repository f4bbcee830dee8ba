#ifndef FCN_PYRAMID_HPP
#define FCN_PYRAMID_HPP

#include <utility>
#include <vector>

#include "fcn/box.hpp"
#include "fcn/net.hpp"
#include "fcn/tensor.hpp"

namespace fcn {

// One level of the image pyramid. scale_factor = scaled long edge / original
// long edge; > 1 for upscaled small inputs.
struct ScaledImage {
    Tensor3 tensor;
    double scale_factor = 1.0;
    int original_width = 0;
    int original_height = 0;
};

struct PyramidConfig {
    std::vector<int> target_long_edges = {600, 400, 260, 170, 100, 60};

    void validate() const;
};

// Bilinear resampling to exactly (out_w, out_h), pixel-center convention.
// Resizing to the input's own size is an exact copy.
Tensor3 resize_bilinear(const Tensor3& image, int out_w, int out_h);

// Pixel-exact copy of the box region; the box must lie inside the image.
Tensor3 crop_tensor(const Tensor3& image, const Box& box);

// One ScaledImage per configured target, largest first. Targets more than
// twice the input long edge are skipped; everything else is resized
// (upscaling included) with the long edge placed at the target length.
std::vector<ScaledImage> build_pyramid(const Tensor3& image, const PyramidConfig& cfg);

struct StreamOutput {
    Tensor3 heatmap;
    size_t level_index = 0;  // into the pyramid passed to run_streams
};

struct StreamsResult {
    std::vector<StreamOutput> streams;
    std::vector<size_t> skipped_levels;
};

// True if every layer's output has dims >= 1 for a w x h input.
bool net_accepts(const NetworkSpec& net, int w, int h);

// Heatmap dims for a w x h input; throws if any layer would underflow.
std::pair<int, int> net_output_dims(const NetworkSpec& net, int w, int h);

// Shared-parameter FCN over every pyramid level. Levels smaller than one
// receptive window are recorded in skipped_levels; if all levels are
// undersized this throws.
StreamsResult run_streams(const NetworkSpec& net, const std::vector<ScaledImage>& pyramid);

}  // namespace fcn

#endif
