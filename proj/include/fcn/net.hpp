#ifndef FCN_NET_HPP
#define FCN_NET_HPP

#include <string>
#include <vector>

#include "fcn/tensor.hpp"

namespace fcn {

enum class LayerKind { Conv, MaxPool, ReLU, FullyConvHead };

std::string layer_kind_name(LayerKind k);

// One layer of the stack. Conv and FullyConvHead carry weights laid out
// [out_ch][in_ch][ky][kx]; within an output cell accumulation runs
// channel-major, then kernel row-major, so results are bit-reproducible.
struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    int kernel = 1;
    int stride = 1;
    int padding = 0;
    int in_channels = 0;
    int out_channels = 0;
    std::vector<real> weights;
    std::vector<real> biases;

    bool has_params() const {
        return kind == LayerKind::Conv || kind == LayerKind::FullyConvHead;
    }
    size_t expected_weight_count() const {
        return static_cast<size_t>(kernel) * kernel * in_channels * out_channels;
    }
    // throws std::invalid_argument on inconsistent geometry/parameter sizes
    void validate() const;
};

struct NetworkSpec {
    std::string name;
    std::vector<LayerSpec> layers;

    // Checks per-layer consistency, channel compatibility between adjacent
    // layers, and that the stack ends in a single FullyConvHead with one
    // output plane (the binary face score).
    void validate() const;
    size_t parameter_count() const;
};

// Input pixels per heatmap cell (stride), receptive-field side (window) and
// the input coordinate of heatmap cell (0,0)'s field origin (offset; can be
// negative when layers pad).
struct NetGeometry {
    int stride = 1;
    int window = 1;
    int offset = 0;
};

// Gradients for one layer; empty vectors for parameterless layers.
struct LayerGrads {
    std::vector<real> weights;
    std::vector<real> biases;
};

// --- forward ---------------------------------------------------------------

// Affine map of each k x k x in_channels window; serves Conv and
// FullyConvHead. Zero padding. Output dims follow the floor formula.
Tensor3 conv_forward(const Tensor3& input, const LayerSpec& layer);

// Per-channel window maximum. Out-of-bounds cells of padded windows are
// ignored (treated as -inf), never as zeros.
Tensor3 maxpool_forward(const Tensor3& input, const LayerSpec& layer);

// max(0, x) elementwise.
Tensor3 relu_forward(const Tensor3& input);

// Runs the full stack; applies the logistic squash after the FullyConvHead
// so heatmap values lie in [0,1]. Throws with the offending layer index if
// any intermediate output would have a dimension < 1.
Tensor3 net_forward(const NetworkSpec& net, const Tensor3& input);

// --- training --------------------------------------------------------------

// Mean binary cross-entropy of net_forward(net, input) against per-cell
// {0,1} labels (depth-1 tensor of the same spatial dims as the heatmap).
real net_loss(const NetworkSpec& net, const Tensor3& input, const Tensor3& labels);

// Exact analytic gradients of net_loss w.r.t. every weight and bias,
// one LayerGrads per layer (empty for ReLU / MaxPool). loss_out, when given,
// receives the loss of the same forward pass.
std::vector<LayerGrads> net_backward(const NetworkSpec& net, const Tensor3& input,
                                     const Tensor3& labels, real* loss_out = nullptr);

// Weight init: zero-mean uniform scaled by sqrt(2 / fan_in), biases zero,
// seeded deterministically.
void init_weights(NetworkSpec& net, uint64_t seed);

// --- geometry --------------------------------------------------------------

// Exact layer-by-layer jump/receptive-field recurrence. For heatmap cell
// (i, j) the receptive field is the square at
// (offset + j*stride, offset + i*stride) of side `window`, clamped to the
// image. The closed-form product of strides and pool kernels sometimes
// quoted for this quantity is not consistent with actual layer composition;
// only the recurrence is used here.
NetGeometry net_geometry(const NetworkSpec& net);

}  // namespace fcn

#endif
