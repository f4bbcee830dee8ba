#include "fcn/net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fcn/rng.hpp"

namespace fcn {

std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::ReLU: return "relu";
        case LayerKind::FullyConvHead: return "fullyconv_head";
    }
    return "?";
}

void LayerSpec::validate() const {
    if (kernel < 1 || stride < 1 || padding < 0)
        throw std::invalid_argument(layer_kind_name(kind) + ": bad geometry k=" +
                                    std::to_string(kernel) + " s=" + std::to_string(stride) +
                                    " p=" + std::to_string(padding));
    if (has_params()) {
        if (in_channels < 1 || out_channels < 1)
            throw std::invalid_argument(layer_kind_name(kind) + ": channels must be >= 1");
        if (weights.size() != expected_weight_count())
            throw std::invalid_argument(layer_kind_name(kind) + ": weight count " +
                                        std::to_string(weights.size()) + " != k*k*in*out = " +
                                        std::to_string(expected_weight_count()));
        if (biases.size() != static_cast<size_t>(out_channels))
            throw std::invalid_argument(layer_kind_name(kind) + ": bias count mismatch");
        if (kind == LayerKind::FullyConvHead && out_channels != 1)
            throw std::invalid_argument("fullyconv_head must have out_channels = 1");
    } else {
        if (!weights.empty() || !biases.empty())
            throw std::invalid_argument(layer_kind_name(kind) + " carries no parameters");
    }
}

void NetworkSpec::validate() const {
    if (layers.empty()) throw std::invalid_argument("network '" + name + "' has no layers");
    int cur = -1;  // unknown until the first parametric layer
    for (size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        l.validate();
        if (l.has_params()) {
            if (cur != -1 && cur != l.in_channels)
                throw std::invalid_argument("network '" + name + "': layer " + std::to_string(i) +
                                            " expects " + std::to_string(l.in_channels) +
                                            " input planes but gets " + std::to_string(cur));
            cur = l.out_channels;
        }
        if (l.kind == LayerKind::FullyConvHead && i + 1 != layers.size())
            throw std::invalid_argument("network '" + name + "': fullyconv_head must be the last layer");
    }
    if (layers.back().kind != LayerKind::FullyConvHead)
        throw std::invalid_argument("network '" + name + "': last layer must be a fullyconv_head");
}

size_t NetworkSpec::parameter_count() const {
    size_t n = 0;
    for (const LayerSpec& l : layers) n += l.weights.size() + l.biases.size();
    return n;
}

namespace {

int out_dim(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

// Zero-padded, channel-planar copy of a (y, x, c) tensor. Plane ci holds
// (h + 2p) rows of (w + 2p) values; inner kernel loops then run contiguously.
std::vector<real> to_padded_planes(const Tensor3& t, int pad) {
    const int wp = t.width + 2 * pad, hp = t.height + 2 * pad;
    std::vector<real> planes(static_cast<size_t>(t.depth) * wp * hp, real(0));
    for (int c = 0; c < t.depth; ++c) {
        real* plane = planes.data() + static_cast<size_t>(c) * wp * hp;
        for (int y = 0; y < t.height; ++y) {
            const real* src = t.data.data() + static_cast<size_t>(y) * t.width * t.depth + c;
            real* dst = plane + static_cast<size_t>(y + pad) * wp + pad;
            for (int x = 0; x < t.width; ++x) dst[x] = src[static_cast<size_t>(x) * t.depth];
        }
    }
    return planes;
}

real sigmoid(real z) {
    if (z >= 0) return real(1) / (real(1) + std::exp(-z));
    const real e = std::exp(z);
    return e / (real(1) + e);
}

}  // namespace

Tensor3 conv_forward(const Tensor3& input, const LayerSpec& layer) {
    if (layer.kind != LayerKind::Conv && layer.kind != LayerKind::FullyConvHead)
        throw std::invalid_argument("conv_forward: layer kind is " + layer_kind_name(layer.kind));
    layer.validate();
    if (input.depth != layer.in_channels)
        throw std::invalid_argument("conv_forward: input depth " + std::to_string(input.depth) +
                                    " != in_channels " + std::to_string(layer.in_channels));
    const int k = layer.kernel, s = layer.stride, p = layer.padding;
    const int ow = out_dim(input.width, k, s, p), oh = out_dim(input.height, k, s, p);
    if (ow < 1 || oh < 1)
        throw std::invalid_argument("conv_forward: output dimension < 1 (" + std::to_string(ow) +
                                    "x" + std::to_string(oh) + ")");

    const int wp = input.width + 2 * p, hp = input.height + 2 * p;
    const std::vector<real> planes = to_padded_planes(input, p);
    const int ic = layer.in_channels, oc = layer.out_channels;

    Tensor3 out(ow, oh, oc);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            real* cell = out.data.data() + (static_cast<size_t>(oy) * ow + ox) * oc;
            for (int o = 0; o < oc; ++o) {
                real acc = layer.biases[o];
                const real* wbase = layer.weights.data() + static_cast<size_t>(o) * ic * k * k;
                for (int ci = 0; ci < ic; ++ci) {
                    const real* plane = planes.data() + static_cast<size_t>(ci) * wp * hp;
                    const real* wch = wbase + static_cast<size_t>(ci) * k * k;
                    for (int ky = 0; ky < k; ++ky) {
                        const real* row = plane + static_cast<size_t>(oy * s + ky) * wp + ox * s;
                        const real* wrow = wch + static_cast<size_t>(ky) * k;
                        for (int kx = 0; kx < k; ++kx) acc += row[kx] * wrow[kx];
                    }
                }
                cell[o] = acc;
            }
        }
    }
    return out;
}

Tensor3 maxpool_forward(const Tensor3& input, const LayerSpec& layer) {
    if (layer.kind != LayerKind::MaxPool)
        throw std::invalid_argument("maxpool_forward: layer kind is " + layer_kind_name(layer.kind));
    layer.validate();
    const int k = layer.kernel, s = layer.stride, p = layer.padding;
    if (k > input.width + 2 * p || k > input.height + 2 * p)
        throw std::invalid_argument("maxpool_forward: window exceeds padded input");
    const int ow = out_dim(input.width, k, s, p), oh = out_dim(input.height, k, s, p);
    if (ow < 1 || oh < 1)
        throw std::invalid_argument("maxpool_forward: output dimension < 1");

    Tensor3 out(ow, oh, input.depth);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const int y0 = oy * s - p, x0 = ox * s - p;
            for (int c = 0; c < input.depth; ++c) {
                real best = -std::numeric_limits<real>::infinity();
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = y0 + ky;
                    if (iy < 0 || iy >= input.height) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = x0 + kx;
                        if (ix < 0 || ix >= input.width) continue;
                        best = std::max(best, input.at(ix, iy, c));
                    }
                }
                out.at(ox, oy, c) = best;
            }
        }
    }
    return out;
}

Tensor3 relu_forward(const Tensor3& input) {
    Tensor3 out = input;
    for (real& v : out.data) v = std::max(real(0), v);
    return out;
}

namespace {

Tensor3 layer_forward(const Tensor3& x, const LayerSpec& l, size_t index) {
    try {
        switch (l.kind) {
            case LayerKind::Conv:
            case LayerKind::FullyConvHead: return conv_forward(x, l);
            case LayerKind::MaxPool: return maxpool_forward(x, l);
            case LayerKind::ReLU: return relu_forward(x);
        }
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("layer " + std::to_string(index) + ": " + e.what());
    }
    throw std::logic_error("unreachable layer kind");
}

struct ForwardCache {
    std::vector<Tensor3> inputs;  // input of each layer
    Tensor3 logits;               // head output before the squash
    Tensor3 heatmap;              // after the squash
};

ForwardCache run_forward(const NetworkSpec& net, const Tensor3& input) {
    net.validate();
    ForwardCache cache;
    Tensor3 x = input;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        cache.inputs.push_back(x);
        x = layer_forward(x, net.layers[i], i);
    }
    cache.logits = x;
    for (real& v : x.data) v = sigmoid(v);
    cache.heatmap = std::move(x);
    return cache;
}

}  // namespace

Tensor3 net_forward(const NetworkSpec& net, const Tensor3& input) {
    return run_forward(net, input).heatmap;
}

real net_loss(const NetworkSpec& net, const Tensor3& input, const Tensor3& labels) {
    const Tensor3 heatmap = net_forward(net, input);
    if (heatmap.width != labels.width || heatmap.height != labels.height || labels.depth != 1)
        throw std::invalid_argument("net_loss: label dims " + std::to_string(labels.width) + "x" +
                                    std::to_string(labels.height) + " do not match heatmap " +
                                    std::to_string(heatmap.width) + "x" + std::to_string(heatmap.height));
    const real eps = real(1e-12);
    real total = 0;
    for (size_t i = 0; i < heatmap.data.size(); ++i) {
        const real p = std::clamp(heatmap.data[i], eps, real(1) - eps);
        const real y = labels.data[i];
        total += -(y * std::log(p) + (real(1) - y) * std::log(real(1) - p));
    }
    return total / static_cast<real>(heatmap.data.size());
}

namespace {

// grad wrt conv input (unpadded), plus weight/bias grads, from the gradient
// at the conv output. Same planar layout and loop order as the forward pass.
Tensor3 conv_backward(const Tensor3& input, const LayerSpec& layer, const Tensor3& grad_out,
                      LayerGrads& grads) {
    const int k = layer.kernel, s = layer.stride, p = layer.padding;
    const int ic = layer.in_channels, oc = layer.out_channels;
    const int wp = input.width + 2 * p, hp = input.height + 2 * p;
    const std::vector<real> planes = to_padded_planes(input, p);
    std::vector<real> gplanes(planes.size(), real(0));

    grads.weights.assign(layer.weights.size(), real(0));
    grads.biases.assign(layer.biases.size(), real(0));

    for (int oy = 0; oy < grad_out.height; ++oy) {
        for (int ox = 0; ox < grad_out.width; ++ox) {
            const real* gcell = grad_out.data.data() +
                                (static_cast<size_t>(oy) * grad_out.width + ox) * oc;
            for (int o = 0; o < oc; ++o) {
                const real g = gcell[o];
                if (g == real(0)) continue;
                grads.biases[o] += g;
                real* gwbase = grads.weights.data() + static_cast<size_t>(o) * ic * k * k;
                const real* wbase = layer.weights.data() + static_cast<size_t>(o) * ic * k * k;
                for (int ci = 0; ci < ic; ++ci) {
                    const real* plane = planes.data() + static_cast<size_t>(ci) * wp * hp;
                    real* gplane = gplanes.data() + static_cast<size_t>(ci) * wp * hp;
                    for (int ky = 0; ky < k; ++ky) {
                        const size_t row0 = static_cast<size_t>(oy * s + ky) * wp + ox * s;
                        const real* row = plane + row0;
                        real* grow = gplane + row0;
                        real* gwrow = gwbase + (static_cast<size_t>(ci) * k + ky) * k;
                        const real* wrow = wbase + (static_cast<size_t>(ci) * k + ky) * k;
                        for (int kx = 0; kx < k; ++kx) {
                            gwrow[kx] += g * row[kx];
                            grow[kx] += g * wrow[kx];
                        }
                    }
                }
            }
        }
    }

    Tensor3 grad_in(input.width, input.height, input.depth);
    for (int c = 0; c < ic; ++c) {
        const real* gplane = gplanes.data() + static_cast<size_t>(c) * wp * hp;
        for (int y = 0; y < input.height; ++y)
            for (int x = 0; x < input.width; ++x)
                grad_in.at(x, y, c) = gplane[static_cast<size_t>(y + p) * wp + (x + p)];
    }
    return grad_in;
}

// Routes each output-cell gradient to the first maximum in scan order.
Tensor3 maxpool_backward(const Tensor3& input, const LayerSpec& layer, const Tensor3& grad_out) {
    const int k = layer.kernel, s = layer.stride, p = layer.padding;
    Tensor3 grad_in(input.width, input.height, input.depth);
    for (int oy = 0; oy < grad_out.height; ++oy) {
        for (int ox = 0; ox < grad_out.width; ++ox) {
            const int y0 = oy * s - p, x0 = ox * s - p;
            for (int c = 0; c < input.depth; ++c) {
                real best = -std::numeric_limits<real>::infinity();
                int by = -1, bx = -1;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = y0 + ky;
                    if (iy < 0 || iy >= input.height) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = x0 + kx;
                        if (ix < 0 || ix >= input.width) continue;
                        if (input.at(ix, iy, c) > best) {
                            best = input.at(ix, iy, c);
                            by = iy; bx = ix;
                        }
                    }
                }
                if (by >= 0) grad_in.at(bx, by, c) += grad_out.at(ox, oy, c);
            }
        }
    }
    return grad_in;
}

}  // namespace

std::vector<LayerGrads> net_backward(const NetworkSpec& net, const Tensor3& input,
                                     const Tensor3& labels, real* loss_out) {
    const ForwardCache cache = run_forward(net, input);
    const Tensor3& heatmap = cache.heatmap;
    if (heatmap.width != labels.width || heatmap.height != labels.height || labels.depth != 1)
        throw std::invalid_argument("net_backward: label dims do not match heatmap dims");

    if (loss_out) {
        const real eps = real(1e-12);
        real total = 0;
        for (size_t i = 0; i < heatmap.data.size(); ++i) {
            const real p = std::clamp(heatmap.data[i], eps, real(1) - eps);
            const real y = labels.data[i];
            total += -(y * std::log(p) + (real(1) - y) * std::log(real(1) - p));
        }
        *loss_out = total / static_cast<real>(heatmap.data.size());
    }

    // d(mean CE)/d(logit) for the sigmoid head collapses to (p - y) / n.
    const real n = static_cast<real>(heatmap.data.size());
    Tensor3 grad = heatmap;
    for (size_t i = 0; i < grad.data.size(); ++i)
        grad.data[i] = (heatmap.data[i] - labels.data[i]) / n;

    std::vector<LayerGrads> out(net.layers.size());
    for (size_t i = net.layers.size(); i-- > 0;) {
        const LayerSpec& l = net.layers[i];
        const Tensor3& x = cache.inputs[i];
        switch (l.kind) {
            case LayerKind::Conv:
            case LayerKind::FullyConvHead:
                grad = conv_backward(x, l, grad, out[i]);
                break;
            case LayerKind::MaxPool:
                grad = maxpool_backward(x, l, grad);
                break;
            case LayerKind::ReLU: {
                Tensor3 g = std::move(grad);
                for (size_t j = 0; j < g.data.size(); ++j)
                    if (x.data[j] <= real(0)) g.data[j] = real(0);
                grad = std::move(g);
                break;
            }
        }
    }
    return out;
}

void init_weights(NetworkSpec& net, uint64_t seed) {
    Rng rng(seed);
    for (LayerSpec& l : net.layers) {
        if (!l.has_params()) continue;
        const double fan_in = static_cast<double>(l.kernel) * l.kernel * l.in_channels;
        const double a = std::sqrt(2.0 / fan_in);
        for (real& w : l.weights) w = static_cast<real>(rng.uniform(-a, a));
        for (real& b : l.biases) b = real(0);
    }
}

NetGeometry net_geometry(const NetworkSpec& net) {
    NetGeometry g;
    for (const LayerSpec& l : net.layers) {
        const bool spatial = l.kind != LayerKind::ReLU;
        const int k = spatial ? l.kernel : 1;
        const int s = spatial ? l.stride : 1;
        const int p = spatial ? l.padding : 0;
        g.offset -= p * g.stride;
        g.window += (k - 1) * g.stride;
        g.stride *= s;
    }
    return g;
}

}  // namespace fcn
