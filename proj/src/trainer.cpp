#include "fcn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "fcn/pyramid.hpp"
#include "fcn/util.hpp"

namespace fcn {

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (learning_rate < 0.0) throw std::invalid_argument("train: learning_rate must be >= 0");
    if (lr_decay <= 0.0 || lr_decay > 1.0)
        throw std::invalid_argument("train: lr_decay must be in (0, 1]");
    if (momentum < 0.0 || momentum >= 1.0)
        throw std::invalid_argument("train: momentum must be in [0, 1)");
    if (neg_pos_ratio < 1.0)
        throw std::invalid_argument("train: neg_pos_ratio must be >= 1");
    if (positives < 1) throw std::invalid_argument("train: positives must be >= 1");
    if (negatives < 1) throw std::invalid_argument("train: negatives must be >= 1");
    const double actual = static_cast<double>(negatives) / positives;
    if (std::abs(actual - neg_pos_ratio) > 0.01 * neg_pos_ratio)
        throw std::invalid_argument("train: negatives/positives = " + std::to_string(actual) +
                                    " is more than 1% off neg_pos_ratio = " +
                                    std::to_string(neg_pos_ratio));
}

Tensor3 extract_patch(const Tensor3& image, const Box& box, int out_size) {
    const Box clamped = clamp_box(box, image.width, image.height);
    if (clamped.w < 1 || clamped.h < 1)
        throw std::invalid_argument("extract_patch: box outside image");
    return resize_bilinear(crop_tensor(image, clamped), out_size, out_size);
}

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
    // splitmix64 round
    uint64_t z = seed + salt * 0x9e3779b97f4a7c15ULL + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// all ground-truth boxes as (image index, box index) pairs
std::vector<std::pair<size_t, size_t>> face_index(const std::vector<AnnotatedImage>& annotated) {
    std::vector<std::pair<size_t, size_t>> faces;
    for (size_t i = 0; i < annotated.size(); ++i)
        for (size_t b = 0; b < annotated[i].boxes.size(); ++b) faces.emplace_back(i, b);
    return faces;
}

std::vector<TrainSample> assemble_samples(const std::vector<AnnotatedImage>& annotated,
                                          const std::vector<AnnotatedImage>& backgrounds,
                                          int window, const TrainConfig& cfg,
                                          double positive_pad) {
    cfg.validate();
    if (window < 4) throw std::invalid_argument("assemble: window too small");
    const auto faces = face_index(annotated);
    if (faces.empty()) throw std::invalid_argument("assemble: no annotated faces");
    if (backgrounds.empty()) throw std::invalid_argument("assemble: no background images");

    Rng rng(mix_seed(cfg.seed, 0xA55E3B1EULL));
    std::vector<TrainSample> samples;
    samples.reserve(static_cast<size_t>(cfg.positives) + cfg.negatives);

    for (int n = 0; n < cfg.positives; ++n) {
        const auto [ii, bi] = faces[static_cast<size_t>(n) % faces.size()];
        const AnnotatedImage& img = annotated[ii];
        Box b = img.boxes[bi];
        if (static_cast<size_t>(n) >= faces.size()) {
            // revisiting a face: jitter position and scale a little
            const int dx = static_cast<int>(std::lround(rng.uniform(-0.08, 0.08) * b.w));
            const int dy = static_cast<int>(std::lround(rng.uniform(-0.08, 0.08) * b.h));
            b.x += dx;
            b.y += dy;
            b = scale_about_center(b, rng.uniform(0.92, 1.08));
        }
        if (positive_pad > 0.0) b = scale_about_center(b, 1.0 + positive_pad);
        TrainSample s;
        s.patch = extract_patch(img.image, b, window);
        s.label = 1;
        s.kind = SampleKind::Plain;
        s.source_image = img.id;
        s.source_box = b;
        samples.push_back(std::move(s));
    }

    for (int n = 0; n < cfg.negatives; ++n) {
        bool placed = false;
        for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
            const AnnotatedImage& img = backgrounds[static_cast<size_t>(rng.uniform_int(
                static_cast<int>(backgrounds.size())))];
            const int short_edge = std::min(img.image.width, img.image.height);
            const int lo = std::min(window, short_edge - 1);
            const int hi = std::max(lo + 1, static_cast<int>(0.9 * short_edge));
            const int side = lo + rng.uniform_int(hi - lo);
            if (side < 4 || side > short_edge) continue;
            Box b;
            b.w = b.h = side;
            b.x = rng.uniform_int(img.image.width - side + 1);
            b.y = rng.uniform_int(img.image.height - side + 1);
            bool overlaps = false;
            for (const Box& gt : img.boxes)
                if (iou(b, gt) >= 0.1) { overlaps = true; break; }
            if (overlaps) continue;
            TrainSample s;
            s.patch = extract_patch(img.image, b, window);
            s.label = 0;
            s.kind = SampleKind::Plain;
            s.source_image = img.id;
            s.source_box = b;
            samples.push_back(std::move(s));
            placed = true;
        }
        if (!placed)
            throw std::runtime_error("assemble: no valid negative region after 200 attempts");
    }
    return samples;
}

}  // namespace

std::vector<TrainSample> assemble_stage1_samples(const std::vector<AnnotatedImage>& annotated,
                                                 const std::vector<AnnotatedImage>& backgrounds,
                                                 int window, const TrainConfig& cfg) {
    return assemble_samples(annotated, backgrounds, window, cfg, 0.0);
}

std::vector<TrainSample> assemble_verification_samples(
    const std::vector<AnnotatedImage>& annotated, const std::vector<AnnotatedImage>& backgrounds,
    int window, const TrainConfig& cfg, double context_pad) {
    return assemble_samples(annotated, backgrounds, window, cfg, context_pad);
}

NetworkSpec train(const NetworkSpec& start, const std::vector<TrainSample>& samples,
                  const TrainConfig& cfg, std::vector<TrainLogRow>* log, int jobs) {
    cfg.validate();
    start.validate();
    if (samples.empty()) throw std::invalid_argument("train: no samples");
    bool has_pos = false, has_neg = false;
    for (const TrainSample& s : samples) (s.label ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg)
        throw std::invalid_argument("train: need both classes in the training set");

    NetworkSpec net = start;
    std::vector<LayerGrads> velocity(net.layers.size());
    for (size_t i = 0; i < net.layers.size(); ++i) {
        velocity[i].weights.assign(net.layers[i].weights.size(), real(0));
        velocity[i].biases.assign(net.layers[i].biases.size(), real(0));
    }

    // label tensors sized to each patch's heatmap (1x1 for window patches)
    std::vector<Tensor3> labels(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        const auto [hw, hh] =
            net_output_dims(net, samples[i].patch.width, samples[i].patch.height);
        labels[i] = Tensor3(hw, hh, 1, static_cast<real>(samples[i].label));
    }

    Rng shuffle_rng(mix_seed(cfg.seed, 0x7EA1BEEFULL));
    std::vector<size_t> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    const int decay_epoch = (2 * cfg.epochs + 2) / 3;  // ceil(2/3 * epochs)

    struct SampleResult {
        std::vector<LayerGrads> grads;
        real loss = 0;
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.learning_rate * (epoch >= decay_epoch ? cfg.lr_decay : 1.0);
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        size_t n_correct = 0;

        for (size_t start_i = 0; start_i < order.size(); start_i += cfg.batch_size) {
            const size_t bn = std::min(order.size() - start_i, static_cast<size_t>(cfg.batch_size));
            const std::vector<SampleResult> results = parallel_map<SampleResult>(
                bn, jobs, [&](size_t k) {
                    const size_t idx = order[start_i + k];
                    SampleResult r;
                    r.grads = net_backward(net, samples[idx].patch, labels[idx], &r.loss);
                    return r;
                });

            // fixed-order accumulation
            std::vector<LayerGrads> batch_grads(net.layers.size());
            for (size_t li = 0; li < net.layers.size(); ++li) {
                batch_grads[li].weights.assign(net.layers[li].weights.size(), real(0));
                batch_grads[li].biases.assign(net.layers[li].biases.size(), real(0));
            }
            real batch_loss = 0;
            for (size_t k = 0; k < bn; ++k) {
                batch_loss += results[k].loss;
                for (size_t li = 0; li < net.layers.size(); ++li) {
                    for (size_t j = 0; j < batch_grads[li].weights.size(); ++j)
                        batch_grads[li].weights[j] += results[k].grads[li].weights[j];
                    for (size_t j = 0; j < batch_grads[li].biases.size(); ++j)
                        batch_grads[li].biases[j] += results[k].grads[li].biases[j];
                }
            }
            batch_loss /= static_cast<real>(bn);
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train: loss diverged at epoch " + std::to_string(epoch));
            epoch_loss += batch_loss * static_cast<double>(bn);

            const real scale = real(1) / static_cast<real>(bn);
            for (size_t li = 0; li < net.layers.size(); ++li) {
                LayerSpec& l = net.layers[li];
                for (size_t j = 0; j < l.weights.size(); ++j) {
                    velocity[li].weights[j] = static_cast<real>(cfg.momentum) * velocity[li].weights[j] -
                                              static_cast<real>(lr) * batch_grads[li].weights[j] * scale;
                    l.weights[j] += velocity[li].weights[j];
                }
                for (size_t j = 0; j < l.biases.size(); ++j) {
                    velocity[li].biases[j] = static_cast<real>(cfg.momentum) * velocity[li].biases[j] -
                                             static_cast<real>(lr) * batch_grads[li].biases[j] * scale;
                    l.biases[j] += velocity[li].biases[j];
                }
            }
        }

        // accuracy measured on the updated weights, in fixed sample order
        const std::vector<char> correct = parallel_map<char>(samples.size(), jobs, [&](size_t i) {
            const Tensor3 hm = net_forward(net, samples[i].patch);
            double mean = 0.0;
            for (real v : hm.data) mean += static_cast<double>(v);
            mean /= static_cast<double>(hm.data.size());
            return static_cast<char>((mean >= 0.5) == (samples[i].label == 1));
        });
        for (char c : correct) n_correct += static_cast<size_t>(c);

        if (log)
            log->push_back({epoch, epoch_loss / static_cast<double>(samples.size()),
                            static_cast<double>(n_correct) / static_cast<double>(samples.size())});
    }
    return net;
}

std::vector<TrainSample> mine_hard_examples(const NetworkSpec& model_stage,
                                            const std::vector<AnnotatedImage>& annotated,
                                            const std::vector<AnnotatedImage>& backgrounds,
                                            const StageDetector& prev_stage,
                                            const MiningConfig& cfg) {
    model_stage.validate();
    const int window = net_geometry(model_stage).window;

    auto pad_patch = [&](const AnnotatedImage& img, const Box& b) {
        const Box padded = clamp_box(scale_about_center(b, 1.0 + cfg.context_pad),
                                     img.image.width, img.image.height);
        return extract_patch(img.image, padded, window);
    };

    const std::vector<std::vector<TrainSample>> from_annotated =
        parallel_map<std::vector<TrainSample>>(annotated.size(), cfg.jobs, [&](size_t i) {
            const AnnotatedImage& img = annotated[i];
            std::vector<TrainSample> mined;
            for (const Proposal& p : prev_stage(img)) {
                double best_iou = 0.0;
                for (const Box& gt : img.boxes) best_iou = std::max(best_iou, iou(p.box, gt));
                TrainSample s;
                if (best_iou >= cfg.band_lo && best_iou <= cfg.band_hi) {
                    s.kind = SampleKind::PartialOverlap;
                    s.label = 0;
                } else if (best_iou >= cfg.hard_positive_iou &&
                           p.mean_score < cfg.score_threshold) {
                    s.kind = SampleKind::HardPositive;
                    s.label = 1;
                } else {
                    continue;
                }
                s.patch = pad_patch(img, p.box);
                s.source_image = img.id;
                s.source_box = p.box;
                mined.push_back(std::move(s));
            }
            return mined;
        });

    const std::vector<std::vector<TrainSample>> from_backgrounds =
        parallel_map<std::vector<TrainSample>>(backgrounds.size(), cfg.jobs, [&](size_t i) {
            const AnnotatedImage& img = backgrounds[i];
            std::vector<TrainSample> mined;
            for (const Proposal& p : prev_stage(img)) {
                if (p.mean_score < cfg.score_threshold) continue;
                TrainSample s;
                s.kind = SampleKind::HardNegative;
                s.label = 0;
                s.patch = pad_patch(img, p.box);
                s.source_image = img.id;
                s.source_box = p.box;
                mined.push_back(std::move(s));
            }
            return mined;
        });

    std::vector<TrainSample> out;
    for (const auto& v : from_annotated) out.insert(out.end(), v.begin(), v.end());
    for (const auto& v : from_backgrounds) out.insert(out.end(), v.begin(), v.end());
    return out;
}

std::vector<TrainSample> mix_training_set(const std::vector<TrainSample>& plain,
                                          const std::vector<TrainSample>& mined, uint64_t seed,
                                          double replay_fraction) {
    Rng rng(mix_seed(seed, 0x4D49580ULL));
    std::vector<size_t> plain_order(plain.size());
    for (size_t i = 0; i < plain_order.size(); ++i) plain_order[i] = i;
    rng.shuffle(plain_order);

    const size_t replay_count = static_cast<size_t>(
        std::lround(replay_fraction * static_cast<double>(plain.size())));
    std::vector<TrainSample> out = mined;
    for (size_t i = 0; i < replay_count && i < plain_order.size(); ++i)
        out.push_back(plain[plain_order[i]]);

    // guard against a positive-starved mix
    size_t pos_in_out = 0, plain_pos = 0;
    for (const TrainSample& s : out) pos_in_out += s.label == 1;
    std::vector<size_t> plain_pos_idx;
    for (size_t i : plain_order)
        if (plain[i].label == 1) { ++plain_pos; plain_pos_idx.push_back(i); }
    const size_t target_pos = plain_pos / 2;
    for (size_t i = 0; pos_in_out < target_pos && !plain_pos_idx.empty(); ++i) {
        out.push_back(plain[plain_pos_idx[i % plain_pos_idx.size()]]);
        ++pos_in_out;
    }

    rng.shuffle(out);
    return out;
}

// ---------------------------------------------------------------------------
// synthetic dataset
// ---------------------------------------------------------------------------

namespace {

double hash01(uint64_t a, uint64_t b, uint64_t c) {
    return static_cast<double>(mix_seed(mix_seed(a, b), c) >> 11) * 0x1.0p-53;
}

// bilinear lattice value noise in [0,1]
double value_noise(uint64_t salt, double x, double y, double cell) {
    const double gx = x / cell, gy = y / cell;
    const auto x0 = static_cast<int64_t>(std::floor(gx));
    const auto y0 = static_cast<int64_t>(std::floor(gy));
    const double fx = gx - static_cast<double>(x0), fy = gy - static_cast<double>(y0);
    const double v00 = hash01(salt, static_cast<uint64_t>(x0), static_cast<uint64_t>(y0));
    const double v10 = hash01(salt, static_cast<uint64_t>(x0 + 1), static_cast<uint64_t>(y0));
    const double v01 = hash01(salt, static_cast<uint64_t>(x0), static_cast<uint64_t>(y0 + 1));
    const double v11 = hash01(salt, static_cast<uint64_t>(x0 + 1), static_cast<uint64_t>(y0 + 1));
    return (v00 * (1 - fx) + v10 * fx) * (1 - fy) + (v01 * (1 - fx) + v11 * fx) * fy;
}

void fill_disk(Tensor3& img, double cx, double cy, double r, const double color[3]) {
    const int x0 = std::max(0, static_cast<int>(cx - r) - 1);
    const int x1 = std::min(img.width - 1, static_cast<int>(cx + r) + 1);
    const int y0 = std::max(0, static_cast<int>(cy - r) - 1);
    const int y1 = std::min(img.height - 1, static_cast<int>(cy + r) + 1);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            if (dx * dx + dy * dy <= r * r)
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<real>(color[c]);
        }
}

void fill_ring(Tensor3& img, double cx, double cy, double r_in, double r_out,
               const double color[3]) {
    const int x0 = std::max(0, static_cast<int>(cx - r_out) - 1);
    const int x1 = std::min(img.width - 1, static_cast<int>(cx + r_out) + 1);
    const int y0 = std::max(0, static_cast<int>(cy - r_out) - 1);
    const int y1 = std::min(img.height - 1, static_cast<int>(cy + r_out) + 1);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            const double d2 = dx * dx + dy * dy;
            if (d2 >= r_in * r_in && d2 <= r_out * r_out)
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<real>(color[c]);
        }
}

void fill_rect(Tensor3& img, const Box& b, const double color[3]) {
    const Box cb = clamp_box(b, img.width, img.height);
    for (int y = cb.y; y < cb.y2(); ++y)
        for (int x = cb.x; x < cb.x2(); ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<real>(color[c]);
}

void render_face(Tensor3& img, const Box& b, Rng& rng) {
    const double a = b.w;
    const double cx = b.x + a / 2.0, cy = b.y + a / 2.0;
    const double jit = rng.uniform(-0.03, 0.03);
    const double skin[3] = {0.93 + jit, 0.80 + jit, 0.63 + jit};
    const double dark[3] = {0.06, 0.06, 0.09};
    // concentric structure: dark outer ring around a bright disk
    fill_disk(img, cx, cy, 0.48 * a, dark);
    fill_disk(img, cx, cy, 0.40 * a, skin);
    // eyes
    fill_disk(img, cx - 0.16 * a, cy - 0.11 * a, 0.075 * a, dark);
    fill_disk(img, cx + 0.16 * a, cy - 0.11 * a, 0.075 * a, dark);
    // mouth
    Box mouth;
    mouth.x = static_cast<int>(std::lround(cx - 0.17 * a));
    mouth.y = static_cast<int>(std::lround(cy + 0.17 * a));
    mouth.w = std::max(1, static_cast<int>(std::lround(0.34 * a)));
    mouth.h = std::max(1, static_cast<int>(std::lround(0.07 * a)));
    fill_rect(img, mouth, dark);
}

Tensor3 render_background(int w, int h, Rng& rng, int max_distractors) {
    Tensor3 img(w, h, 3);
    const uint64_t salt_a = rng.next_u64(), salt_b = rng.next_u64();
    double c0[3], c1[3];
    for (int c = 0; c < 3; ++c) {
        c0[c] = rng.uniform(0.15, 0.7);
        c1[c] = rng.uniform(0.15, 0.7);
    }
    const double angle = rng.uniform(0.0, 6.283185307);
    const double gx = std::cos(angle), gy = std::sin(angle);
    const double diag = std::sqrt(static_cast<double>(w) * w + static_cast<double>(h) * h);

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double t = 0.5 + (gx * x + gy * y) / diag * 0.8;
            const double n = 0.12 * (value_noise(salt_a, x, y, 24.0) - 0.5) +
                             0.08 * (value_noise(salt_b, x, y, 7.0) - 0.5);
            for (int c = 0; c < 3; ++c)
                img.at(x, y, c) = static_cast<real>(
                    std::clamp(c0[c] * (1 - t) + c1[c] * t + n, 0.0, 1.0));
        }

    const int n_shapes = rng.uniform_int(max_distractors + 1);
    for (int s = 0; s < n_shapes; ++s) {
        double color[3];
        for (int c = 0; c < 3; ++c) color[c] = rng.uniform(0.05, 0.95);
        const double size = rng.uniform(10.0, 0.45 * std::min(w, h));
        const double cx = rng.uniform(0.0, w), cy = rng.uniform(0.0, h);
        switch (rng.uniform_int(3)) {
            case 0: fill_disk(img, cx, cy, size / 2, color); break;
            case 1: {
                Box b;
                b.x = static_cast<int>(cx - size / 2);
                b.y = static_cast<int>(cy - size / 2);
                b.w = std::max(2, static_cast<int>(size));
                b.h = std::max(2, static_cast<int>(size * rng.uniform(0.5, 1.5)));
                fill_rect(img, b, color);
                break;
            }
            default: fill_ring(img, cx, cy, size * 0.35, size * 0.5, color); break;
        }
    }
    return img;
}

void add_pixel_noise(Tensor3& img, Rng& rng, double amp) {
    for (real& v : img.data)
        v = static_cast<real>(std::clamp(static_cast<double>(v) + rng.uniform(-amp, amp), 0.0, 1.0));
}

}  // namespace

Dataset synth_dataset(uint64_t seed, int n_images, const SynthParams& params) {
    if (n_images < 1) throw std::invalid_argument("synth_dataset: n_images must be >= 1");
    if (params.width < 32 || params.height < 32)
        throw std::invalid_argument("synth_dataset: image dims too small");
    const int short_edge = std::min(params.width, params.height);
    const int max_side = params.max_side > 0
                             ? params.max_side
                             : std::min(300, static_cast<int>(0.6 * short_edge));
    if (max_side < params.min_side)
        throw std::invalid_argument("synth_dataset: max_side < min_side");

    Dataset ds;
    for (int i = 0; i < n_images; ++i) {
        Rng rng(mix_seed(seed, static_cast<uint64_t>(i) + 1));
        AnnotatedImage ai;
        char idbuf[24];
        std::snprintf(idbuf, sizeof idbuf, "img_%05d", i);
        ai.id = idbuf;
        ai.image = render_background(params.width, params.height, rng, params.max_distractors);

        const bool background_only = rng.uniform() < params.background_fraction;
        if (!background_only) {
            const int want = 1 + rng.uniform_int(params.max_faces);
            for (int f = 0; f < want; ++f) {
                for (int attempt = 0; attempt < 40; ++attempt) {
                    // log-uniform side
                    const double u = rng.uniform();
                    const int side = static_cast<int>(std::lround(
                        params.min_side * std::pow(static_cast<double>(max_side) / params.min_side, u)));
                    if (side > params.width - 2 || side > params.height - 2) continue;
                    Box b;
                    b.w = b.h = side;
                    b.x = 1 + rng.uniform_int(params.width - side - 1);
                    b.y = 1 + rng.uniform_int(params.height - side - 1);
                    bool overlaps = false;
                    for (const Box& prev : ai.boxes)
                        if (iou(b, prev) > 0.05 || intersection_area(b, prev) > 0) {
                            overlaps = true;
                            break;
                        }
                    if (overlaps) continue;
                    render_face(ai.image, b, rng);
                    ai.boxes.push_back(b);
                    break;
                }
            }
        }
        add_pixel_noise(ai.image, rng, 0.02);

        if (ai.boxes.empty()) ds.backgrounds.push_back(std::move(ai));
        else ds.annotated.push_back(std::move(ai));
    }
    return ds;
}

}  // namespace fcn
