#include "fcn/score_map.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fcn {

void ProposalConfig::validate() const {
    if (threshold < 0)
        throw std::invalid_argument("proposal: threshold must be >= 0");
    if (enlarge_factor < 1.0 || enlarge_factor > 3.0)
        throw std::invalid_argument("proposal: enlarge_factor must be in [1, 3]");
    if (dedup_iou <= 0.0 || dedup_iou > 1.0)
        throw std::invalid_argument("proposal: dedup_iou must be in (0, 1]");
    if (max_proposals < 1)
        throw std::invalid_argument("proposal: max_proposals must be >= 1");
}

StreamWindow effective_window(const NetGeometry& geom, double scale_factor) {
    StreamWindow sw;
    sw.window = std::max(1, static_cast<int>(std::lround(geom.window / scale_factor)));
    sw.stride = std::max(1, static_cast<int>(std::lround(geom.stride / scale_factor)));
    return sw;
}

Box project_field(const NetGeometry& geom, const ScaledImage& level, int cell_x, int cell_y) {
    const double sf = level.scale_factor;
    // clamp in level coordinates first, then map through 1/sf
    const int lx0 = std::max(0, geom.offset + cell_x * geom.stride);
    const int ly0 = std::max(0, geom.offset + cell_y * geom.stride);
    const int lx1 = std::min(level.tensor.width, geom.offset + cell_x * geom.stride + geom.window);
    const int ly1 = std::min(level.tensor.height, geom.offset + cell_y * geom.stride + geom.window);
    if (lx1 <= lx0 || ly1 <= ly0) return Box{0, 0, 0, 0};
    int ox0 = static_cast<int>(std::lround(lx0 / sf));
    int oy0 = static_cast<int>(std::lround(ly0 / sf));
    int ox1 = static_cast<int>(std::lround(lx1 / sf));
    int oy1 = static_cast<int>(std::lround(ly1 / sf));
    ox0 = std::clamp(ox0, 0, level.original_width);
    ox1 = std::clamp(ox1, 0, level.original_width);
    oy0 = std::clamp(oy0, 0, level.original_height);
    oy1 = std::clamp(oy1, 0, level.original_height);
    return Box{ox0, oy0, ox1 - ox0, oy1 - oy0};
}

ScoreMap project_heatmap(const Tensor3& heatmap, const NetGeometry& geom, const ScaledImage& level,
                         std::vector<double>* sum_out, std::vector<int>* cover_out) {
    if (heatmap.depth != 1)
        throw std::invalid_argument("project_heatmap: heatmap depth must be 1");
    const int last_origin = geom.offset + (heatmap.width - 1) * geom.stride;
    const int last_origin_y = geom.offset + (heatmap.height - 1) * geom.stride;
    if (last_origin >= level.tensor.width || last_origin_y >= level.tensor.height)
        throw std::invalid_argument("project_heatmap: heatmap dims inconsistent with geometry on level dims");

    const int W = level.original_width, H = level.original_height;
    std::vector<double> sum(static_cast<size_t>(W) * H, 0.0);
    std::vector<int> cover(static_cast<size_t>(W) * H, 0);

    for (int i = 0; i < heatmap.height; ++i) {
        for (int j = 0; j < heatmap.width; ++j) {
            const double p = heatmap.at(j, i, 0);
            const Box f = project_field(geom, level, j, i);
            for (int y = f.y; y < f.y2(); ++y) {
                double* srow = sum.data() + static_cast<size_t>(y) * W;
                int* crow = cover.data() + static_cast<size_t>(y) * W;
                for (int x = f.x; x < f.x2(); ++x) {
                    srow[x] += p;
                    crow[x] += 1;
                }
            }
        }
    }

    ScoreMap map(W, H, 1);
    for (size_t k = 0; k < sum.size(); ++k)
        map.values[k] = cover[k] > 0 ? sum[k] / cover[k] : 0.0;
    if (sum_out) *sum_out = std::move(sum);
    if (cover_out) *cover_out = std::move(cover);
    return map;
}

ScoreMap fuse_streams(const std::vector<ScoreMap>& maps) {
    if (maps.empty()) throw std::invalid_argument("fuse_streams: no maps");
    ScoreMap out(maps[0].width, maps[0].height, 0);
    for (const ScoreMap& m : maps) {
        if (m.width != out.width || m.height != out.height)
            throw std::invalid_argument("fuse_streams: score map dims mismatch");
        for (size_t k = 0; k < out.values.size(); ++k) out.values[k] += m.values[k];
        out.contributing_streams += m.contributing_streams;
    }
    return out;
}

IntegralImage integral_image(const ScoreMap& map) {
    IntegralImage ii;
    ii.width = map.width;
    ii.height = map.height;
    const int w1 = map.width + 1;
    ii.table.assign(static_cast<size_t>(w1) * (map.height + 1), 0.0);
    for (int y = 0; y < map.height; ++y) {
        double rowsum = 0.0;
        for (int x = 0; x < map.width; ++x) {
            rowsum += map.at(x, y);
            ii.table[static_cast<size_t>(y + 1) * w1 + (x + 1)] =
                ii.table[static_cast<size_t>(y) * w1 + (x + 1)] + rowsum;
        }
    }
    return ii;
}

double box_score(const IntegralImage& table, const Box& box) {
    if (box.x < 0 || box.y < 0 || box.x2() > table.width || box.y2() > table.height)
        throw std::invalid_argument("box_score: box out of bounds");
    if (box.w < 1 || box.h < 1)
        throw std::invalid_argument("box_score: box area must be >= 1");
    const double m = table.mass(box);
    return m * (m / static_cast<double>(box.area()));
}

std::vector<size_t> greedy_suppress(const std::vector<Box>& boxes,
                                    const std::vector<double>& scores, double iou_thresh) {
    std::vector<size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return boxes[a].key() < boxes[b].key();
    });
    std::vector<size_t> kept;
    for (size_t idx : order) {
        bool suppressed = false;
        for (size_t k : kept) {
            if (iou(boxes[idx], boxes[k]) >= iou_thresh) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(idx);
    }
    return kept;
}

std::vector<Proposal> propose_boxes(const ScoreMap& map, const std::vector<StreamWindow>& streams,
                                    const ProposalConfig& cfg) {
    cfg.validate();
    if (map.contributing_streams < 1)
        throw std::invalid_argument("propose_boxes: map has no contributing streams");

    ScoreMap normalized = map;
    if (map.contributing_streams > 1)
        for (double& v : normalized.values) v /= map.contributing_streams;
    const IntegralImage table = integral_image(normalized);

    std::vector<Proposal> candidates;
    for (const StreamWindow& sw : streams) {
        const int win = sw.window, step = std::max(1, sw.stride);
        if (win < 1 || win > map.width || win > map.height) continue;
        std::vector<int> xs, ys;
        for (int x = 0; x + win <= map.width; x += step) xs.push_back(x);
        if (xs.empty() || xs.back() != map.width - win) xs.push_back(map.width - win);
        for (int y = 0; y + win <= map.height; y += step) ys.push_back(y);
        if (ys.empty() || ys.back() != map.height - win) ys.push_back(map.height - win);

        for (int y : ys) {
            for (int x : xs) {
                Box b = scale_about_center(Box{x, y, win, win}, cfg.enlarge_factor);
                b = clamp_box(b, map.width, map.height);
                if (b.w < 1 || b.h < 1) continue;
                const double m = table.mass(b);
                const double omega = m * (m / static_cast<double>(b.area()));
                if (omega < cfg.threshold * static_cast<double>(b.area())) continue;
                Proposal p;
                p.box = b;
                p.omega = omega;
                p.mean_score = m / static_cast<double>(b.area());
                p.source_stage = 1;
                candidates.push_back(p);
            }
        }
    }

    std::vector<Box> boxes(candidates.size());
    std::vector<double> omegas(candidates.size());
    for (size_t i = 0; i < candidates.size(); ++i) {
        boxes[i] = candidates[i].box;
        omegas[i] = candidates[i].omega;
    }
    const std::vector<size_t> kept = greedy_suppress(boxes, omegas, cfg.dedup_iou);

    std::vector<Proposal> out;
    for (size_t idx : kept) {
        out.push_back(candidates[idx]);
        if (static_cast<int>(out.size()) >= cfg.max_proposals) break;
    }
    return out;
}

std::pair<Box, double> refine_box_by_omega(const ScoreMap& map) {
    const IntegralImage table = integral_image(map);
    const int m = std::min(map.width, map.height);
    Box best{0, 0, std::max(1, m), std::max(1, m)};
    double best_omega = -1.0;

    constexpr int kSizes = 6;
    for (int si = 0; si < kSizes; ++si) {
        const double frac = 0.5 * std::pow(2.0, static_cast<double>(si) / (kSizes - 1));
        const int side = std::max(4, std::min(m, static_cast<int>(std::lround(m * frac))));
        const int step = std::max(1, side / 10);
        std::vector<int> xs, ys;
        for (int x = 0; x + side <= map.width; x += step) xs.push_back(x);
        if (xs.empty() || xs.back() != map.width - side) xs.push_back(map.width - side);
        for (int y = 0; y + side <= map.height; y += step) ys.push_back(y);
        if (ys.empty() || ys.back() != map.height - side) ys.push_back(map.height - side);
        for (int y : ys) {
            for (int x : xs) {
                const Box b{x, y, side, side};
                const double mass = table.mass(b);
                const double omega = mass * (mass / static_cast<double>(b.area()));
                if (omega > best_omega || (omega == best_omega && b.key() < best.key())) {
                    best_omega = omega;
                    best = b;
                }
            }
        }
    }
    return {best, best_omega};
}

}  // namespace fcn
