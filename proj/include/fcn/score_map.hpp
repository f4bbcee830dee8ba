#ifndef FCN_SCORE_MAP_HPP
#define FCN_SCORE_MAP_HPP

#include <vector>

#include "fcn/box.hpp"
#include "fcn/net.hpp"
#include "fcn/pyramid.hpp"

namespace fcn {

// Per-pixel face score at original image resolution. Each contributing
// stream adds at most 1 per pixel.
struct ScoreMap {
    int width = 0;
    int height = 0;
    int contributing_streams = 0;
    std::vector<double> values;  // row-major, width * height

    ScoreMap() = default;
    ScoreMap(int w, int h, int streams)
        : width(w), height(h), contributing_streams(streams),
          values(static_cast<size_t>(w) * h, 0.0) {}

    double& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
    double at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
};

// Summed-area table, (W+1) x (H+1) with zero first row/column; any rectangle
// mass costs 4 lookups.
struct IntegralImage {
    int width = 0;   // of the source map
    int height = 0;
    std::vector<double> table;  // (width+1) * (height+1)

    double entry(int x, int y) const { return table[static_cast<size_t>(y) * (width + 1) + x]; }
    // total score inside the box
    double mass(const Box& b) const {
        return entry(b.x2(), b.y2()) - entry(b.x, b.y2()) - entry(b.x2(), b.y) + entry(b.x, b.y);
    }
};

struct Proposal {
    Box box;
    double omega = 0.0;       // mass * mass / area on the normalized map
    double mean_score = 0.0;  // mass / area, in [0, contributing_streams]
    int source_stage = 1;
};

struct ProposalConfig {
    // Omega per unit box area (equivalently squared mean score); a candidate
    // is kept when omega >= threshold * area.
    double threshold = 0.25;
    double enlarge_factor = 1.2;
    double dedup_iou = 0.5;
    int max_proposals = 50;

    void validate() const;
};

// Effective candidate grid of one stream in original-image coordinates.
struct StreamWindow {
    int window = 0;
    int stride = 1;
};

StreamWindow effective_window(const NetGeometry& geom, double scale_factor);

// Back-projects a heatmap to original resolution: every cell adds its score
// to each pixel of its receptive field mapped through 1/scale_factor, then
// each pixel is divided by the number of covering fields. sum_out/cover_out,
// when given, receive the pre-normalization accumulators.
ScoreMap project_heatmap(const Tensor3& heatmap, const NetGeometry& geom, const ScaledImage& level,
                         std::vector<double>* sum_out = nullptr,
                         std::vector<int>* cover_out = nullptr);

// Receptive field of heatmap cell (i, j) in original-image pixels (clamped).
Box project_field(const NetGeometry& geom, const ScaledImage& level, int cell_x, int cell_y);

// Elementwise sum; contributing_streams accumulates.
ScoreMap fuse_streams(const std::vector<ScoreMap>& maps);

IntegralImage integral_image(const ScoreMap& map);

// Eq mass * (mass / area) box score, 4 table lookups.
double box_score(const IntegralImage& table, const Box& box);

// Candidate windows per stream, enlarged, thresholded on the normalized map,
// greedily deduplicated highest-omega-first, capped, returned omega-descending
// (ties by smaller (y, x, w, h)).
std::vector<Proposal> propose_boxes(const ScoreMap& map, const std::vector<StreamWindow>& streams,
                                    const ProposalConfig& cfg);

// Omega-argmax square window inside the map; used for zoom-in refinement.
// Searches side lengths between min_frac and max_frac of the shorter map
// edge. Returns the best box and its omega.
std::pair<Box, double> refine_box_by_omega(const ScoreMap& map);

// Greedy highest-score-first overlap suppression; keeps input order among
// survivors. `scores` must parallel `boxes`.
std::vector<size_t> greedy_suppress(const std::vector<Box>& boxes,
                                    const std::vector<double>& scores, double iou_thresh);

}  // namespace fcn

#endif
