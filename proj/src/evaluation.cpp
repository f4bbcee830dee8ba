#include "fcn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fcn {

std::vector<EvalRecord> match_detections(const std::vector<Box>& dets,
                                         const std::vector<double>& confidences,
                                         const std::vector<Box>& gts, double iou_thresh,
                                         const std::string& image_id) {
    if (dets.size() != confidences.size())
        throw std::invalid_argument("match_detections: box/confidence count mismatch");

    std::vector<size_t> order(dets.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (confidences[a] != confidences[b]) return confidences[a] > confidences[b];
        return dets[a].key() < dets[b].key();
    });

    std::vector<bool> claimed(gts.size(), false);
    std::vector<EvalRecord> records;
    records.reserve(dets.size());
    for (size_t idx : order) {
        int best_gt = -1;
        double best_iou = 0.0;
        for (size_t g = 0; g < gts.size(); ++g) {
            if (claimed[g]) continue;
            const double v = iou(dets[idx], gts[g]);
            if (v > best_iou) {
                best_iou = v;
                best_gt = static_cast<int>(g);
            }
        }
        EvalRecord r;
        r.confidence = confidences[idx];
        r.image_id = image_id;
        if (best_gt >= 0 && best_iou >= iou_thresh) {
            r.true_positive = true;
            r.matched_gt = best_gt;
            claimed[static_cast<size_t>(best_gt)] = true;
        }
        records.push_back(r);
    }
    return records;
}

namespace {

// descending confidence, ties on (image id, tp-before-fp) for a stable sweep
std::vector<EvalRecord> sorted_records(std::vector<EvalRecord> records) {
    std::sort(records.begin(), records.end(), [](const EvalRecord& a, const EvalRecord& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        if (a.image_id != b.image_id) return a.image_id < b.image_id;
        return a.true_positive > b.true_positive;
    });
    return records;
}

}  // namespace

CurveData pr_curve(const std::vector<EvalRecord>& records, int total_gt) {
    if (total_gt < 1) throw std::invalid_argument("pr_curve: total_gt must be >= 1");
    const std::vector<EvalRecord> sorted = sorted_records(records);

    CurveData curve;
    int tp = 0, fp = 0;
    double ap = 0.0;
    for (const EvalRecord& r : sorted) {
        if (r.true_positive) ++tp; else ++fp;
        const double precision = static_cast<double>(tp) / (tp + fp);
        const double recall = static_cast<double>(tp) / total_gt;
        if (r.true_positive) ap += precision / total_gt;  // (R_i - R_{i-1}) = 1/total_gt
        curve.points.push_back({r.confidence, recall, precision});
    }
    curve.summary = ap;
    return curve;
}

CurveData roc_curve(const std::vector<EvalRecord>& records, int total_gt, int n_images) {
    if (n_images < 1) throw std::invalid_argument("roc_curve: n_images must be >= 1");
    if (total_gt < 1) throw std::invalid_argument("roc_curve: total_gt must be >= 1");
    const std::vector<EvalRecord> sorted = sorted_records(records);

    CurveData curve;
    int tp = 0, fp = 0;
    for (const EvalRecord& r : sorted) {
        if (r.true_positive) ++tp; else ++fp;
        curve.points.push_back({r.confidence, static_cast<double>(fp),
                                static_cast<double>(tp) / total_gt});
    }

    // area under the (fp, tpr) step curve over [0, fp_max]
    const int fp_max = fp;
    if (fp_max == 0) {
        curve.summary = static_cast<double>(tp) / total_gt;
        return curve;
    }
    double area = 0.0;
    int prev_fp = 0;
    double tpr_at_prev = 0.0;
    for (const CurvePoint& pt : curve.points) {
        const int cur_fp = static_cast<int>(pt.x);
        if (cur_fp > prev_fp) {
            area += static_cast<double>(cur_fp - prev_fp) * tpr_at_prev;
            prev_fp = cur_fp;
        }
        tpr_at_prev = std::max(tpr_at_prev, pt.y);
    }
    curve.summary = area / fp_max;
    return curve;
}

Box adapt_box_for_ellipse_eval(const Box& det, std::optional<int> img_w,
                               std::optional<int> img_h) {
    if (det.w <= 0 || det.h <= 0) return det;
    const double cx = det.x + det.w / 2.0;
    const double cy = det.y + det.h / 2.0 - 0.10 * det.h;
    const double nh = 1.25 * det.h;
    Box out;
    out.x = static_cast<int>(std::lround(cx - det.w / 2.0));
    out.y = static_cast<int>(std::lround(cy - nh / 2.0));
    out.w = det.w;
    out.h = static_cast<int>(std::lround(nh));
    if (img_w && img_h) out = clamp_box(out, *img_w, *img_h);
    return out;
}

}  // namespace fcn
