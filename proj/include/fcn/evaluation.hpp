#ifndef FCN_EVALUATION_HPP
#define FCN_EVALUATION_HPP

#include <optional>
#include <string>
#include <vector>

#include "fcn/box.hpp"

namespace fcn {

// One detection as matched against ground truth.
struct EvalRecord {
    double confidence = 0.0;
    bool true_positive = false;
    std::string image_id;
    int matched_gt = -1;  // index into the image's GT list, -1 when FP
};

struct CurvePoint {
    double threshold = 0.0;
    double x = 0.0;
    double y = 0.0;
};

struct CurveData {
    std::vector<CurvePoint> points;
    double summary = 0.0;  // AP or AUC
};

// Greedy confidence-descending matching: each detection claims the unclaimed
// GT of highest IoU when that IoU >= iou_thresh. Ties in confidence break on
// (image id, box key).
std::vector<EvalRecord> match_detections(const std::vector<Box>& dets,
                                         const std::vector<double>& confidences,
                                         const std::vector<Box>& gts, double iou_thresh,
                                         const std::string& image_id = "");

// Precision/recall sweep over confidence thresholds; summary is the area
// under the step curve, sum of (R_i - R_{i-1}) * P_i over true positives.
CurveData pr_curve(const std::vector<EvalRecord>& records, int total_gt);

// Discrete ROC: x = cumulative false-positive count, y = true-positive rate.
// Summary is the step-curve area normalized by the plotted FP range (the
// flat TPR when there are no false positives at all).
CurveData roc_curve(const std::vector<EvalRecord>& records, int total_gt, int n_images);

// Rectangle-to-ellipse-annotation adaptation: height grows 25% about the box
// center and the center moves up by 10% of the original height. Degenerate
// boxes pass through; bounds are applied when image dims are given.
Box adapt_box_for_ellipse_eval(const Box& det, std::optional<int> img_w = std::nullopt,
                               std::optional<int> img_h = std::nullopt);

}  // namespace fcn

#endif
