#ifndef FCN_CASCADE_HPP
#define FCN_CASCADE_HPP

#include <string>
#include <vector>

#include "fcn/box.hpp"
#include "fcn/net.hpp"
#include "fcn/pyramid.hpp"
#include "fcn/score_map.hpp"

namespace fcn {

// Three-stage detector: proposal FCN plus two zoom-in verification FCNs of
// nondecreasing capacity.
struct CascadeModel {
    NetworkSpec stage1;
    NetworkSpec stage2;
    NetworkSpec stage3;
    double stage2_threshold = 0.5;
    double stage3_threshold = 0.7;
    ProposalConfig proposal;

    void validate() const;
};

// Per-stage history of one surviving detection.
struct DetectionTrace {
    Box stage1_box;
    double stage1_score = 0.0;  // proposal mean score
    Box stage2_box;
    double stage2_score = 0.0;  // peak heatmap score
    Box stage3_box;
    double stage3_score = 0.0;
};

struct Detection {
    Box box;
    double confidence = 0.0;  // stage-3 peak score
    DetectionTrace trace;
};

struct DetectResult {
    std::vector<Detection> detections;              // confidence-descending
    std::vector<Proposal> stage1_proposals;
    size_t stage1_count = 0;
    size_t stage2_count = 0;
    size_t stage3_count = 0;
};

// Zoom-in verification: each proposal's box is context-padded by
// `context_pad`, cropped, resized so its shorter edge equals the net's
// window, and re-scored. Proposals whose peak heatmap score is below
// `threshold` are dropped; survivors get the omega-argmax refined box inside
// the padded region (never outside it).
std::vector<Proposal> verify_stage(const std::vector<Proposal>& proposals, const NetworkSpec& net,
                                   const Tensor3& image, double threshold,
                                   double context_pad = 0.25);

// Full pipeline: pyramid -> shared-parameter streams -> fused score map ->
// proposals -> two verification stages. Duplicate survivors are suppressed
// after each verification with the proposal dedup IoU.
DetectResult detect(const Tensor3& image, const CascadeModel& model, const PyramidConfig& pyramid);

// Manifest JSON naming the three weight files (relative to the manifest) and
// thresholds; weights in the binary format. load(save(m)) is bit-identical.
void save_model(const CascadeModel& model, const std::string& manifest_path);
CascadeModel load_model(const std::string& manifest_path);

// Desk-scale stage architectures (stage 1: 2 conv + head, window 30;
// stage 2: 4 conv + head, window 34; stage 3: 5 conv + head, window 38).
// Weights initialized from the seed.
NetworkSpec default_stage_spec(int stage, uint64_t seed);

}  // namespace fcn

#endif
