#include "fcn/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>

#include <json.hpp>

#include "fcn/weights_io.hpp"

namespace fcn {

void CascadeModel::validate() const {
    stage1.validate();
    stage2.validate();
    stage3.validate();
    if (stage2_threshold < 0.0 || stage2_threshold > 1.0 || stage3_threshold < 0.0 ||
        stage3_threshold > 1.0)
        throw std::invalid_argument("cascade: stage thresholds must be in [0,1]");
    if (stage1.parameter_count() > stage2.parameter_count() ||
        stage2.parameter_count() > stage3.parameter_count())
        throw std::invalid_argument("cascade: stage capacity must be nondecreasing");
    proposal.validate();
}

namespace {

double peak_score(const Tensor3& heatmap) {
    double best = 0.0;
    for (real v : heatmap.data) best = std::max(best, static_cast<double>(v));
    return best;
}

std::vector<Proposal> verify_stage_traced(const std::vector<Proposal>& proposals,
                                          const NetworkSpec& net, const Tensor3& image,
                                          double threshold, double context_pad,
                                          std::vector<size_t>* source_indices) {
    net.validate();
    const NetGeometry geom = net_geometry(net);
    std::vector<Proposal> out;
    if (source_indices) source_indices->clear();

    for (size_t i = 0; i < proposals.size(); ++i) {
        const Proposal& p = proposals[i];
        Box region = clamp_box(scale_about_center(p.box, 1.0 + context_pad),
                               image.width, image.height);
        if (region.w < 2 || region.h < 2) continue;

        const double sv = static_cast<double>(geom.window) / std::min(region.w, region.h);
        int rw, rh;
        if (region.w <= region.h) {
            rw = geom.window;
            rh = std::max(geom.window, static_cast<int>(std::lround(region.h * sv)));
        } else {
            rh = geom.window;
            rw = std::max(geom.window, static_cast<int>(std::lround(region.w * sv)));
        }
        const Tensor3 resized = resize_bilinear(crop_tensor(image, region), rw, rh);
        const Tensor3 heatmap = net_forward(net, resized);
        const double peak = peak_score(heatmap);
        if (peak < threshold) continue;

        ScaledImage level;
        level.tensor = resized;
        level.scale_factor = sv;
        level.original_width = region.w;
        level.original_height = region.h;
        const ScoreMap local = project_heatmap(heatmap, geom, level);
        auto [refined, omega] = refine_box_by_omega(local);
        refined.x += region.x;
        refined.y += region.y;

        Proposal q;
        q.box = clamp_box(refined, image.width, image.height);
        q.omega = omega;
        q.mean_score = peak;
        q.source_stage = std::min(3, p.source_stage + 1);
        out.push_back(q);
        if (source_indices) source_indices->push_back(i);
    }
    return out;
}

// keeps the greedy survivors of boxes ranked by score
template <typename T>
void suppress_in_place(std::vector<T>& items, std::vector<size_t>* sources, double iou_thresh,
                       const std::function<Box(const T&)>& box_of,
                       const std::function<double(const T&)>& score_of) {
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (const T& t : items) {
        boxes.push_back(box_of(t));
        scores.push_back(score_of(t));
    }
    const std::vector<size_t> kept = greedy_suppress(boxes, scores, iou_thresh);
    std::vector<T> out;
    std::vector<size_t> src_out;
    for (size_t idx : kept) {
        out.push_back(items[idx]);
        if (sources) src_out.push_back((*sources)[idx]);
    }
    items = std::move(out);
    if (sources) *sources = std::move(src_out);
}

}  // namespace

std::vector<Proposal> verify_stage(const std::vector<Proposal>& proposals, const NetworkSpec& net,
                                   const Tensor3& image, double threshold, double context_pad) {
    return verify_stage_traced(proposals, net, image, threshold, context_pad, nullptr);
}

DetectResult detect(const Tensor3& image, const CascadeModel& model,
                    const PyramidConfig& pyramid_cfg) {
    model.validate();
    DetectResult result;

    const std::vector<ScaledImage> pyramid = build_pyramid(image, pyramid_cfg);
    const StreamsResult streams = run_streams(model.stage1, pyramid);
    const NetGeometry geom = net_geometry(model.stage1);

    std::vector<ScoreMap> maps;
    std::vector<StreamWindow> windows;
    for (const StreamOutput& s : streams.streams) {
        const ScaledImage& level = pyramid[s.level_index];
        maps.push_back(project_heatmap(s.heatmap, geom, level));
        windows.push_back(effective_window(geom, level.scale_factor));
    }
    const ScoreMap fused = fuse_streams(maps);

    result.stage1_proposals = propose_boxes(fused, windows, model.proposal);
    result.stage1_count = result.stage1_proposals.size();

    std::vector<size_t> src2;
    std::vector<Proposal> s2 = verify_stage_traced(result.stage1_proposals, model.stage2, image,
                                                   model.stage2_threshold, 0.25, &src2);
    suppress_in_place<Proposal>(s2, &src2, model.proposal.dedup_iou,
                                [](const Proposal& p) { return p.box; },
                                [](const Proposal& p) { return p.mean_score; });
    result.stage2_count = s2.size();

    std::vector<size_t> src3;
    std::vector<Proposal> s3 = verify_stage_traced(s2, model.stage3, image,
                                                   model.stage3_threshold, 0.25, &src3);
    suppress_in_place<Proposal>(s3, &src3, model.proposal.dedup_iou,
                                [](const Proposal& p) { return p.box; },
                                [](const Proposal& p) { return p.mean_score; });
    result.stage3_count = s3.size();

    for (size_t i = 0; i < s3.size(); ++i) {
        const Proposal& p3 = s3[i];
        const Proposal& p2 = s2[src3[i]];
        const Proposal& p1 = result.stage1_proposals[src2[src3[i]]];
        Detection d;
        d.box = p3.box;
        d.confidence = p3.mean_score;
        d.trace.stage1_box = p1.box;
        d.trace.stage1_score = p1.mean_score;
        d.trace.stage2_box = p2.box;
        d.trace.stage2_score = p2.mean_score;
        d.trace.stage3_box = p3.box;
        d.trace.stage3_score = p3.mean_score;
        result.detections.push_back(d);
    }
    std::sort(result.detections.begin(), result.detections.end(),
              [](const Detection& a, const Detection& b) {
                  if (a.confidence != b.confidence) return a.confidence > b.confidence;
                  return a.box.key() < b.box.key();
              });
    return result;
}

namespace {

std::string stage_file(const std::string& manifest_path, int stage) {
    std::filesystem::path p(manifest_path);
    std::filesystem::path dir = p.parent_path();
    std::string stem = p.stem().string();
    return (dir / (stem + ".stage" + std::to_string(stage) + ".fcnw")).string();
}

}  // namespace

void save_model(const CascadeModel& model, const std::string& manifest_path) {
    model.validate();
    const std::filesystem::path mp(manifest_path);
    save_weights(model.stage1, stage_file(manifest_path, 1));
    save_weights(model.stage2, stage_file(manifest_path, 2));
    save_weights(model.stage3, stage_file(manifest_path, 3));

    nlohmann::json j;
    j["format"] = "fcncascade-model";
    j["stage1"] = std::filesystem::path(stage_file(manifest_path, 1)).filename().string();
    j["stage2"] = std::filesystem::path(stage_file(manifest_path, 2)).filename().string();
    j["stage3"] = std::filesystem::path(stage_file(manifest_path, 3)).filename().string();
    j["stage2_threshold"] = model.stage2_threshold;
    j["stage3_threshold"] = model.stage3_threshold;
    j["proposal"] = {{"threshold", model.proposal.threshold},
                     {"enlarge_factor", model.proposal.enlarge_factor},
                     {"dedup_iou", model.proposal.dedup_iou},
                     {"max_proposals", model.proposal.max_proposals}};
    std::ofstream os(manifest_path);
    if (!os) throw std::runtime_error("cannot open for writing: " + manifest_path);
    os << j.dump(2) << "\n";
}

CascadeModel load_model(const std::string& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw std::runtime_error("cannot open model manifest: " + manifest_path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("bad model manifest " + manifest_path + ": " + e.what());
    }

    const std::filesystem::path dir = std::filesystem::path(manifest_path).parent_path();
    CascadeModel model;
    NetworkSpec* stages[3] = {&model.stage1, &model.stage2, &model.stage3};
    for (int s = 1; s <= 3; ++s) {
        const std::string key = "stage" + std::to_string(s);
        if (!j.contains(key))
            throw std::runtime_error("model manifest missing " + key + ": " + manifest_path);
        *stages[s - 1] = load_weights((dir / j.at(key).get<std::string>()).string());
    }
    model.stage2_threshold = j.value("stage2_threshold", 0.5);
    model.stage3_threshold = j.value("stage3_threshold", 0.7);
    if (j.contains("proposal")) {
        const auto& p = j.at("proposal");
        model.proposal.threshold = p.value("threshold", model.proposal.threshold);
        model.proposal.enlarge_factor = p.value("enlarge_factor", model.proposal.enlarge_factor);
        model.proposal.dedup_iou = p.value("dedup_iou", model.proposal.dedup_iou);
        model.proposal.max_proposals = p.value("max_proposals", model.proposal.max_proposals);
    }
    model.validate();
    return model;
}

namespace {

LayerSpec conv_layer(LayerKind kind, int k, int in_ch, int out_ch, int stride = 1, int pad = 0) {
    LayerSpec l;
    l.kind = kind;
    l.kernel = k;
    l.stride = stride;
    l.padding = pad;
    l.in_channels = in_ch;
    l.out_channels = out_ch;
    l.weights.assign(static_cast<size_t>(k) * k * in_ch * out_ch, real(0));
    l.biases.assign(static_cast<size_t>(out_ch), real(0));
    return l;
}

LayerSpec pool_layer(int k, int stride) {
    LayerSpec l;
    l.kind = LayerKind::MaxPool;
    l.kernel = k;
    l.stride = stride;
    return l;
}

LayerSpec relu_layer() {
    LayerSpec l;
    l.kind = LayerKind::ReLU;
    return l;
}

}  // namespace

NetworkSpec default_stage_spec(int stage, uint64_t seed) {
    NetworkSpec net;
    switch (stage) {
        case 1:
            net.name = "stage1";
            net.layers = {conv_layer(LayerKind::Conv, 3, 3, 8), relu_layer(), pool_layer(2, 2),
                          conv_layer(LayerKind::Conv, 5, 8, 16), relu_layer(), pool_layer(2, 2),
                          conv_layer(LayerKind::FullyConvHead, 5, 16, 1)};
            break;
        case 2:
            net.name = "stage2";
            net.layers = {conv_layer(LayerKind::Conv, 3, 3, 12), relu_layer(), pool_layer(2, 2),
                          conv_layer(LayerKind::Conv, 3, 12, 16), relu_layer(),
                          conv_layer(LayerKind::Conv, 3, 16, 24), relu_layer(), pool_layer(2, 2),
                          conv_layer(LayerKind::Conv, 3, 24, 32), relu_layer(),
                          conv_layer(LayerKind::FullyConvHead, 4, 32, 1)};
            break;
        case 3:
            net.name = "stage3";
            net.layers = {conv_layer(LayerKind::Conv, 3, 3, 16), relu_layer(), pool_layer(2, 2),
                          conv_layer(LayerKind::Conv, 3, 16, 24), relu_layer(),
                          conv_layer(LayerKind::Conv, 3, 24, 32), relu_layer(), pool_layer(2, 2),
                          conv_layer(LayerKind::Conv, 3, 32, 48), relu_layer(),
                          conv_layer(LayerKind::Conv, 3, 48, 48), relu_layer(),
                          conv_layer(LayerKind::FullyConvHead, 3, 48, 1)};
            break;
        default:
            throw std::invalid_argument("stage must be 1, 2 or 3");
    }
    init_weights(net, seed);
    return net;
}

}  // namespace fcn
