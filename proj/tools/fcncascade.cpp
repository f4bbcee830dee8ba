// Command-line front end: synth / train / detect / eval / calibrate.
// Exit codes: 0 success, 1 usage, 2 data error, 3 internal error.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fcn/cascade.hpp"
#include "fcn/config.hpp"
#include "fcn/dataset_io.hpp"
#include "fcn/evaluation.hpp"
#include "fcn/image_io.hpp"
#include "fcn/trainer.hpp"
#include "fcn/util.hpp"
#include "fcn/weights_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::string config_path;
    int jobs = 1;
};

fcn::AppConfig load_or_default_config(const std::string& path) {
    if (path.empty()) return fcn::AppConfig{};
    return fcn::load_config(path);
}

// stage-1 proposal generator on one image
fcn::DetectResult stage1_only(const fcn::Tensor3& image, const fcn::NetworkSpec& stage1,
                              const fcn::AppConfig& cfg) {
    const std::vector<fcn::ScaledImage> pyramid = fcn::build_pyramid(image, cfg.pyramid);
    const fcn::StreamsResult streams = fcn::run_streams(stage1, pyramid);
    const fcn::NetGeometry geom = fcn::net_geometry(stage1);
    std::vector<fcn::ScoreMap> maps;
    std::vector<fcn::StreamWindow> windows;
    for (const fcn::StreamOutput& s : streams.streams) {
        maps.push_back(fcn::project_heatmap(s.heatmap, geom, pyramid[s.level_index]));
        windows.push_back(fcn::effective_window(geom, pyramid[s.level_index].scale_factor));
    }
    fcn::DetectResult r;
    r.stage1_proposals = fcn::propose_boxes(fcn::fuse_streams(maps), windows, cfg.proposal);
    r.stage1_count = r.stage1_proposals.size();
    return r;
}

int cmd_synth(uint64_t seed, int count, const std::string& out, const fcn::SynthParams& params) {
    const fcn::Dataset ds = fcn::synth_dataset(seed, count, params);
    fcn::save_dataset(ds, out);
    std::cerr << "synth: " << ds.annotated.size() << " face images, " << ds.backgrounds.size()
              << " backgrounds -> " << out << "\n";
    return 0;
}

void write_train_log(const std::vector<fcn::TrainLogRow>& log, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "epoch,loss,train_acc\n";
    char buf[96];
    for (const fcn::TrainLogRow& r : log) {
        std::snprintf(buf, sizeof buf, "%d,%.9f,%.6f\n", r.epoch, r.loss, r.train_acc);
        os << buf;
    }
}

int cmd_train(int stage, const std::string& data_dir, const CommonArgs& common,
              const std::vector<std::string>& prev_models, const std::string& out_model,
              const std::string& log_path) {
    const fcn::AppConfig cfg = load_or_default_config(common.config_path);
    const fcn::Dataset ds = fcn::load_dataset(data_dir);

    fcn::NetworkSpec net = fcn::default_stage_spec(stage, cfg.train.seed + static_cast<uint64_t>(stage));
    const int window = fcn::net_geometry(net).window;

    std::vector<fcn::TrainSample> samples;
    if (stage == 1) {
        samples = fcn::assemble_stage1_samples(ds.annotated, ds.backgrounds, window, cfg.train);
    } else {
        if (static_cast<int>(prev_models.size()) != stage - 1)
            throw std::runtime_error("train: stage " + std::to_string(stage) + " needs " +
                                     std::to_string(stage - 1) + " --prev-model weight files");
        const fcn::NetworkSpec stage1_net = fcn::load_weights(prev_models[0]);
        fcn::NetworkSpec stage2_net;
        if (stage == 3) stage2_net = fcn::load_weights(prev_models[1]);

        fcn::StageDetector prev = [&](const fcn::AnnotatedImage& img) {
            fcn::DetectResult r = stage1_only(img.image, stage1_net, cfg);
            if (stage == 2) return r.stage1_proposals;
            // rescore through stage 2 without its accept threshold
            return fcn::verify_stage(r.stage1_proposals, stage2_net, img.image, 0.0);
        };

        fcn::MiningConfig mcfg;
        mcfg.score_threshold = stage == 2 ? cfg.stage2_threshold : cfg.stage3_threshold;
        mcfg.jobs = common.jobs;
        const std::vector<fcn::TrainSample> mined =
            fcn::mine_hard_examples(net, ds.annotated, ds.backgrounds, prev, mcfg);
        const std::vector<fcn::TrainSample> plain =
            fcn::assemble_verification_samples(ds.annotated, ds.backgrounds, window, cfg.train);
        std::cerr << "train: stage " << stage << " mined " << mined.size() << " hard samples, "
                  << plain.size() << " plain\n";
        samples = fcn::mix_training_set(plain, mined, cfg.train.seed + 17 * stage);
    }

    std::vector<fcn::TrainLogRow> log;
    net = fcn::train(net, samples, cfg.train, &log, common.jobs);
    fcn::save_weights(net, out_model);
    if (!log_path.empty()) write_train_log(log, log_path);
    if (!log.empty())
        std::cerr << "train: stage " << stage << " final loss " << log.back().loss << " acc "
                  << log.back().train_acc << "\n";
    return 0;
}

std::vector<std::pair<std::string, std::string>> list_images(const std::string& image,
                                                             const std::string& dir) {
    std::vector<std::pair<std::string, std::string>> files;  // (id, path)
    if (!image.empty()) {
        files.emplace_back(fs::path(image).stem().string(), image);
    } else {
        fs::path root(dir);
        if (fs::is_directory(root / "images")) root /= "images";
        for (const auto& e : fs::directory_iterator(root)) {
            if (!e.is_regular_file()) continue;
            const std::string ext = e.path().extension().string();
            if (ext == ".ppm" || ext == ".pgm")
                files.emplace_back(e.path().stem().string(), e.path().string());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw std::runtime_error("detect: no .ppm/.pgm images in " + dir);
    }
    return files;
}

json box_json(const fcn::Box& b) { return json::array({b.x, b.y, b.w, b.h}); }

int cmd_detect(const std::string& model_path, const std::string& image, const std::string& dir,
               const std::string& out, const CommonArgs& common, const std::string& scoremap_dir,
               const std::string& trace_out, const std::string& proposals_out) {
    const fcn::AppConfig cfg = load_or_default_config(common.config_path);
    const fcn::CascadeModel model = fcn::load_model(model_path);
    const auto files = list_images(image, dir);

    struct PerImage {
        std::vector<fcn::DetectionRow> rows;
        std::vector<fcn::DetectionRow> proposals;
        json trace;
    };

    const std::vector<PerImage> results = fcn::parallel_map<PerImage>(
        files.size(), common.jobs, [&](size_t i) {
            const auto& [id, path] = files[i];
            const fcn::Tensor3 img = fcn::read_image(path);
            const fcn::DetectResult r = fcn::detect(img, model, cfg.pyramid);

            PerImage out_i;
            for (const fcn::Detection& d : r.detections)
                out_i.rows.push_back({id, d.box, d.confidence});
            for (const fcn::Proposal& p : r.stage1_proposals)
                out_i.proposals.push_back({id, p.box, p.mean_score});

            out_i.trace["image"] = id;
            out_i.trace["counts"] = json::array({r.stage1_count, r.stage2_count, r.stage3_count});
            json dets = json::array();
            for (const fcn::Detection& d : r.detections) {
                json dj;
                dj["box"] = box_json(d.box);
                dj["confidence"] = d.confidence;
                dj["stage1_box"] = box_json(d.trace.stage1_box);
                dj["stage1_score"] = d.trace.stage1_score;
                dj["stage2_box"] = box_json(d.trace.stage2_box);
                dj["stage2_score"] = d.trace.stage2_score;
                dj["stage3_score"] = d.trace.stage3_score;
                dets.push_back(dj);
            }
            out_i.trace["detections"] = dets;

            if (!scoremap_dir.empty()) {
                const std::vector<fcn::ScaledImage> pyr = fcn::build_pyramid(img, cfg.pyramid);
                const fcn::StreamsResult st = fcn::run_streams(model.stage1, pyr);
                const fcn::NetGeometry geom = fcn::net_geometry(model.stage1);
                std::vector<fcn::ScoreMap> maps;
                for (const fcn::StreamOutput& s : st.streams)
                    maps.push_back(fcn::project_heatmap(s.heatmap, geom, pyr[s.level_index]));
                const fcn::ScoreMap fused = fcn::fuse_streams(maps);
                const std::string tmp = (fs::path(scoremap_dir) / (id + "_scoremap.pgm.tmp")).string();
                fcn::write_scoremap_pgm(fused, tmp);
                fs::rename(tmp, fs::path(scoremap_dir) / (id + "_scoremap.pgm"));
            }
            return out_i;
        });

    std::vector<fcn::DetectionRow> all_rows, all_proposals;
    for (const PerImage& r : results) {
        all_rows.insert(all_rows.end(), r.rows.begin(), r.rows.end());
        all_proposals.insert(all_proposals.end(), r.proposals.begin(), r.proposals.end());
    }
    fcn::write_detections(all_rows, out);
    if (!proposals_out.empty()) fcn::write_detections(all_proposals, proposals_out);
    if (!trace_out.empty()) {
        std::ofstream os(trace_out);
        if (!os) throw std::runtime_error("cannot open for writing: " + trace_out);
        for (const PerImage& r : results) os << r.trace.dump() << "\n";
    }
    std::cerr << "detect: " << all_rows.size() << " detections over " << files.size()
              << " images -> " << out << "\n";
    return 0;
}

void write_curve_csv(const fcn::CurveData& curve, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "threshold,x,y\n";
    char buf[96];
    for (const fcn::CurvePoint& p : curve.points) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f\n", p.threshold, p.x, p.y);
        os << buf;
    }
}

int cmd_eval(const std::string& dets_path, const std::string& ann_path, bool fddb_adapt,
             const std::string& out_prefix, double iou_thresh) {
    const std::vector<fcn::DetectionRow> rows = fcn::read_detections(dets_path);
    const std::map<std::string, fcn::ImageAnnotation> ann = fcn::load_annotations(ann_path);

    std::map<std::string, std::vector<size_t>> by_image;
    for (size_t i = 0; i < rows.size(); ++i) by_image[rows[i].image_id].push_back(i);

    std::vector<fcn::EvalRecord> records;
    int total_gt = 0;
    for (const auto& [id, ia] : ann) total_gt += static_cast<int>(ia.boxes.size());
    if (total_gt < 1) throw std::runtime_error("eval: annotations contain no boxes");

    for (const auto& [id, idxs] : by_image) {
        const auto it = ann.find(id);
        if (it == ann.end())
            throw std::runtime_error("eval: detections reference unknown image '" + id + "'");
        std::vector<fcn::Box> boxes;
        std::vector<double> confs;
        for (size_t i : idxs) {
            fcn::Box b = rows[i].box;
            if (fddb_adapt)
                b = it->second.width > 0
                        ? fcn::adapt_box_for_ellipse_eval(b, it->second.width, it->second.height)
                        : fcn::adapt_box_for_ellipse_eval(b);
            boxes.push_back(b);
            confs.push_back(rows[i].confidence);
        }
        const std::vector<fcn::EvalRecord> recs =
            fcn::match_detections(boxes, confs, it->second.boxes, iou_thresh, id);
        records.insert(records.end(), recs.begin(), recs.end());
    }

    const fcn::CurveData pr = fcn::pr_curve(records, total_gt);
    const fcn::CurveData roc = fcn::roc_curve(records, total_gt, static_cast<int>(ann.size()));
    write_curve_csv(pr, out_prefix + "_pr.csv");
    write_curve_csv(roc, out_prefix + "_roc.csv");

    json summary;
    summary["ap"] = pr.summary;
    summary["auc"] = roc.summary;
    summary["n_images"] = ann.size();
    summary["n_gt"] = total_gt;
    std::ofstream os(out_prefix + "_summary.json");
    if (!os) throw std::runtime_error("cannot open for writing: " + out_prefix + "_summary.json");
    os << summary.dump(2) << "\n";
    std::cout << summary.dump() << "\n";
    return 0;
}

double lower_quantile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const auto idx = static_cast<size_t>(q * static_cast<double>(v.size() - 1));
    return v[idx];
}

int cmd_calibrate(const std::string& model_path, const std::string& data_dir, double target_recall,
                  const CommonArgs& common, const std::string& out_config) {
    fcn::AppConfig cfg = load_or_default_config(common.config_path);
    const fcn::CascadeModel model = fcn::load_model(model_path);
    const fcn::Dataset ds = fcn::load_dataset(data_dir);
    if (ds.annotated.empty()) throw std::runtime_error("calibrate: no annotated images");

    // 1) stage-1 omega-per-area threshold: per GT, the best candidate density
    //    among candidates overlapping it at IoU >= 0.5.
    fcn::ProposalConfig open_cfg = cfg.proposal;
    open_cfg.threshold = 0.0;
    open_cfg.dedup_iou = 1.0;
    open_cfg.max_proposals = 1 << 20;
    fcn::AppConfig open_app = cfg;
    open_app.proposal = open_cfg;

    std::vector<double> gt_densities;
    for (const fcn::AnnotatedImage& img : ds.annotated) {
        const fcn::DetectResult r = stage1_only(img.image, model.stage1, open_app);
        for (const fcn::Box& gt : img.boxes) {
            double best = 0.0;
            for (const fcn::Proposal& p : r.stage1_proposals)
                if (fcn::iou(p.box, gt) >= 0.5)
                    best = std::max(best, p.omega / static_cast<double>(p.box.area()));
            gt_densities.push_back(best);
        }
    }
    const double omega_thr = 0.95 * lower_quantile(gt_densities, 1.0 - target_recall);
    cfg.proposal.threshold = std::max(1e-6, omega_thr);

    // 2) stage thresholds from peak scores on face regions that reach them
    fcn::AppConfig run_app = cfg;
    std::vector<double> s2_scores, s3_scores;
    for (const fcn::AnnotatedImage& img : ds.annotated) {
        fcn::DetectResult r = stage1_only(img.image, model.stage1, run_app);
        const std::vector<fcn::Proposal> v2 =
            fcn::verify_stage(r.stage1_proposals, model.stage2, img.image, 0.0);
        for (const fcn::Proposal& p : v2)
            for (const fcn::Box& gt : img.boxes)
                if (fcn::iou(p.box, gt) >= 0.5) { s2_scores.push_back(p.mean_score); break; }
        const std::vector<fcn::Proposal> v3 = fcn::verify_stage(v2, model.stage3, img.image, 0.0);
        for (const fcn::Proposal& p : v3)
            for (const fcn::Box& gt : img.boxes)
                if (fcn::iou(p.box, gt) >= 0.5) { s3_scores.push_back(p.mean_score); break; }
    }
    cfg.stage2_threshold =
        std::clamp(0.95 * lower_quantile(s2_scores, 1.0 - target_recall), 0.05, 0.9);
    cfg.stage3_threshold =
        std::clamp(0.95 * lower_quantile(s3_scores, 1.0 - target_recall), 0.05, 0.9);

    fcn::save_config(cfg, out_config);
    std::cerr << "calibrate: omega threshold " << cfg.proposal.threshold << ", stage2 "
              << cfg.stage2_threshold << ", stage3 " << cfg.stage3_threshold << " -> "
              << out_config << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-scale FCN cascade face detector"};
    app.require_subcommand(1);

    CommonArgs common;

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    uint64_t synth_seed = 1;
    int synth_count = 100;
    std::string synth_out;
    fcn::SynthParams params;
    synth->add_option("--seed", synth_seed, "RNG seed");
    synth->add_option("--count", synth_count, "number of images")->required();
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--width", params.width);
    synth->add_option("--height", params.height);
    synth->add_option("--min-side", params.min_side);
    synth->add_option("--max-side", params.max_side);
    synth->add_option("--background-fraction", params.background_fraction);

    // train
    auto* train_cmd = app.add_subcommand("train", "Train one cascade stage");
    int train_stage = 1;
    std::string train_data, out_model, train_log;
    std::vector<std::string> prev_models;
    train_cmd->add_option("--stage", train_stage, "stage 1, 2 or 3")
        ->required()->check(CLI::Range(1, 3));
    train_cmd->add_option("--data", train_data, "dataset directory")->required();
    train_cmd->add_option("--config", common.config_path, "config JSON");
    train_cmd->add_option("--out-model", out_model, "output weight file")->required();
    train_cmd->add_option("--prev-model", prev_models, "previous-stage weight files, in order");
    train_cmd->add_option("--log", train_log, "training log CSV");
    train_cmd->add_option("--jobs", common.jobs, "worker threads");

    // detect
    auto* detect_cmd = app.add_subcommand("detect", "Run the cascade on images");
    std::string det_model, det_image, det_dir, det_out, det_scoremaps, det_traces, det_proposals;
    detect_cmd->add_option("--model", det_model, "model manifest JSON")->required();
    detect_cmd->add_option("--image", det_image, "single image");
    detect_cmd->add_option("--dir", det_dir, "image directory");
    detect_cmd->add_option("--out", det_out, "detections text file")->required();
    detect_cmd->add_option("--config", common.config_path, "config JSON");
    detect_cmd->add_option("--dump-scoremap", det_scoremaps, "directory for score-map PGMs");
    detect_cmd->add_option("--trace-out", det_traces, "per-image trace JSONL");
    detect_cmd->add_option("--proposals-out", det_proposals, "stage-1 proposals text file");
    detect_cmd->add_option("--jobs", common.jobs, "worker threads");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Score detections against annotations");
    std::string eval_dets, eval_ann, eval_prefix;
    bool fddb_adapt = false;
    double eval_iou = 0.5;
    eval_cmd->add_option("--dets", eval_dets, "detections text file")->required();
    eval_cmd->add_option("--ann", eval_ann, "annotations JSONL")->required();
    eval_cmd->add_flag("--fddb-adapt", fddb_adapt, "apply the ellipse box adaptation");
    eval_cmd->add_option("--out-prefix", eval_prefix, "output prefix")->required();
    eval_cmd->add_option("--iou", eval_iou, "matching IoU threshold");

    // calibrate
    auto* cal_cmd = app.add_subcommand("calibrate", "Derive omega/stage thresholds");
    std::string cal_model, cal_data, cal_out;
    double target_recall = 0.99;
    cal_cmd->add_option("--model", cal_model, "model manifest JSON")->required();
    cal_cmd->add_option("--data", cal_data, "validation dataset directory")->required();
    cal_cmd->add_option("--target-recall", target_recall, "recall to preserve");
    cal_cmd->add_option("--config", common.config_path, "config JSON");
    cal_cmd->add_option("--out-config", cal_out, "output config JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_seed, synth_count, synth_out, params);
        if (train_cmd->parsed())
            return cmd_train(train_stage, train_data, common, prev_models, out_model, train_log);
        if (detect_cmd->parsed()) {
            if (det_image.empty() == det_dir.empty()) {
                std::cerr << "detect: exactly one of --image / --dir required\n";
                return 1;
            }
            return cmd_detect(det_model, det_image, det_dir, det_out, common, det_scoremaps,
                              det_traces, det_proposals);
        }
        if (eval_cmd->parsed())
            return cmd_eval(eval_dets, eval_ann, fddb_adapt, eval_prefix, eval_iou);
        if (cal_cmd->parsed())
            return cmd_calibrate(cal_model, cal_data, target_recall, common, cal_out);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
