#include "fcn/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fcn {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, std::initializer_list<const char*> known,
                    const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) { ok = true; break; }
        if (!ok)
            throw std::runtime_error("config: unknown key '" + it.key() + "' in " + where);
    }
}

}  // namespace

void AppConfig::validate() const {
    pyramid.validate();
    proposal.validate();
    train.validate();
    if (stage2_threshold < 0.0 || stage2_threshold > 1.0 ||
        stage3_threshold < 0.0 || stage3_threshold > 1.0)
        throw std::runtime_error("config: stage thresholds must be in [0,1]");
    if (workdir.empty()) throw std::runtime_error("config: workdir must not be empty");
}

AppConfig parse_config_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("config: parse error: ") + e.what());
    }
    if (!j.is_object()) throw std::runtime_error("config: top level must be an object");
    reject_unknown(j, {"pyramid", "proposal", "stages", "train", "paths"}, "top level");

    AppConfig cfg;
    if (j.contains("pyramid")) {
        const json& p = j["pyramid"];
        reject_unknown(p, {"targets"}, "pyramid");
        if (p.contains("targets"))
            cfg.pyramid.target_long_edges = p["targets"].get<std::vector<int>>();
    }
    if (j.contains("proposal")) {
        const json& p = j["proposal"];
        reject_unknown(p, {"threshold", "enlarge_factor", "dedup_iou", "max_proposals"}, "proposal");
        cfg.proposal.threshold = p.value("threshold", cfg.proposal.threshold);
        cfg.proposal.enlarge_factor = p.value("enlarge_factor", cfg.proposal.enlarge_factor);
        cfg.proposal.dedup_iou = p.value("dedup_iou", cfg.proposal.dedup_iou);
        cfg.proposal.max_proposals = p.value("max_proposals", cfg.proposal.max_proposals);
    }
    if (j.contains("stages")) {
        const json& s = j["stages"];
        reject_unknown(s, {"stage2_threshold", "stage3_threshold"}, "stages");
        cfg.stage2_threshold = s.value("stage2_threshold", cfg.stage2_threshold);
        cfg.stage3_threshold = s.value("stage3_threshold", cfg.stage3_threshold);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        reject_unknown(t,
                       {"epochs", "batch_size", "learning_rate", "lr_decay", "momentum",
                        "neg_pos_ratio", "seed", "positives", "negatives"},
                       "train");
        cfg.train.epochs = t.value("epochs", cfg.train.epochs);
        cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
        cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
        cfg.train.lr_decay = t.value("lr_decay", cfg.train.lr_decay);
        cfg.train.momentum = t.value("momentum", cfg.train.momentum);
        cfg.train.neg_pos_ratio = t.value("neg_pos_ratio", cfg.train.neg_pos_ratio);
        cfg.train.seed = t.value("seed", cfg.train.seed);
        cfg.train.positives = t.value("positives", cfg.train.positives);
        cfg.train.negatives = t.value("negatives", cfg.train.negatives);
    }
    if (j.contains("paths")) {
        const json& p = j["paths"];
        reject_unknown(p, {"workdir"}, "paths");
        cfg.workdir = p.value("workdir", cfg.workdir);
    }

    // environment override, paths only
    if (const char* wd = std::getenv("FCNCASCADE_WORKDIR"); wd && *wd) cfg.workdir = wd;

    cfg.validate();
    return cfg;
}

AppConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_config_json(text);
}

std::string config_to_json(const AppConfig& cfg) {
    json j;
    j["pyramid"] = {{"targets", cfg.pyramid.target_long_edges}};
    j["proposal"] = {{"threshold", cfg.proposal.threshold},
                     {"enlarge_factor", cfg.proposal.enlarge_factor},
                     {"dedup_iou", cfg.proposal.dedup_iou},
                     {"max_proposals", cfg.proposal.max_proposals}};
    j["stages"] = {{"stage2_threshold", cfg.stage2_threshold},
                   {"stage3_threshold", cfg.stage3_threshold}};
    j["train"] = {{"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"learning_rate", cfg.train.learning_rate},
                  {"lr_decay", cfg.train.lr_decay},
                  {"momentum", cfg.train.momentum},
                  {"neg_pos_ratio", cfg.train.neg_pos_ratio},
                  {"seed", cfg.train.seed},
                  {"positives", cfg.train.positives},
                  {"negatives", cfg.train.negatives}};
    j["paths"] = {{"workdir", cfg.workdir}};
    return j.dump(2) + "\n";
}

void save_config(const AppConfig& cfg, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << config_to_json(cfg);
}

std::string resolve_path(const AppConfig& cfg, const std::string& path) {
    if (path.empty() || std::filesystem::path(path).is_absolute() || cfg.workdir == ".")
        return path;
    return (std::filesystem::path(cfg.workdir) / path).string();
}

}  // namespace fcn
