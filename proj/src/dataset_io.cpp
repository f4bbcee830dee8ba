#include "fcn/dataset_io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "fcn/image_io.hpp"

namespace fcn {

namespace fs = std::filesystem;
using nlohmann::json;

void save_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "images");

    std::vector<const AnnotatedImage*> all;
    for (const AnnotatedImage& a : ds.annotated) all.push_back(&a);
    for (const AnnotatedImage& a : ds.backgrounds) all.push_back(&a);
    std::sort(all.begin(), all.end(),
              [](const AnnotatedImage* a, const AnnotatedImage* b) { return a->id < b->id; });

    std::ofstream ann(fs::path(dir) / "annotations.jsonl");
    if (!ann) throw std::runtime_error("cannot write annotations in " + dir);
    for (const AnnotatedImage* a : all) {
        write_image(a->image, (fs::path(dir) / "images" / (a->id + ".ppm")).string());
        json row;
        row["image"] = a->id;
        row["width"] = a->image.width;
        row["height"] = a->image.height;
        json boxes = json::array();
        for (const Box& b : a->boxes) boxes.push_back({b.x, b.y, b.w, b.h});
        row["boxes"] = boxes;
        ann << row.dump() << "\n";
    }
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream ann(fs::path(dir) / "annotations.jsonl");
    if (!ann) throw std::runtime_error("cannot open annotations.jsonl in " + dir);

    Dataset ds;
    std::string line;
    size_t lineno = 0;
    while (std::getline(ann, line)) {
        ++lineno;
        if (line.empty()) continue;
        json row;
        try {
            row = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error("bad annotation line " + std::to_string(lineno) + ": " +
                                     e.what());
        }
        AnnotatedImage a;
        a.id = row.at("image").get<std::string>();
        a.image = read_image((fs::path(dir) / "images" / (a.id + ".ppm")).string());
        for (const auto& jb : row.at("boxes")) {
            if (!jb.is_array() || jb.size() != 4)
                throw std::runtime_error("bad box on annotation line " + std::to_string(lineno));
            a.boxes.push_back(Box{jb[0].get<int>(), jb[1].get<int>(), jb[2].get<int>(),
                                  jb[3].get<int>()});
        }
        if (a.boxes.empty()) ds.backgrounds.push_back(std::move(a));
        else ds.annotated.push_back(std::move(a));
    }
    return ds;
}

void write_detections(const std::vector<DetectionRow>& rows, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    char buf[64];
    for (const DetectionRow& r : rows) {
        std::snprintf(buf, sizeof buf, " %d %d %d %d %.6f", r.box.x, r.box.y, r.box.w, r.box.h,
                      r.confidence);
        os << r.image_id << buf << "\n";
    }
}

std::vector<DetectionRow> read_detections(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open detections: " + path);
    std::vector<DetectionRow> rows;
    DetectionRow r;
    while (is >> r.image_id >> r.box.x >> r.box.y >> r.box.w >> r.box.h >> r.confidence)
        rows.push_back(r);
    if (!is.eof() && is.fail() && !rows.empty())
        throw std::runtime_error("malformed detection line in " + path);
    return rows;
}

std::map<std::string, ImageAnnotation> load_annotations(const std::string& jsonl_path) {
    std::ifstream ann(jsonl_path);
    if (!ann) throw std::runtime_error("cannot open annotations: " + jsonl_path);
    std::map<std::string, ImageAnnotation> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(ann, line)) {
        ++lineno;
        if (line.empty()) continue;
        json row;
        try {
            row = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error("bad annotation line " + std::to_string(lineno) + ": " +
                                     e.what());
        }
        ImageAnnotation ia;
        ia.width = row.value("width", 0);
        ia.height = row.value("height", 0);
        for (const auto& jb : row.at("boxes"))
            ia.boxes.push_back(Box{jb[0].get<int>(), jb[1].get<int>(), jb[2].get<int>(),
                                   jb[3].get<int>()});
        out[row.at("image").get<std::string>()] = std::move(ia);
    }
    return out;
}

}  // namespace fcn
