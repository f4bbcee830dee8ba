#ifndef FCN_DATASET_IO_HPP
#define FCN_DATASET_IO_HPP

#include <map>
#include <string>
#include <vector>

#include "fcn/box.hpp"
#include "fcn/trainer.hpp"

namespace fcn {

// On-disk dataset layout:
//   <dir>/images/<id>.ppm
//   <dir>/annotations.jsonl   one {"image","width","height","boxes"} per line
// Background images carry an empty boxes array.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

struct DetectionRow {
    std::string image_id;
    Box box;
    double confidence = 0.0;
};

// Text format, one `image_id x y w h confidence` per line.
void write_detections(const std::vector<DetectionRow>& rows, const std::string& path);
std::vector<DetectionRow> read_detections(const std::string& path);

struct ImageAnnotation {
    std::vector<Box> boxes;
    int width = 0;
    int height = 0;
};

// Ground truth without pixels, keyed by image id.
std::map<std::string, ImageAnnotation> load_annotations(const std::string& jsonl_path);

}  // namespace fcn

#endif
