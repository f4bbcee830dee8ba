#ifndef FCN_IMAGE_IO_HPP
#define FCN_IMAGE_IO_HPP

#include <string>

#include "fcn/score_map.hpp"
#include "fcn/tensor.hpp"

namespace fcn {

// Binary PPM (P6) or PGM (P5), 8-bit. Values scale to [0,1]; grayscale is
// replicated to 3 channels on read. Throws on malformed headers or
// truncated payloads.
Tensor3 read_image(const std::string& path);

// P6 for depth 3, P5 for depth 1. Values clamp to [0,1] and quantize to
// 8 bits, so write . read is the identity within 1/255.
void write_image(const Tensor3& tensor, const std::string& path);

// 16-bit PGM dump of a score map, values mapped linearly onto [0, 65535];
// the map's maximum is recorded in a "# scale <max>" header comment.
void write_scoremap_pgm(const ScoreMap& map, const std::string& path);

// CSV dump: one row per pixel row, comma-separated raw values.
void write_scoremap_csv(const ScoreMap& map, const std::string& path);

}  // namespace fcn

#endif
