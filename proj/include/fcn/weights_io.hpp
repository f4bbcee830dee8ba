#ifndef FCN_WEIGHTS_IO_HPP
#define FCN_WEIGHTS_IO_HPP

#include <string>

#include "fcn/net.hpp"

namespace fcn {

// Binary weight file, little-endian:
//   magic "FCNW", version u32 (=1), name length u32 + bytes, layer count u32,
//   then per layer: kind u32, kernel u32, stride u32, padding u32,
//   in_channels u32, out_channels u32, weight count u64 + f64 values,
//   bias count u64 + f64 values.
void save_weights(const NetworkSpec& net, const std::string& path);
NetworkSpec load_weights(const std::string& path);

// JSON mirror of the same content, for human inspection.
void save_weights_json(const NetworkSpec& net, const std::string& path);
NetworkSpec load_weights_json(const std::string& path);

}  // namespace fcn

#endif
