#ifndef FCN_CONFIG_HPP
#define FCN_CONFIG_HPP

#include <string>

#include "fcn/pyramid.hpp"
#include "fcn/score_map.hpp"
#include "fcn/trainer.hpp"

namespace fcn {

// Whole-app configuration. JSON on disk; unknown keys are rejected so typos
// fail loudly. FCNCASCADE_WORKDIR overrides paths.workdir.
struct AppConfig {
    PyramidConfig pyramid;
    ProposalConfig proposal;
    double stage2_threshold = 0.5;
    double stage3_threshold = 0.7;
    TrainConfig train;
    std::string workdir = ".";

    void validate() const;
};

AppConfig load_config(const std::string& path);
AppConfig parse_config_json(const std::string& text);
std::string config_to_json(const AppConfig& cfg);
void save_config(const AppConfig& cfg, const std::string& path);

// workdir-relative resolution for non-absolute paths
std::string resolve_path(const AppConfig& cfg, const std::string& path);

}  // namespace fcn

#endif
