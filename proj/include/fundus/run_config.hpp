#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fundus/model.hpp"
#include "fundus/preprocess.hpp"
#include "fundus/train.hpp"

namespace fundus {

/// Every knob of a training or evaluation run. Serialized as flat `key = value` lines;
/// `#` starts a comment.
struct RunConfig {
    TrainConfig train;
    ModelConfig model;
    PreprocessConfig pre;
    int folds = 5;

    [[nodiscard]] static RunConfig defaults_for(Task task);
    /// Network input size implied by the task: disc resolution or cup ROI resolution.
    [[nodiscard]] ModelConfig model_for_task() const;
    void validate() const;
};

struct ConfigKey {
    std::string name;
    std::string origin;  // where the default comes from
};

const std::vector<ConfigKey>& config_keys();

/// Unknown keys and unparsable values throw std::invalid_argument.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source = "config");
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);
std::string get_setting(const RunConfig& cfg, const std::string& key);

/// Full effective configuration, one key per line, annotated with each default's origin.
std::string serialize(const RunConfig& cfg);

}  // namespace fundus
