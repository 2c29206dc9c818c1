#pragma once

#include <string>

#include "ergl/train_config.hpp"

namespace ergl {

// Flat sectioned key = value text ([train] / [model] sections). Unknown keys,
// bad values and malformed lines raise ConfigError with the line number.
TrainConfig parse_config_file(const std::string& path);
TrainConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");

// JSON snapshot used inside checkpoints; stable key order.
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

}  // namespace ergl
