#pragma once

#include "fishmerge/model.hpp"
#include "fishmerge/train.hpp"

#include <string>

namespace fishmerge {

std::string model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const std::string& text);

std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);

}  // namespace fishmerge
