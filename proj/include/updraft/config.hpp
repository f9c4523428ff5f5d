#pragma once

#include "json.hpp"

#include "updraft/model.hpp"

namespace updraft {

// JSON converters for the config-file and checkpoint surfaces.

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const HyperSpace& space);
HyperSpace hyper_space_from_json(const nlohmann::json& j);

} // namespace updraft
