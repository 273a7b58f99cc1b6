#pragma once

#include <nlohmann/json.hpp>

#include "thbench/stnet.hpp"

namespace thbench::stnet {

void to_json(nlohmann::json& j, const STNetConfig& cfg);
void from_json(const nlohmann::json& j, STNetConfig& cfg);

}  // namespace thbench::stnet
