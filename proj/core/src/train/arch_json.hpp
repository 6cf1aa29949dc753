#pragma once

#include <json.hpp>

#include "hwm/nn/network.hpp"

namespace hwm::train::detail {

inline nlohmann::json arch_json(const nn::Architecture& a) {
  return {{"kind", nn::to_string(a.kind)},
          {"channels", a.channels},
          {"height", a.height},
          {"width", a.width},
          {"hidden", a.hidden},
          {"blocks", a.blocks},
          {"base_channels", a.base_channels},
          {"multipliers", a.multipliers},
          {"embed_hidden", a.embed_hidden},
          {"output_init_scale", a.output_init_scale}};
}

inline nn::Architecture arch_from_json(const nlohmann::json& j) {
  nn::Architecture a;
  a.kind = nn::arch_kind_from_string(j.at("kind").get<std::string>());
  a.channels = j.at("channels").get<std::size_t>();
  a.height = j.at("height").get<std::size_t>();
  a.width = j.at("width").get<std::size_t>();
  a.hidden = j.at("hidden").get<std::size_t>();
  a.blocks = j.at("blocks").get<std::size_t>();
  a.base_channels = j.at("base_channels").get<std::size_t>();
  a.multipliers = j.at("multipliers").get<std::vector<std::size_t>>();
  a.embed_hidden = j.at("embed_hidden").get<std::size_t>();
  a.output_init_scale = j.at("output_init_scale").get<double>();
  return a;
}

}  // namespace hwm::train::detail
