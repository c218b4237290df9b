#include "egokd/model.hpp"

#include "egokd/errors.hpp"

namespace egokd {

using nlohmann::json;

std::array<int, 4> ModelConfig::feature_shape() const {
  auto m = Model<float>::build(*this);
  const auto s1 = m.conv1.out_shape(clip_shape());
  const auto s2 = m.conv2.out_shape(s1);
  return m.conv3.out_shape(s2);
}

int ModelConfig::temporal_stride() const {
  const int ft = feature_shape()[1];
  if (ft < 1 || clip_length % ft != 0)
    throw DataError("clip_length not divisible by temporal feature size");
  return clip_length / ft;
}

json ModelConfig::to_json() const {
  return json{{"in_channels", in_channels},
              {"clip_length", clip_length},
              {"height", height},
              {"width", width},
              {"channels", {channels[0], channels[1], channels[2]}},
              {"action_classes", action_classes},
              {"object_classes", object_classes},
              {"map_hidden", map_hidden}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig cfg;
  cfg.in_channels = j.at("in_channels").get<int>();
  cfg.clip_length = j.at("clip_length").get<int>();
  cfg.height = j.at("height").get<int>();
  cfg.width = j.at("width").get<int>();
  cfg.channels = {j.at("channels")[0].get<int>(), j.at("channels")[1].get<int>(),
                  j.at("channels")[2].get<int>()};
  cfg.action_classes = j.at("action_classes").get<int>();
  cfg.object_classes = j.at("object_classes").get<int>();
  cfg.map_hidden = j.at("map_hidden").get<int>();
  return cfg;
}

}  // namespace egokd
