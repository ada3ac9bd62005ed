#include "cgdt/models/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace cgdt::models {

using nlohmann::json;

json parameters_to_json(const diff::ParameterSet& params) {
  json out = json::array();
  for (const auto& t : params.tensors()) {
    out.push_back(json{{"name", t.name()}, {"shape", t.shape()}, {"values", t.data()}});
  }
  return out;
}

void parameters_from_json(const json& j, diff::ParameterSet& params) {
  if (!j.is_array() || j.size() != params.tensors().size()) {
    throw std::invalid_argument("checkpoint has " + std::to_string(j.is_array() ? j.size() : 0) +
                                " parameters, model expects " + std::to_string(params.tensors().size()));
  }
  for (std::size_t i = 0; i < j.size(); ++i) {
    auto& t = params.tensors()[i];
    const auto& rec = j[i];
    const auto name = rec.at("name").get<std::string>();
    if (name != t.name()) throw std::invalid_argument("checkpoint parameter '" + name + "' where '" + t.name() + "' expected");
    const auto shape = rec.at("shape").get<diff::Shape>();
    if (shape != t.shape()) {
      throw std::invalid_argument("checkpoint parameter '" + name + "' has shape " + diff::to_string(shape) +
                                  ", model expects " + diff::to_string(t.shape()));
    }
    auto values = rec.at("values").get<std::vector<double>>();
    if (values.size() != t.numel()) throw std::invalid_argument("checkpoint parameter '" + name + "' has wrong size");
    t.data() = std::move(values);
  }
}

json action_space_to_json(const data::ActionSpace& space) {
  if (space.discrete) return json{{"type", "discrete"}, {"n", space.n}};
  return json{{"type", "box"}, {"dim", space.dim}, {"low", space.low}, {"high", space.high}};
}

data::ActionSpace action_space_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "discrete") return data::ActionSpace::discrete_space(j.at("n").get<std::size_t>());
  if (type == "box") {
    return data::ActionSpace::box(j.at("dim").get<std::size_t>(), j.at("low").get<double>(), j.at("high").get<double>());
  }
  throw std::invalid_argument("unknown action space type '" + type + "'");
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::string checkpoint_kind(const json& j) {
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat) {
    throw std::invalid_argument("not a cgdt checkpoint");
  }
  return j.at("model").get<std::string>();
}

}  // namespace cgdt::models
