#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "cgdt/data/trajectory.hpp"
#include "cgdt/diff/tensor.hpp"

// Checkpoint file: one JSON document with the model kind, the config echo,
// metadata and a flat list of {name, shape, values} parameter records.
namespace cgdt::models {

inline constexpr const char* kCheckpointFormat = "cgdt-checkpoint-v1";

nlohmann::json parameters_to_json(const diff::ParameterSet& params);
/// Names, order and shapes must match exactly.
void parameters_from_json(const nlohmann::json& j, diff::ParameterSet& params);

nlohmann::json action_space_to_json(const data::ActionSpace& space);
data::ActionSpace action_space_from_json(const nlohmann::json& j);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

/// Reads the "model" field of a checkpoint ("policy" or "critic").
std::string checkpoint_kind(const nlohmann::json& j);

}  // namespace cgdt::models
