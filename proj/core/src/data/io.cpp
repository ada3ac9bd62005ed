#include "cgdt/data/io.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

namespace cgdt::data {

using nlohmann::json;

DatasetParseError::DatasetParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

namespace {

json to_json(const Trajectory& t) {
  json actions = json::array();
  for (const auto& a : t.actions) {
    if (a.is_discrete()) {
      actions.push_back(a.index());
    } else {
      actions.push_back(a.values());
    }
  }
  return json{{"states", t.states}, {"actions", std::move(actions)}, {"rewards", t.rewards}};
}

std::vector<double> number_list(const json& j, const char* what) {
  if (!j.is_array()) throw std::invalid_argument(std::string(what) + " must be an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw std::invalid_argument(std::string(what) + " must contain only numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

Trajectory from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "states" && key != "actions" && key != "rewards") {
      throw std::invalid_argument("unknown field '" + key + "'");
    }
  }
  for (const char* key : {"states", "actions", "rewards"}) {
    if (!j.contains(key)) throw std::invalid_argument(std::string("missing field '") + key + "'");
    if (!j.at(key).is_array()) throw std::invalid_argument(std::string("field '") + key + "' must be an array");
  }
  Trajectory t;
  for (const auto& s : j.at("states")) t.states.push_back(number_list(s, "state"));
  for (const auto& a : j.at("actions")) {
    if (a.is_number_integer()) {
      t.actions.push_back(Action::discrete(a.get<int>()));
    } else if (a.is_array()) {
      t.actions.push_back(Action::continuous(number_list(a, "action")));
    } else {
      throw std::invalid_argument("action must be an integer or an array of numbers");
    }
  }
  t.rewards = number_list(j.at("rewards"), "rewards");
  if (t.states.size() != t.rewards.size() || t.actions.size() != t.rewards.size()) {
    throw std::invalid_argument("field arity mismatch: " + std::to_string(t.states.size()) + " states, " +
                                std::to_string(t.actions.size()) + " actions, " + std::to_string(t.rewards.size()) +
                                " rewards");
  }
  t.validate();
  return t;
}

}  // namespace

void write_jsonl(const Dataset& dataset, std::ostream& out) {
  for (const auto& t : dataset) out << to_json(t).dump() << '\n';
}

Dataset read_jsonl(std::istream& in) {
  Dataset out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DatasetParseError(line_no, e.what());
    } catch (const std::invalid_argument& e) {
      throw DatasetParseError(line_no, e.what());
    }
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_jsonl(dataset, out);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file " + path.string());
  return read_jsonl(in);
}

}  // namespace cgdt::data
