#pragma once

#include <filesystem>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "cgdt/data/trajectory.hpp"

namespace cgdt::data {

class DatasetParseError : public std::runtime_error {
 public:
  DatasetParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// JSON Lines, one trajectory per line:
//   {"states": [[f64, ...], ...], "actions": [int | [f64, ...], ...], "rewards": [f64, ...]}
void write_jsonl(const Dataset& dataset, std::ostream& out);
Dataset read_jsonl(std::istream& in);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace cgdt::data
