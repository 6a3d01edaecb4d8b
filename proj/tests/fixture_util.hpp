#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

inline nlohmann::json load_fixture_json(const std::string& name) {
  const std::string path = std::string(FIXTURES_DIR) + "/" + name;
  std::ifstream f(path);
  if (!f)
    throw std::runtime_error("missing fixture: " + path);
  return nlohmann::json::parse(f);
}

// Oracle values are stored as decimal strings to keep full precision visible.
inline double oracle(const nlohmann::json& j, const std::string& key) {
  return std::stod(j.at(key).get<std::string>());
}
