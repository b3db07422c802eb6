#pragma once

#include <nlohmann/json.hpp>

#include "examforge/model.hpp"

namespace examforge {

// Wire shapes shared by the HTTP surface, sync changesets and the Python
// bindings.
nlohmann::json to_json(const Question& q);
nlohmann::json to_json(const Course& c);
nlohmann::json to_json(const Concept& c);
nlohmann::json to_json(const PastPaper& p);

}  // namespace examforge
