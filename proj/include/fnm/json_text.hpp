#pragma once

#include <string>

#include <json.hpp>

namespace fnm {

// Canonical text form shared by every file the library writes: keys sorted,
// one top-level member per line, and arrays of arrays or objects with one
// element per line. Doubles should be rounded with round_sig9 beforehand.
std::string canonical_json(const nlohmann::json& value);

// Parses JSON, reporting the line and column of a syntax error.
nlohmann::json parse_json(const std::string& text, const std::string& what);

} // namespace fnm
