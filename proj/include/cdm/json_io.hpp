#pragma once

#include "json.hpp"

#include <string>

namespace cdm {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Reads and parses a JSON document; throws FormatError on I/O or parse failure.
Json read_json_file(const std::string& path);
/// Writes with two-space indentation and a trailing newline (byte-stable).
void write_json_file(const std::string& path, const Json& doc);

/// Rejects documents whose schema_version is missing or newer than ours.
void check_schema(const Json& doc, const std::string& what);

}  // namespace cdm
