#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

namespace stackvet {

using Json = nlohmann::json;

/// Number rounded to 9 significant digits, so dumps are short and stable.
Json json_number(double value);

/// Sorted keys (nlohmann's default object map), 2-space indent, trailing newline.
std::string canonical_dump(const Json& doc);

std::uint64_t fnv1a64(std::string_view bytes);

/// Writes `text` to `path` via a temporary sibling and rename.
void write_text_file(const std::filesystem::path& path, const std::string& text);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace stackvet
