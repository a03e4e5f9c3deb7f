#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace zsda {

// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);

// Writes `contents` to a temporary sibling file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace zsda
