#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace unitdiff::io {

// %.17g: enough digits for a bit-faithful double round trip.
std::string format_double(double value);

std::string read_file(const std::filesystem::path& path);

// Writes via a temporary sibling and renames, so a failed write never
// leaves a partial file at `path`.
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace unitdiff::io
