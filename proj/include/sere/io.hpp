#pragma once

#include <string>

namespace sere {

/// Shortest-roundtrip decimal rendering ('.' decimal separator, locale
/// independent). All CSV output goes through this so files are byte-stable
/// across runs.
std::string format_double(double v);

/// Writes a whole text/binary blob atomically (temp file + rename).
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

}  // namespace sere
