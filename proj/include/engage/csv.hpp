#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace engage::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// Leading `# ...` lines (artifact provenance), without the marker.
  std::vector<std::string> comments;

  std::optional<std::size_t> column(std::string_view name) const;
};

/// RFC 4180-style reader: quoted fields may contain the delimiter, doubled
/// quotes and newlines. With `comments` set, leading lines starting with '#'
/// are collected instead of being treated as the header.
Table read(std::istream& in, char delim = ',', bool comments = false);
Table read_file(const std::filesystem::path& path, char delim = ',', bool comments = false);

void write_row(std::ostream& out, std::span<const std::string> fields, char delim = ',');

/// Shortest representation that parses back to the same double.
std::string fmt(double v);
double to_double(std::string_view s);
long long to_int(std::string_view s);

/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace engage::csv
