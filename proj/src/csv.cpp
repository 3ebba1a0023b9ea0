#include "engage/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "engage/error.hpp"

namespace engage::csv {
namespace {

// Returns false at end of input. `fields` receives one parsed record.
bool read_record(std::istream& in, char delim, std::vector<std::string>& fields) {
  fields.clear();
  int c = in.get();
  if (c == EOF) return false;
  std::string field;
  bool quoted = false;
  while (true) {
    if (c == EOF) {
      fields.push_back(std::move(field));
      return true;
    }
    char ch = static_cast<char>(c);
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get();
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"' && field.empty()) {
      quoted = true;
    } else if (ch == delim) {
      fields.push_back(std::move(field));
      field.clear();
    } else if (ch == '\n') {
      fields.push_back(std::move(field));
      return true;
    } else if (ch == '\r') {
      if (in.peek() == '\n') in.get();
      fields.push_back(std::move(field));
      return true;
    } else {
      field.push_back(ch);
    }
    c = in.get();
  }
}

bool needs_quotes(std::string_view s, char delim) {
  for (char c : s)
    if (c == delim || c == '"' || c == '\n' || c == '\r') return true;
  return !s.empty() && (s.front() == ' ' || s.back() == ' ' || s.front() == '#');
}

}  // namespace

std::optional<std::size_t> Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  return std::nullopt;
}

Table read(std::istream& in, char delim, bool comments) {
  Table t;
  if (comments) {
    while (in.peek() == '#') {
      std::string line;
      std::getline(in, line);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      auto start = line.find_first_not_of("# ");
      t.comments.push_back(start == std::string::npos ? "" : line.substr(start));
    }
  }
  std::vector<std::string> fields;
  if (!read_record(in, delim, fields)) return t;
  if (!fields.empty() && fields[0].size() >= 3 && fields[0].compare(0, 3, "\xEF\xBB\xBF") == 0)
    fields[0].erase(0, 3);
  t.header = std::move(fields);
  while (read_record(in, delim, fields)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    t.rows.push_back(fields);
  }
  return t;
}

Table read_file(const std::filesystem::path& path, char delim, bool comments) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::missing_artifact, "cannot open " + path.string());
  return read(in, delim, comments);
}

void write_row(std::ostream& out, std::span<const std::string> fields, char delim) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << delim;
    const std::string& f = fields[i];
    if (needs_quotes(f, delim)) {
      out << '"';
      for (char c : f) {
        if (c == '"') out << '"';
        out << c;
      }
      out << '"';
    } else {
      out << f;
    }
  }
  out << '\n';
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

double to_double(std::string_view s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw Error(Errc::io_error, "not a number: '" + std::string(s) + "'");
  return v;
}

long long to_int(std::string_view s) {
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw Error(Errc::io_error, "not an integer: '" + std::string(s) + "'");
  return v;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(Errc::io_error, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace engage::csv
