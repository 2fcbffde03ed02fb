#pragma once

#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace cardioclr::csv {

inline std::vector<std::string> split_fields(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? line.size() - start : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Lines with trailing '\r' stripped; blank lines and '#' comments skipped.
inline std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    out.push_back(line);
  }
  return out;
}

inline std::string join(const std::vector<std::string>& fields, char sep = ',') {
  std::string s;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) s += sep;
    s += fields[i];
  }
  return s;
}

}  // namespace cardioclr::csv
