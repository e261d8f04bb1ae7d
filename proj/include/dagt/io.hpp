#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "dagt/errors.hpp"

namespace dagt {

// Shortest round-trippable decimal form.
inline std::string format_full(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// Scientific notation with 17 significant digits, used for run records.
inline std::string format_sci(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.16e", x);
  return buf;
}

inline std::vector<std::string> split_fields(const std::string& line,
                                             char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline double parse_double_field(const std::string& field,
                                 const std::string& source, std::size_t row) {
  const char* begin = field.c_str();
  char* end = nullptr;
  double value = std::strtod(begin, &end);
  while (end && *end == ' ') ++end;
  if (end == begin || (end && *end != '\0')) {
    throw ParseError(source + ": row " + std::to_string(row) +
                     ": cannot parse '" + field + "' as a number");
  }
  return value;
}

inline std::vector<double> split_doubles(const std::string& line,
                                         const std::string& source,
                                         std::size_t row) {
  std::vector<double> out;
  for (const auto& field : split_fields(line)) {
    out.push_back(parse_double_field(field, source, row));
  }
  return out;
}

}  // namespace dagt
