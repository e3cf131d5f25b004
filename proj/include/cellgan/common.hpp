#pragma once

#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace cellgan {

// Exit-code conventions used by the CLI.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;  // exit 1
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;  // exit 2
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;  // exit 3
};
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline std::string strfmt(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  char buf[1024];
  vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return std::string(buf);
}

// Fixed-format float printing so CSV/JSON outputs are byte-stable across runs.
inline std::string fmt_real(double x) { return strfmt("%.9g", x); }

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace cellgan
