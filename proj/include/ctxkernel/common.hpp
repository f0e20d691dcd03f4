#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cerrno>
#include <cstdio>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ctxkernel {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntMatrix = Eigen::MatrixXi;
using Index = Eigen::Index;

// Error categories. The CLI maps them onto exit codes (see exit_code()).
enum class ErrorKind {
  MissingFile,
  DimensionMismatch,
  LabelArity,
  BadValue,
  ShapeMismatch,
  NegativeInput,
  OutOfRange,
  DegenerateContext,
  StateMismatch,
  SingleClass,
  NonFinite,
  NoPositives,
  InsufficientNegatives,
  DivergenceDetected,
  CheckpointMismatch,
  IoError,
  Config,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::LabelArity: return "LabelArity";
    case ErrorKind::BadValue: return "BadValue";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NegativeInput: return "NegativeInput";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::DegenerateContext: return "DegenerateContext";
    case ErrorKind::StateMismatch: return "StateMismatch";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NoPositives: return "NoPositives";
    case ErrorKind::InsufficientNegatives: return "InsufficientNegatives";
    case ErrorKind::DivergenceDetected: return "DivergenceDetected";
    case ErrorKind::CheckpointMismatch: return "CheckpointMismatch";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind), detail_(detail) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

// 0 success, 1 usage, 2 data, 3 numerical.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
      return 1;
    case ErrorKind::DegenerateContext:
    case ErrorKind::SingleClass:
    case ErrorKind::NonFinite:
    case ErrorKind::DivergenceDetected:
      return 3;
    default:
      return 2;
  }
}

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::ShapeMismatch, what);
}

// ---------------------------------------------------------------------------
// Logging. Verbosity comes from CTXKERNEL_LOG (error|warn|info|debug).

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline LogLevel& log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("CTXKERNEL_LOG");
    if (env == nullptr) return LogLevel::Warn;
    std::string_view v(env);
    if (v == "error") return LogLevel::Error;
    if (v == "info") return LogLevel::Info;
    if (v == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
  }();
  return level;
}

template <typename... Args>
void log(LogLevel level, const Args&... args) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static constexpr const char* tags[] = {"error", "warn", "info", "debug"};
  std::ostringstream oss;
  oss << "[ctxkernel:" << tags[static_cast<int>(level)] << "] ";
  (oss << ... << args);
  oss << '\n';
  std::cerr << oss.str();
}

// ---------------------------------------------------------------------------
// Little-endian binary helpers.

namespace binary {

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  os.write(reinterpret_cast<const char*>(buf), 8);
}

inline void write_f64(std::ostream& os, double v) { write_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) throw Error(ErrorKind::IoError, "unexpected end of file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

inline void write_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), static_cast<std::streamsize>(magic.size())); }

inline bool read_magic(std::istream& is, std::string_view magic) {
  std::string buf(magic.size(), '\0');
  if (!is.read(buf.data(), static_cast<std::streamsize>(buf.size()))) return false;
  return buf == magic;
}

}  // namespace binary

// Shortest decimal form that reloads to the same double.
inline std::string format_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s, const std::string& context) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE) throw Error(ErrorKind::BadValue, context + ": not a number '" + s + "'");
  return v;
}

inline long long parse_int(const std::string& s, const std::string& context) {
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE) throw Error(ErrorKind::BadValue, context + ": not an integer '" + s + "'");
  return v;
}

}  // namespace ctxkernel
