#ifndef CTPP_COMMON_HPP
#define CTPP_COMMON_HPP

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>

namespace ctpp {

// Error categories surface as a "<category>: <detail>" message so the CLI can
// emit one machine-parseable line.
struct Error : std::runtime_error {
  Error(const std::string& category, const std::string& detail)
      : std::runtime_error(category + ": " + detail) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& d) : Error("parse", d) {}
};
struct ValidationError : Error {
  explicit ValidationError(const std::string& d) : Error("validation", d) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& d) : Error("config", d) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& d) : Error("numeric", d) {}
};
struct IoError : Error {
  explicit IoError(const std::string& d) : Error("io", d) {}
};

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derives independent rng streams from a master seed. Streams are keyed by a
// purpose tag plus up to two indices so that, e.g., evaluation of event k of
// sequence j is reproducible regardless of processing order.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t purpose,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t s = splitmix64(master ^ splitmix64(purpose));
  s = splitmix64(s ^ splitmix64(a + 0x51ed270b5a3cd9c3ull));
  s = splitmix64(s ^ splitmix64(b + 0xd6e8feb86659fd93ull));
  return s;
}

namespace seed_tag {
inline constexpr std::uint64_t model_init = 1;
inline constexpr std::uint64_t pool_init = 2;
inline constexpr std::uint64_t train = 3;
inline constexpr std::uint64_t mc = 4;
inline constexpr std::uint64_t predict = 5;
inline constexpr std::uint64_t data = 6;
inline constexpr std::uint64_t perm_test = 7;
}  // namespace seed_tag

// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace ctpp

#endif  // CTPP_COMMON_HPP
