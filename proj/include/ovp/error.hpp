#pragma once

#include <stdexcept>
#include <string>

namespace ovp {

// Error taxonomy, mapped to CLI exit codes in tools/ovp_main.cpp:
//   ConfigError -> 1, DataError -> 2, NumericError -> 3.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration, usage or parameter values.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Malformed or inconsistent data: containers, datasets, shape mismatches.
struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Non-finite values where finite ones are required (NaN loss, bad inputs).
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

inline void check_config(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}
inline void check_data(bool ok, const std::string& msg) {
  if (!ok) throw DataError(msg);
}

}  // namespace ovp
