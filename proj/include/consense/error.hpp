#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace consense {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments to an operation (bad topology, out-of-range parameter, ...).
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Configuration or input-file error; carries the source location.
class ConfigError : public Error {
public:
  ConfigError(std::string file, std::size_t line, const std::string& what)
      : Error(format(file, line, what)), file_(std::move(file)), line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

private:
  static std::string format(const std::string& file, std::size_t line, const std::string& what) {
    std::string out = file;
    if (line > 0) out += ":" + std::to_string(line);
    return out + ": " + what;
  }

  std::string file_;
  std::size_t line_;
};

}  // namespace consense
