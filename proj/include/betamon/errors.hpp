#pragma once

#include <stdexcept>
#include <string>

namespace betamon {

/// Invalid configuration or arguments supplied by the caller.
class config_error : public std::invalid_argument {
 public:
  explicit config_error(const std::string& what) : std::invalid_argument(what) {}
};

/// A numerical routine could not produce a usable result.
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace betamon
