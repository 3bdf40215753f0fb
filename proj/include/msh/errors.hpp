// Exception taxonomy shared by the library and the CLI exit-code mapping.
#pragma once

#include <stdexcept>
#include <string>

namespace msh {

// Bad run configuration: invalid hyperparameters, malformed config file,
// inconsistent regime/model combinations.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem trouble: missing file, unwritable path, short read/write.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// A file that exists but does not parse: bad magic, truncated payload,
// header inconsistent with contents.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Shape/width mismatch between tensors, bitcodes or models.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Operation invoked in an invalid state (e.g. querying a stream session
// before the first clip was pushed).
class StateError : public std::runtime_error {
 public:
  explicit StateError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace msh
