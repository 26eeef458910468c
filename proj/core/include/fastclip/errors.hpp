#pragma once

#include <stdexcept>
#include <string>

namespace fastclip {

// Configuration problems carry the offending key so the CLI can report it
// and exit with the dedicated status code.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error("config key '" + key + "': " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DegenerateBatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class OwnershipViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class StalenessError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class CollectiveShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown out of a collective when another worker failed and the fabric was
// poisoned; the originating exception is rethrown by Fabric::run_workers.
class CollectiveAborted : public std::runtime_error {
 public:
  CollectiveAborted() : std::runtime_error("collective aborted: a peer worker failed") {}
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fastclip
