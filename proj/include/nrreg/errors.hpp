#pragma once

#include <stdexcept>
#include <string>

namespace nrreg {

// Precondition or shape violation on a public operation.
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed text input (OFF meshes, xyz clouds, manifests, config files).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed binary input (checkpoints).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Singular or otherwise unsolvable fit (duplicate TPS controls etc).
class FitError : public std::runtime_error {
 public:
  explicit FitError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace nrreg
