#pragma once

#include <stdexcept>
#include <string>

namespace vsseg {

// Problems with user-supplied inputs (files, configs, arguments). The CLI maps
// these to exit status 1; anything else escaping is an internal error (2).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public InputError {
 public:
  using InputError::InputError;
};

class CheckpointError : public InputError {
 public:
  enum class Kind { version_mismatch, wrong_kind, corrupt };
  CheckpointError(Kind kind, const std::string& what) : InputError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace vsseg
