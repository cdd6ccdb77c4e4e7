#pragma once

#include <stdexcept>
#include <string>

namespace deskbert {

// Bad user input: malformed files, invalid configuration, out-of-range ids.
// The CLI maps these to exit code 1.
class UserError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A broken internal contract (non-finite loss, failed gradient check, plan
// targeting a special token). The CLI maps these to exit code 2.
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace deskbert
