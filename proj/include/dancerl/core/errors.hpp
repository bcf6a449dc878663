#pragma once

#include <stdexcept>
#include <string>

namespace dancerl {

// Shape or precondition violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed data handed to an operation (bad targets, odd token counts, ...).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation called in a state where it is not allowed (e.g. stepping a finished episode).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training diverged (NaN/Inf loss).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DANCERL_REQUIRE(cond, Err, msg)     \
  do {                                      \
    if (!(cond)) throw Err(std::string(msg)); \
  } while (0)

}  // namespace dancerl
