#pragma once

#include <stdexcept>
#include <string>

namespace memlab {

// Error taxonomy mirrors the CLI exit codes: validation -> 1, runtime -> 2,
// fit -> 3.
struct validation_error : std::runtime_error {
  explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct train_error : std::runtime_error {
  explicit train_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct fit_error : std::runtime_error {
  explicit fit_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace memlab
