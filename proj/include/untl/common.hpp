#pragma once

#include <stdexcept>
#include <string>

namespace untl {

// Training / evaluation modes. `plain` is the transfer baseline (task loss
// only); the other three add the non-transfer terms and, for the key modes,
// the recovery mechanism.
enum class Mode { plain, untl, prompt, adapter };

const char* mode_name(Mode m);
Mode parse_mode(const std::string& name);  // throws ValidationError

// Bad user input: config files, corpus files, checkpoints, CLI arguments.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unrecoverable runtime failure: divergent training, broken state, IO loss.
struct RuntimeAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace untl
