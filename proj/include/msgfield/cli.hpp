#pragma once

#include <string>
#include <vector>

namespace msgfield {

// Entry point behind the msgfield binary: args are argv-style including the
// program name. Returns the process exit code: 0 success, 1 manipulation
// failure, 2 unreadable/unparseable input or bad flags, 3 domain errors
// (invalid scenes, conflicting labels, unknown operations, ...).
int run_cli(const std::vector<std::string>& args);

}  // namespace msgfield
