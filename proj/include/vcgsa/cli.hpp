#pragma once

#include <string>
#include <vector>

namespace vcgsa {

// Entry point shared by the binary and in-process tests. args excludes the
// program name. Returns the process exit code: 0 success, 2 validation
// error, 3 numeric failure.
int run_cli(const std::vector<std::string>& args);

} // namespace vcgsa
