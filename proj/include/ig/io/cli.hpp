#pragma once

// In-process entry point behind the infogate binary. Returns the process
// exit code: 0 success, 1 validation/usage error, 2 numerical failure
// (training abort or gradient check above tolerance).

#include <string>
#include <vector>

namespace ig {

int cli_run(const std::vector<std::string>& args);

}  // namespace ig
