#pragma once

namespace lexeval {

// Parses and dispatches the command line. Returns the process exit code:
// 0 success, 1 usage error, 2 data error, 3 backend error.
int run_cli(int argc, char** argv);

}  // namespace lexeval
