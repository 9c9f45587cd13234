#pragma once
#include <ostream>
#include <string>
#include <vector>

namespace nf {

// Runs one CLI command; argv without the program name. Reports go to `out`,
// usage errors to `err`. Exit codes: 0 success, 2 usage/definition error,
// 3 domain error or obstruction result, 1 internal failure. Output is
// byte-identical for identical argv and tool version.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nf
