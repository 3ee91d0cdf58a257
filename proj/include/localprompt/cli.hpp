#pragma once
// Command-line front end: gen, train, score, eval, sweep.
//
// Every command writes a run manifest (key=value lines) before doing any
// work, marks it status=running, and rewrites it with status=ok or
// status=failed plus the error on exit.
#include <iosfwd>
#include <string>
#include <vector>

namespace lp {

inline constexpr const char* kVersion = "1.0.0";

// args excludes the program name. Returns the process exit code: 0 on
// success, 1 on a module error, 2 on a usage error. Errors are reported as a
// single line "error: <CodeName>: <message>" on err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lp
