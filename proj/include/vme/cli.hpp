// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vme {

/// Runs the `vme` command line. args[0] is the program name. Returns the
/// process exit code: 0 ok, 1 usage, 2 data or integrity, 3 external service.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vme
