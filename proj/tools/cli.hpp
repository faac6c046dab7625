#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hail::cli {

// Runs one command; args exclude the program name. Returns the exit status.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hail::cli
