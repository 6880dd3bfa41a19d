#pragma once

#include <string>
#include <vector>

namespace xmodal {

/// Runs the `xmodal` command line. Returns 0 on success, 1 on validation/config/usage
/// errors, 2 on I/O errors.
int dispatch(const std::vector<std::string>& args);

}  // namespace xmodal
