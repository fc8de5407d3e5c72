#pragma once

#include <string>

namespace poison {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace poison
