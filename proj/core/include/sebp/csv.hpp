#pragma once

#include <string>

namespace sebp::csv {

/// Shortest decimal representation that round-trips the double exactly.
std::string format_double(double value);

std::string format_int(long long value);

} // namespace sebp::csv
