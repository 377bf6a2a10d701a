#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lesionmap {

class ConfigSyntaxError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::string trim(const std::string& s);

/// Parses `key = value` lines in order. Blank lines and lines starting
/// with '#' are skipped; anything else without '=' is a syntax error.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text);

}  // namespace lesionmap
